#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ebm3d/scene.hpp"

namespace ebm3d {

// One object line of a KITTI label (15 fields) or result (16 fields) file.
// Location is in camera coordinates with y pointing down; (x, y, z) is the
// bottom center of the box.
struct KittiLabel {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox{};  // left, top, right, bottom
  double h = 0.0, w = 0.0, l = 0.0;
  double x = 0.0, y = 0.0, z = 0.0;
  double rotation_y = 0.0;
  std::optional<double> score;

  bool evaluable() const { return type != "DontCare"; }
  bool operator==(const KittiLabel&) const = default;
};

// Throws Parse with the 1-based line number on a malformed line.
std::vector<KittiLabel> parse_label_file(std::string_view text);
std::vector<KittiLabel> read_label_file(const std::string& path);

// Writes 15 fields per line, or 16 when the label carries a score.
std::string write_label_file(std::span<const KittiLabel> labels);
// Every label must carry a score.
std::string write_result_file(std::span<const KittiLabel> labels);
void write_text_file(const std::string& path, std::string_view text);

// Camera frame to world frame: cx = z, cy = -x, cz = -y + h / 2,
// phi = -rotation_y - pi / 2 wrapped to [-pi, pi).
Box3D to_box3d(const KittiLabel& label);
KittiLabel from_box3d(const Box3D& box, const std::string& type = "Car", std::optional<double> score = std::nullopt);

GroundTruth to_ground_truth(const KittiLabel& label);

}  // namespace ebm3d
