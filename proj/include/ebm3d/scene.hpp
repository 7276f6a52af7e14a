#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ebm3d/feature_grid.hpp"
#include "ebm3d/geometry.hpp"

namespace ebm3d {

struct Detection {
  Box3D box;
  double score = 0.5;  // in (0, 1)
};

// KITTI difficulty metadata of a ground-truth object.
struct DifficultyInfo {
  double height_px = 0.0;  // 2D box height in the image
  int occlusion = 0;       // 0..3
  double truncation = 0.0; // [0, 1]
};

struct GroundTruth {
  Box3D box;
  std::optional<DifficultyInfo> difficulty;
};

// Everything that flows through train / refine / eval for one scene: the
// backbone feature map, the annotations and the detector's initial boxes.
struct Scene {
  std::string id;
  FeatureGrid grid;
  std::vector<GroundTruth> gts;
  std::vector<Detection> initial_dets;
};

// Random-access collection of scenes. Implementations may materialize
// scenes lazily so large datasets need not be held in memory at once.
class SceneSource {
 public:
  virtual ~SceneSource() = default;
  virtual std::size_t size() const = 0;
  virtual Scene get(std::size_t index) const = 0;
};

class InMemorySceneSource : public SceneSource {
 public:
  explicit InMemorySceneSource(std::vector<Scene> scenes) : scenes_(std::move(scenes)) {}
  std::size_t size() const override { return scenes_.size(); }
  Scene get(std::size_t index) const override { return scenes_.at(index); }
  const std::vector<Scene>& scenes() const { return scenes_; }

 private:
  std::vector<Scene> scenes_;
};

}  // namespace ebm3d
