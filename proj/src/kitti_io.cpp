#include "ebm3d/kitti_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "ebm3d/binary_io.hpp"
#include "ebm3d/error.hpp"

namespace ebm3d {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
    if (end > pos) fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, long line_no, const char* name) {
  T value{};
  const char* first = field.data();
  const char* last = first + field.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorCategory::Parse,
                "line " + std::to_string(line_no) + ": bad " + name + " value '" + std::string(field) + "'", line_no);
  }
  return value;
}

void append_fixed(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), " %.6f", v);
  out += buf;
}

}  // namespace

std::vector<KittiLabel> parse_label_file(std::string_view text) {
  std::vector<KittiLabel> labels;
  long line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    if (f.size() != 15 && f.size() != 16) {
      throw Error(ErrorCategory::Parse,
                  "line " + std::to_string(line_no) + ": expected 15 or 16 fields, got " + std::to_string(f.size()),
                  line_no);
    }
    KittiLabel k;
    k.type = std::string(f[0]);
    k.truncated = parse_number<double>(f[1], line_no, "truncated");
    k.occluded = parse_number<int>(f[2], line_no, "occluded");
    k.alpha = parse_number<double>(f[3], line_no, "alpha");
    for (int b = 0; b < 4; ++b) k.bbox[b] = parse_number<double>(f[4 + b], line_no, "bbox");
    k.h = parse_number<double>(f[8], line_no, "height");
    k.w = parse_number<double>(f[9], line_no, "width");
    k.l = parse_number<double>(f[10], line_no, "length");
    k.x = parse_number<double>(f[11], line_no, "location");
    k.y = parse_number<double>(f[12], line_no, "location");
    k.z = parse_number<double>(f[13], line_no, "location");
    k.rotation_y = parse_number<double>(f[14], line_no, "rotation_y");
    if (f.size() == 16) k.score = parse_number<double>(f[15], line_no, "score");
    labels.push_back(std::move(k));
  }
  return labels;
}

std::vector<KittiLabel> read_label_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_label_file(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const Error& e) {
    throw Error(e.category(), path + ": " + e.what(), e.index());
  }
}

std::string write_label_file(std::span<const KittiLabel> labels) {
  std::string out;
  for (const KittiLabel& k : labels) {
    out += k.type;
    append_fixed(out, k.truncated);
    out += " " + std::to_string(k.occluded);
    append_fixed(out, k.alpha);
    for (double b : k.bbox) append_fixed(out, b);
    for (double v : {k.h, k.w, k.l, k.x, k.y, k.z, k.rotation_y}) append_fixed(out, v);
    if (k.score) append_fixed(out, *k.score);
    out += '\n';
  }
  return out;
}

std::string write_result_file(std::span<const KittiLabel> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].score) {
      throw Error(ErrorCategory::Input, "result entry " + std::to_string(i) + " has no score", static_cast<long>(i));
    }
  }
  return write_label_file(labels);
}

void write_text_file(const std::string& path, std::string_view text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Box3D to_box3d(const KittiLabel& label) {
  if (!label.evaluable()) throw Error(ErrorCategory::Input, "DontCare labels have no 3D box");
  if (!(label.h > 0.0 && label.w > 0.0 && label.l > 0.0)) {
    throw Error(ErrorCategory::Input, "label of type " + label.type + " has non-positive dimensions");
  }
  Box3D box;
  box.cx = label.z;
  box.cy = -label.x;
  box.cz = -label.y + 0.5 * label.h;
  box.h = label.h;
  box.w = label.w;
  box.l = label.l;
  box.phi = wrap_angle(-label.rotation_y - 0.5 * kPi);
  return box;
}

KittiLabel from_box3d(const Box3D& box, const std::string& type, std::optional<double> score) {
  KittiLabel k;
  k.type = type;
  k.h = box.h;
  k.w = box.w;
  k.l = box.l;
  k.x = -box.cy;
  k.y = -(box.cz - 0.5 * box.h);
  k.z = box.cx;
  k.rotation_y = wrap_angle(-box.phi - 0.5 * kPi);
  k.alpha = wrap_angle(k.rotation_y - std::atan2(k.x, k.z));
  k.score = score;
  return k;
}

GroundTruth to_ground_truth(const KittiLabel& label) {
  GroundTruth gt{to_box3d(label), std::nullopt};
  gt.difficulty = DifficultyInfo{label.bbox[3] - label.bbox[1], label.occluded, label.truncated};
  return gt;
}

}  // namespace ebm3d
