#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ebm3d/geometry.hpp"

namespace ebm3d {

// Dense W x L x C bird's-eye-view feature map. Index i runs along world x,
// j along world y. Storage is channels innermost, then L, then W.
// (origin_x, origin_y) is the world position of the center of cell (0, 0).
class FeatureGrid {
 public:
  FeatureGrid(int width, int length, int channels, double origin_x, double origin_y, double res,
              std::vector<double> data);
  FeatureGrid(int width, int length, int channels, double origin_x, double origin_y, double res);

  int width() const { return width_; }
  int length() const { return length_; }
  int channels() const { return channels_; }
  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  double res() const { return res_; }

  std::size_t index(int i, int j, int c) const {
    return (static_cast<std::size_t>(i) * length_ + j) * channels_ + c;
  }
  double at(int i, int j, int c) const { return data_[index(i, j, c)]; }
  double& at(int i, int j, int c) { return data_[index(i, j, c)]; }
  std::span<const double> cell(int i, int j) const { return {data_.data() + index(i, j, 0), std::size_t(channels_)}; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Vec2 world_to_grid(Vec2 p) const { return {(p.x - origin_x_) / res_, (p.y - origin_y_) / res_}; }
  Vec2 grid_to_world(Vec2 q) const { return {origin_x_ + q.x * res_, origin_y_ + q.y * res_}; }

  // Bilinear interpolation with zero padding outside the grid. `out` has
  // channels() entries.
  void bilinear(Vec2 q, std::span<double> out) const;

  // Same value as bilinear() plus d value / d q_x and d value / d q_y. On cell
  // boundaries the right-sided derivative is returned.
  void bilinear_grad(Vec2 q, std::span<double> out, std::span<double> d_qx, std::span<double> d_qy) const;

  // Throws on any non-finite entry.
  void check_finite() const;

 private:
  template <bool kWithGrad>
  void interpolate(Vec2 q, std::span<double> out, std::span<double> d_qx, std::span<double> d_qy) const;

  int width_;
  int length_;
  int channels_;
  double origin_x_;
  double origin_y_;
  double res_;
  std::vector<double> data_;
};

}  // namespace ebm3d
