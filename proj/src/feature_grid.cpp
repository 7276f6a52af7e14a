#include "ebm3d/feature_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ebm3d/error.hpp"

namespace ebm3d {

FeatureGrid::FeatureGrid(int width, int length, int channels, double origin_x, double origin_y, double res,
                         std::vector<double> data)
    : width_(width),
      length_(length),
      channels_(channels),
      origin_x_(origin_x),
      origin_y_(origin_y),
      res_(res),
      data_(std::move(data)) {
  if (width < 2 || length < 2 || channels < 1) {
    throw Error(ErrorCategory::Config, "feature grid needs W >= 2, L >= 2, C >= 1");
  }
  if (!(res > 0.0)) throw Error(ErrorCategory::Config, "feature grid resolution must be positive");
  const std::size_t expected = static_cast<std::size_t>(width) * length * channels;
  if (data_.size() != expected) {
    throw Error(ErrorCategory::Config, "feature grid payload has " + std::to_string(data_.size()) +
                                           " values, expected " + std::to_string(expected));
  }
}

FeatureGrid::FeatureGrid(int width, int length, int channels, double origin_x, double origin_y, double res)
    : FeatureGrid(width, length, channels, origin_x, origin_y, res,
                  std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) * std::max(length, 0) *
                                          std::max(channels, 0),
                                      0.0)) {}

void FeatureGrid::check_finite() const {
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k])) {
      throw Error(ErrorCategory::Numeric, "non-finite feature grid value", static_cast<long>(k));
    }
  }
}

template <bool kWithGrad>
void FeatureGrid::interpolate(Vec2 q, std::span<double> out, std::span<double> d_qx,
                              std::span<double> d_qy) const {
  std::fill(out.begin(), out.end(), 0.0);
  if constexpr (kWithGrad) {
    std::fill(d_qx.begin(), d_qx.end(), 0.0);
    std::fill(d_qy.begin(), d_qy.end(), 0.0);
  }
  const double fx_floor = std::floor(q.x);
  const double fy_floor = std::floor(q.y);
  // Anything beyond one cell outside has no in-grid neighbours.
  if (fx_floor < -1.0 || fx_floor > width_ - 1 || fy_floor < -1.0 || fy_floor > length_ - 1) return;
  const int i0 = static_cast<int>(fx_floor);
  const int j0 = static_cast<int>(fy_floor);
  const double tx = q.x - fx_floor;
  const double ty = q.y - fy_floor;

  // Corner values, or null outside the grid (zero padding).
  auto corner = [&](int i, int j) -> const double* {
    if (i < 0 || i >= width_ || j < 0 || j >= length_) return nullptr;
    return data_.data() + index(i, j, 0);
  };
  const double* v00 = corner(i0, j0);
  const double* v10 = corner(i0 + 1, j0);
  const double* v01 = corner(i0, j0 + 1);
  const double* v11 = corner(i0 + 1, j0 + 1);
  auto at = [](const double* v, int c) { return v ? v[c] : 0.0; };
  for (int c = 0; c < channels_; ++c) {
    const double a = at(v00, c), b = at(v10, c), d = at(v01, c), e = at(v11, c);
    out[c] = (1.0 - tx) * (1.0 - ty) * a + tx * (1.0 - ty) * b + (1.0 - tx) * ty * d + tx * ty * e;
    if constexpr (kWithGrad) {
      // Differences first, so a locally constant field has an exactly zero slope.
      d_qx[c] = (1.0 - ty) * (b - a) + ty * (e - d);
      d_qy[c] = (1.0 - tx) * (d - a) + tx * (e - b);
    }
  }
}

void FeatureGrid::bilinear(Vec2 q, std::span<double> out) const { interpolate<false>(q, out, {}, {}); }

void FeatureGrid::bilinear_grad(Vec2 q, std::span<double> out, std::span<double> d_qx,
                                std::span<double> d_qy) const {
  interpolate<true>(q, out, d_qx, d_qy);
}

}  // namespace ebm3d
