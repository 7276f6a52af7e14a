#include "ebm3d/pooling.hpp"

#include <cmath>
#include <string>

#include "ebm3d/error.hpp"

namespace ebm3d {

void PoolConfig::validate() const {
  if (grid_w < 1 || grid_l < 1) throw Error(ErrorCategory::Config, "pooling grid must be at least 1x1");
}

std::vector<PoolPoint> grid_points(const BoxBEV& box, const PoolConfig& cfg) {
  cfg.validate();
  const double phi = reduce_angle(box.phi);
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  std::vector<PoolPoint> points;
  points.reserve(cfg.points());
  for (int j = 0; j < cfg.grid_l; ++j) {
    const double u = (j + 0.5) / cfg.grid_l - 0.5;
    for (int i = 0; i < cfg.grid_w; ++i) {
      const double v = (i + 0.5) / cfg.grid_w - 0.5;
      const double along = u * box.l;
      const double across = v * box.w;
      PoolPoint p;
      p.world = {box.cx + c * along - s * across, box.cy + s * along + c * across};
      // Columns: cx, cy, w, l, phi.
      p.d_x = {1.0, 0.0, -s * v, c * u, -s * along - c * across};
      p.d_y = {0.0, 1.0, c * v, s * u, c * along - s * across};
      points.push_back(p);
    }
  }
  return points;
}

PooledFeature pool_bev(const FeatureGrid& grid, const BoxBEV& box, const PoolConfig& cfg, bool with_grad) {
  const std::vector<PoolPoint> points = grid_points(box, cfg);
  const int channels = grid.channels();
  const double inv_res = 1.0 / grid.res();
  PooledFeature out;
  out.h4.assign(points.size() * channels, 0.0);
  if (with_grad) out.grad.assign(out.h4.size() * BoxBEV::kDims, 0.0);
  std::vector<double> d_qx(channels), d_qy(channels);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const Vec2 q = grid.world_to_grid(points[p].world);
    std::span<double> value(out.h4.data() + p * channels, channels);
    if (!with_grad) {
      grid.bilinear(q, value);
      continue;
    }
    grid.bilinear_grad(q, value, d_qx, d_qy);
    for (int ch = 0; ch < channels; ++ch) {
      double* row = out.grad.data() + (p * channels + ch) * BoxBEV::kDims;
      const double gx = d_qx[ch] * inv_res;
      const double gy = d_qy[ch] * inv_res;
      for (int k = 0; k < BoxBEV::kDims; ++k) row[k] = gx * points[p].d_x[k] + gy * points[p].d_y[k];
    }
  }
  return out;
}

std::vector<double> assemble_h5(std::span<const double> h4, std::span<const double> g_cz, std::span<const double> g_h,
                                std::size_t expected_h4, std::size_t expected_enc) {
  if (h4.size() != expected_h4 || g_cz.size() != expected_enc || g_h.size() != expected_enc) {
    throw Error(ErrorCategory::Config, "h5 assembly: got lengths " + std::to_string(h4.size()) + "+" +
                                           std::to_string(g_cz.size()) + "+" + std::to_string(g_h.size()) +
                                           ", expected " + std::to_string(expected_h4) + "+" +
                                           std::to_string(expected_enc) + "+" + std::to_string(expected_enc));
  }
  std::vector<double> h5;
  h5.reserve(h4.size() + g_cz.size() + g_h.size());
  h5.insert(h5.end(), h4.begin(), h4.end());
  h5.insert(h5.end(), g_cz.begin(), g_cz.end());
  h5.insert(h5.end(), g_h.begin(), g_h.end());
  return h5;
}

}  // namespace ebm3d
