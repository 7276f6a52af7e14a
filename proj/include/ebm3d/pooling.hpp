#pragma once

#include <span>
#include <vector>

#include "ebm3d/feature_grid.hpp"
#include "ebm3d/geometry.hpp"

namespace ebm3d {

// Oriented RoIAlign layout: grid_w cells across the box width, grid_l cells
// along its length.
struct PoolConfig {
  int grid_w = 4;
  int grid_l = 7;

  int points() const { return grid_w * grid_l; }
  void validate() const;
};

// Sample position of one pooling cell and its derivative w.r.t. the BEV box
// parameters (cx, cy, w, l, phi).
struct PoolPoint {
  Vec2 world;
  std::array<double, BoxBEV::kDims> d_x;
  std::array<double, BoxBEV::kDims> d_y;
};

// Flattened h4 plus its Jacobian. Entry (j * grid_w + i) * C + c holds
// channel c of cell (i, j); grad is row-major (h4.size() x 5).
struct PooledFeature {
  std::vector<double> h4;
  std::vector<double> grad;

  std::span<const double> grad_row(std::size_t k) const { return {grad.data() + k * BoxBEV::kDims, BoxBEV::kDims}; }
};

// Point (i, j) sits at center + R(phi) (u_j l, v_i w) with
// u_j = (j + 0.5) / L' - 0.5 and v_i = (i + 0.5) / W' - 0.5. Returned in the
// same cell-major order as the pooled feature (j outer, i inner).
std::vector<PoolPoint> grid_points(const BoxBEV& box, const PoolConfig& cfg);

PooledFeature pool_bev(const FeatureGrid& grid, const BoxBEV& box, const PoolConfig& cfg, bool with_grad = true);

// h5 = h4 ++ g_cz ++ g_h.
std::vector<double> assemble_h5(std::span<const double> h4, std::span<const double> g_cz, std::span<const double> g_h,
                                std::size_t expected_h4, std::size_t expected_enc);

}  // namespace ebm3d
