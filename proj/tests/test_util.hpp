#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ebm3d/feature_grid.hpp"
#include "ebm3d/geometry.hpp"

namespace ebm3d::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Relative error with a floor on the denominator. Central differences with
// step 1e-6 carry ~1e-10 of round-off, so derivatives below the floor are
// compared absolutely.
inline constexpr double kGradFloor = 1e-4;
inline double rel_err(double a, double b, double floor = kGradFloor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline FeatureGrid random_grid(Rng& rng, int w, int l, int c, double res = 0.5, double ox = 0.0, double oy = 0.0) {
  std::vector<double> data(static_cast<std::size_t>(w) * l * c);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : data) v = normal(rng);
  return FeatureGrid(w, l, c, ox, oy, res, std::move(data));
}

inline Box3D random_box(Rng& rng, double x0, double x1, double y0, double y1) {
  Box3D b;
  b.cx = uniform(rng, x0, x1);
  b.cy = uniform(rng, y0, y1);
  b.cz = uniform(rng, -0.5, 1.5);
  b.h = uniform(rng, 0.8, 2.0);
  b.w = uniform(rng, 0.8, 2.5);
  b.l = uniform(rng, 1.5, 5.0);
  b.phi = uniform(rng, -kPi, kPi);
  return b;
}

// Distance of a continuous grid coordinate to the nearest integer.
inline double frac_distance(double q) { return std::abs(q - std::round(q)); }

// An angle in [-pi, pi) for which phi + 2*pi is exact in double. The
// subtraction below is exact (Sterbenz), so the check is exact too.
inline double exact_angle(Rng& rng) {
  const double scale = std::ldexp(1.0, 40);
  for (;;) {
    const double phi = std::floor(uniform(rng, -kPi, kPi) * scale) / scale;
    if ((phi + kTwoPi) - kTwoPi == phi) return phi;
  }
}

inline bool inside_rect(const BoxBEV& b, double x, double y) {
  const double c = std::cos(b.phi), s = std::sin(b.phi);
  const double dx = x - b.cx, dy = y - b.cy;
  return std::abs(c * dx + s * dy) <= 0.5 * b.l && std::abs(-s * dx + c * dy) <= 0.5 * b.w;
}

// Monte-Carlo BEV IoU: one jittered sample per cell of an n x n grid over the
// joint bounding box of both rectangles.
inline double mc_bev_iou(const BoxBEV& a, const BoxBEV& b, int n, Rng& rng) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const BoxBEV& box : {a, b}) {
    for (const Vec2& p : bev_corners(box).vertices) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  const double dx = (x1 - x0) / n, dy = (y1 - y0) / n;
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  long both = 0, either = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double x = x0 + (i + jitter(rng)) * dx;
      const double y = y0 + (j + jitter(rng)) * dy;
      const bool in_a = inside_rect(a, x, y), in_b = inside_rect(b, x, y);
      both += in_a && in_b;
      either += in_a || in_b;
    }
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

// Axis-aligned overlap in closed form (phi = 0 for both boxes).
inline double axis_aligned_iou(const BoxBEV& a, const BoxBEV& b) {
  const double ox = std::max(0.0, std::min(a.cx + 0.5 * a.l, b.cx + 0.5 * b.l) - std::max(a.cx - 0.5 * a.l, b.cx - 0.5 * b.l));
  const double oy = std::max(0.0, std::min(a.cy + 0.5 * a.w, b.cy + 0.5 * b.w) - std::max(a.cy - 0.5 * a.w, b.cy - 0.5 * b.w));
  const double inter = ox * oy;
  return inter / (a.w * a.l + b.w * b.l - inter);
}

}  // namespace ebm3d::testing
