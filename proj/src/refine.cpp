#include "ebm3d/refine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ebm3d/error.hpp"

namespace ebm3d {

void RefineConfig::validate() const {
  if (iterations < 0) throw Error(ErrorCategory::Config, "refinement iterations T must be >= 0");
  if (!(lambda > 0.0)) throw Error(ErrorCategory::Config, "refinement step length must be > 0");
  if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorCategory::Config, "refinement decay eta must lie in (0, 1)");
}

RefineResult refine_one(const EnergyNetParams& params, const FeatureGrid& grid, const Detection& det,
                        const RefineConfig& cfg) {
  cfg.validate();
  RefineResult out;
  out.detection = det;
  double lambda = cfg.lambda;

  if (cfg.iterations == 0) {
    out.initial_value = out.final_value = forward(params, grid, det.box).value;
    out.value_evals = 1;
    out.trace.push_back({0, out.initial_value, true, lambda});
    return out;
  }

  Box3D y = det.box;
  EnergyEval current = backward_box(params, grid, y);
  out.gradient_evals = out.value_evals = 1;
  double prev_value = current.value;
  out.initial_value = prev_value;
  out.trace.push_back({0, prev_value, true, lambda});
  bool grad_valid = true;

  for (int t = 1; t <= cfg.iterations; ++t) {
    try {
      if (!grad_valid) {
        current = backward_box(params, grid, y);
        ++out.gradient_evals;
        ++out.value_evals;
        grad_valid = true;
      }
      BoxVector proposal = y.to_array();
      for (int d = 0; d < Box3D::kDims; ++d) proposal[d] += lambda * current.grad_box[d];
      const Box3D candidate = Box3D::from_array(proposal);
      const double new_value = forward(params, grid, candidate).value;
      ++out.value_evals;
      const bool accept = new_value > prev_value;
      out.trace.push_back({t, new_value, accept, lambda});
      if (accept) {
        y = candidate;
        prev_value = new_value;
        grad_valid = false;
      } else {
        lambda *= cfg.eta;
      }
    } catch (const Error& e) {
      throw Error(e.category(), std::string(e.what()) + " (refinement iteration " + std::to_string(t) + ")", t);
    }
  }

  for (double* size : {&y.h, &y.w, &y.l}) {
    if (*size < kMinBoxSize) {
      *size = kMinBoxSize;
      out.clamped = true;
    }
  }
  out.detection.box = y;
  out.final_value = prev_value;
  return out;
}

std::vector<RefineResult> refine_all(const EnergyNetParams& params, const FeatureGrid& grid,
                                     const std::vector<Detection>& dets, const RefineConfig& cfg) {
  std::vector<RefineResult> out;
  out.reserve(dets.size());
  for (const Detection& det : dets) out.push_back(refine_one(params, grid, det, cfg));
  return out;
}

std::vector<AngleScanPoint> angle_scan(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box,
                                       int points) {
  if (points < 2) throw Error(ErrorCategory::Config, "angle scan needs at least 2 points");
  std::vector<AngleScanPoint> scan;
  const double base = reduce_angle(box.phi);
  for (int k = 0; k < points; ++k) {
    const double dphi = k == points - 1 ? kTwoPi : kTwoPi * k / (points - 1);
    Box3D rotated = box;
    rotated.phi = base + reduce_angle(dphi);
    scan.push_back({dphi, forward(params, grid, rotated).value});
  }
  return scan;
}

std::vector<std::size_t> dominant_maxima(const std::vector<AngleScanPoint>& scan, double fraction) {
  std::vector<std::size_t> out;
  if (scan.size() < 3) return out;
  const std::size_t n = scan.size() - 1;  // distinct angles
  double lo = scan[0].value, hi = scan[0].value;
  for (std::size_t k = 0; k < n; ++k) {
    lo = std::min(lo, scan[k].value);
    hi = std::max(hi, scan[k].value);
  }
  if (!(hi > lo)) return out;
  const double cut = lo + fraction * (hi - lo);
  for (std::size_t k = 0; k < n; ++k) {
    const double prev = scan[(k + n - 1) % n].value;
    const double next = scan[(k + 1) % n].value;
    // Strict on the left so a flat top counts once.
    if (scan[k].value > prev && scan[k].value >= next && scan[k].value >= cut) out.push_back(k);
  }
  return out;
}

}  // namespace ebm3d
