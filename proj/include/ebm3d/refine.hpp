#pragma once

#include <vector>

#include "ebm3d/energy_net.hpp"
#include "ebm3d/scene.hpp"

namespace ebm3d {

struct RefineConfig {
  int iterations = 10;    // T
  double lambda = 2e-4;   // initial step length
  double eta = 0.5;       // step-length decay on rejection

  void validate() const;
};

struct RefineTraceEntry {
  int iteration = 0;      // 0 is the initial box
  double value = 0.0;     // f of the proposal (of the initial box for iteration 0)
  bool accepted = false;
  double lambda = 0.0;    // step length used for the proposal
};

struct RefineResult {
  Detection detection;
  std::vector<RefineTraceEntry> trace;
  double initial_value = 0.0;
  double final_value = 0.0;
  int gradient_evals = 0;
  int value_evals = 0;    // includes the value computed with each gradient
  bool clamped = false;   // a size fell below the 1 mm floor and was clamped
};

inline constexpr double kMinBoxSize = 1e-3;

// Gradient ascent on f with a never-decrease guard: propose
// y + lambda * grad f(y); accept only if f strictly increases, otherwise
// shrink lambda by eta and keep y. The score is passed through unchanged.
//
// Cost per detection: one value+gradient evaluation up front, one value
// evaluation per iteration, and one value+gradient evaluation after every
// accepted step except the last iteration's. Hence at most T gradient
// evaluations and at most 2T energy evaluations (one when T = 0).
RefineResult refine_one(const EnergyNetParams& params, const FeatureGrid& grid, const Detection& det,
                        const RefineConfig& cfg);

// refine_one applied to every detection independently, order preserved.
std::vector<RefineResult> refine_all(const EnergyNetParams& params, const FeatureGrid& grid,
                                     const std::vector<Detection>& dets, const RefineConfig& cfg);

struct AngleScanPoint {
  double dphi = 0.0;
  double value = 0.0;
};

// f at the box rotated by dphi = 2*pi*k / (points - 1), k = 0..points-1,
// all other coordinates fixed. The offset is reduced before it is added, so
// the first and last rows evaluate the same box.
std::vector<AngleScanPoint> angle_scan(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box,
                                       int points = 101);

// Indices of local maxima of a closed scan (last row repeats the first) whose
// value is at least min + fraction * (max - min).
std::vector<std::size_t> dominant_maxima(const std::vector<AngleScanPoint>& scan, double fraction = 0.5);

}  // namespace ebm3d
