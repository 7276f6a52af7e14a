#pragma once

#include <array>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ebm3d/scene.hpp"

namespace ebm3d {

enum class IouMode { Box3D, Bev };
std::string mode_name(IouMode m);  // "3d" / "bev"
IouMode parse_mode(const std::string& s);

enum class Difficulty { All, Easy, Moderate, Hard };
std::string difficulty_name(Difficulty d);
Difficulty parse_difficulty(const std::string& s);

// True when a GT with this metadata counts for the difficulty level. GTs
// without metadata count for every level.
bool passes_difficulty(const GroundTruth& gt, Difficulty d);

double box_iou(IouMode mode, const Box3D& a, const Box3D& b);

// Ignored: matched to a GT excluded by the difficulty filter.
enum class MatchLabel { TP, FP, Ignored };

using IouFn = std::function<double(const Box3D&, const Box3D&)>;

// Greedy matching in descending score order, ties by input order. `ignored`
// is empty or has one flag per GT. Labels are returned in input order.
std::vector<MatchLabel> match_greedy(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                     const IouFn& iou, double threshold, const std::vector<bool>& ignored = {});

inline constexpr int kRecallPositions = 40;

struct ScoredLabel {
  double score = 0.0;
  MatchLabel label = MatchLabel::FP;
};

struct APResult {
  double ap = 0.0;
  std::array<double, kRecallPositions> recall{};     // k / 40
  std::array<double, kRecallPositions> precision{};  // interpolated
  double threshold = 0.0;
  IouMode mode = IouMode::Box3D;
  Difficulty difficulty = Difficulty::All;
};

// Ignored labels are skipped. Throws UndefinedMetric when num_gt < 1.
APResult average_precision(std::span<const ScoredLabel> labels, long num_gt);

struct EvalSpec {
  std::vector<IouMode> modes{IouMode::Box3D, IouMode::Bev};
  std::vector<double> thresholds{0.7, 0.75, 0.8, 0.85, 0.9};
  std::vector<Difficulty> difficulties{Difficulty::All};
};

using DetsByScene = std::map<std::string, std::vector<Detection>>;
using GtsByScene = std::map<std::string, std::vector<GroundTruth>>;

// Pools matches over all scenes before computing AP. A detection scene id
// missing from `gts` is an Input error. Results ordered mode, threshold,
// difficulty.
std::vector<APResult> evaluate(const DetsByScene& dets, const GtsByScene& gts, const EvalSpec& spec = {});

std::string ap_csv_header();
std::string ap_csv_row(const APResult& r);

}  // namespace ebm3d
