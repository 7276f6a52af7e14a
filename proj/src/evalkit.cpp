#include "ebm3d/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>

#include "ebm3d/error.hpp"

namespace ebm3d {

namespace {

struct Gate {
  double min_height;
  int max_occlusion;
  double max_truncation;
};

Gate gate_for(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return {40.0, 0, 0.15};
    case Difficulty::Moderate: return {25.0, 1, 0.30};
    case Difficulty::Hard: return {25.0, 2, 0.50};
    case Difficulty::All: break;
  }
  return {0.0, 3, 1.0};
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string mode_name(IouMode m) { return m == IouMode::Box3D ? "3d" : "bev"; }

IouMode parse_mode(const std::string& s) {
  if (s == "3d") return IouMode::Box3D;
  if (s == "bev") return IouMode::Bev;
  throw Error(ErrorCategory::Config, "unknown IoU mode '" + s + "'");
}

std::string difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::All: return "all";
    case Difficulty::Easy: return "easy";
    case Difficulty::Moderate: return "moderate";
    case Difficulty::Hard: return "hard";
  }
  return "all";
}

Difficulty parse_difficulty(const std::string& s) {
  for (Difficulty d : {Difficulty::All, Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard}) {
    if (difficulty_name(d) == s) return d;
  }
  throw Error(ErrorCategory::Config, "unknown difficulty '" + s + "'");
}

bool passes_difficulty(const GroundTruth& gt, Difficulty d) {
  if (d == Difficulty::All || !gt.difficulty) return true;
  const Gate g = gate_for(d);
  const DifficultyInfo& info = *gt.difficulty;
  return info.height_px >= g.min_height && info.occlusion <= g.max_occlusion && info.truncation <= g.max_truncation;
}

double box_iou(IouMode mode, const Box3D& a, const Box3D& b) {
  return mode == IouMode::Box3D ? iou_3d(a, b) : bev_iou(to_bev(a), to_bev(b));
}

std::vector<MatchLabel> match_greedy(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                     const IouFn& iou, double threshold, const std::vector<bool>& ignored) {
  if (!ignored.empty() && ignored.size() != gts.size()) {
    throw Error(ErrorCategory::Input, "ignore mask size does not match the ground truths");
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<MatchLabel> labels(dets.size(), MatchLabel::FP);
  std::vector<bool> matched(gts.size(), false);
  for (std::size_t d : order) {
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g]) continue;
      const double v = iou(dets[d].box, gts[g].box);
      if (v > best) {
        best = v;
        best_gt = g;
      }
    }
    if (best_gt == gts.size() || best < threshold) continue;
    matched[best_gt] = true;
    labels[d] = !ignored.empty() && ignored[best_gt] ? MatchLabel::Ignored : MatchLabel::TP;
  }
  return labels;
}

APResult average_precision(std::span<const ScoredLabel> labels, long num_gt) {
  if (num_gt < 1) throw Error(ErrorCategory::UndefinedMetric, "average precision needs at least one ground truth");
  std::vector<ScoredLabel> sorted;
  for (const ScoredLabel& s : labels) {
    if (s.label != MatchLabel::Ignored) sorted.push_back(s);
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });

  // One operating point per distinct score threshold.
  struct Point {
    long tp;
    long fp;
  };
  std::vector<Point> points;
  long tp = 0, fp = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    (sorted[k].label == MatchLabel::TP ? tp : fp) += 1;
    if (k + 1 == sorted.size() || sorted[k + 1].score != sorted[k].score) points.push_back({tp, fp});
  }

  // Precisions are summed in extended precision from the integer counts, so
  // hand-checkable cases such as 5/6 come out correctly rounded.
  APResult out;
  long double sum = 0.0L;
  for (int k = 1; k <= kRecallPositions; ++k) {
    long double best = 0.0L;
    for (const Point& p : points) {
      // recall = tp / num_gt >= k / 40, compared in integers.
      if (p.tp * kRecallPositions >= k * num_gt) {
        best = std::max(best, static_cast<long double>(p.tp) / static_cast<long double>(p.tp + p.fp));
      }
    }
    out.recall[k - 1] = static_cast<double>(k) / kRecallPositions;
    out.precision[k - 1] = static_cast<double>(best);
    sum += best;
  }
  out.ap = static_cast<double>(sum / kRecallPositions);
  return out;
}

std::vector<APResult> evaluate(const DetsByScene& dets, const GtsByScene& gts, const EvalSpec& spec) {
  std::vector<std::string> unknown;
  for (const auto& [id, _] : dets) {
    if (!gts.contains(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string msg = "detections for unknown scene ids:";
    for (const std::string& id : unknown) msg += " " + id;
    throw Error(ErrorCategory::Input, msg);
  }

  static const std::vector<Detection> kNoDets;
  std::vector<APResult> results;
  for (IouMode mode : spec.modes) {
    const IouFn iou = [mode](const Box3D& a, const Box3D& b) { return box_iou(mode, a, b); };
    for (double threshold : spec.thresholds) {
      for (Difficulty difficulty : spec.difficulties) {
        std::vector<ScoredLabel> pooled;
        long num_gt = 0;
        for (const auto& [id, scene_gts] : gts) {
          auto it = dets.find(id);
          const std::vector<Detection>& scene_dets = it == dets.end() ? kNoDets : it->second;
          std::vector<bool> ignored(scene_gts.size());
          for (std::size_t g = 0; g < scene_gts.size(); ++g) {
            ignored[g] = !passes_difficulty(scene_gts[g], difficulty);
            if (!ignored[g]) ++num_gt;
          }
          const auto labels = match_greedy(scene_dets, scene_gts, iou, threshold, ignored);
          for (std::size_t d = 0; d < scene_dets.size(); ++d) pooled.push_back({scene_dets[d].score, labels[d]});
        }
        APResult r = average_precision(pooled, num_gt);
        r.threshold = threshold;
        r.mode = mode;
        r.difficulty = difficulty;
        results.push_back(r);
      }
    }
  }
  return results;
}

std::string ap_csv_header() {
  std::string h = "mode,threshold,difficulty,ap";
  for (int k = 1; k <= kRecallPositions; ++k) h += ",r" + std::to_string(k) + ",p" + std::to_string(k);
  return h;
}

std::string ap_csv_row(const APResult& r) {
  std::string row = mode_name(r.mode) + "," + fmt(r.threshold) + "," + difficulty_name(r.difficulty) + "," + fmt(r.ap);
  for (int k = 0; k < kRecallPositions; ++k) row += "," + fmt(r.recall[k]) + "," + fmt(r.precision[k]);
  return row;
}

}  // namespace ebm3d
