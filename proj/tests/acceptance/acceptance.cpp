// Acceptance suite. Prints one "criterion N: PASS|FAIL ..." line per
// criterion and exits nonzero if any selected criterion fails.
//
//   ebm3d_acceptance [N ...] [--workdir DIR]
//
// Without criterion numbers all nine run. Criteria 6-8 train full-size models
// through the CLI and take tens of minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ebm3d/cli.hpp"
#include "ebm3d/energy_net.hpp"
#include "ebm3d/error.hpp"
#include "ebm3d/evalkit.hpp"
#include "ebm3d/kitti_io.hpp"
#include "ebm3d/nce.hpp"
#include "ebm3d/refine.hpp"
#include "ebm3d/synth_scene.hpp"
#include "reference_net.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace ebm3d;
using testing::Rng;
using testing::uniform;

namespace {

// ---- pinned tolerances ----
constexpr double kGradRelTol = 1e-5;         // criterion 1
constexpr double kGradRuntimeSeconds = 60.0; // criterion 1
constexpr double kKinkMargin = 1e-3;         // criterion 1 draw rejection
constexpr double kBoxStep = 1e-6;            // criterion 1, d f / d y
constexpr double kParamStep = 1e-5;          // criterion 1, d J / d theta
constexpr double kNceTol = 1e-12;            // criterion 3
constexpr double kMcTol = 2e-3;              // criterion 4
constexpr double kAxisTol = 1e-12;           // criterion 4
constexpr double kPlateauTol = 0.005;        // criterion 7, 0.5 AP points on a [0, 1] scale
constexpr double kMaximumWindow = 0.3;       // criterion 8, rad

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCategory::Io, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Data rows of a CSV written by the CLI, keyed by column name.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::istringstream in(read_text(p));
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    if (header.empty()) {
      header = fields;
      continue;
    }
    std::map<std::string, std::string> row;
    for (std::size_t k = 0; k < header.size() && k < fields.size(); ++k) row[header[k]] = fields[k];
    rows.push_back(row);
  }
  return rows;
}

void cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ebm3d");
  std::ostringstream out, err;
  const int status = run_cli(args, out, err);
  if (status != 0) throw std::runtime_error("ebm3d " + args[1] + " failed: " + err.str());
  std::cout << out.str() << std::flush;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text(e.path());
  }
  return files;
}

// ---- criterion 1 ----

Box3D box_near_origin(Rng& rng) {
  return {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 0.5, 1.2), uniform(rng, 1.3, 1.9),
          uniform(rng, 1.4, 2.0), uniform(rng, 3.2, 4.8), uniform(rng, -kPi, kPi)};
}

bool smooth(const EnergyNetParams& p, const FeatureGrid& g, const Box3D& b) {
  const testing::ReferenceEval ref = testing::reference_energy(p, g, b);
  return ref.min_abs_preact > kKinkMargin && ref.min_cell_distance > kKinkMargin;
}

// Indices of real parameters, excluding alignment padding.
std::vector<std::size_t> parameter_indices(const EnergyNetParams& p) {
  std::vector<std::size_t> idx;
  for (int layer = 0; layer < kNumLayers; ++layer) {
    for (std::size_t k = 0; k < p.shapes()[layer].weight_count(); ++k) idx.push_back(p.weight_offset(layer) + k);
    for (int k = 0; k < p.shapes()[layer].out; ++k) idx.push_back(p.bias_offset(layer) + k);
  }
  return idx;
}

Outcome criterion1() {
  const auto start = Clock::now();
  Rng rng(101);
  const NoiseModel nm = NoiseModel::car_default();
  const int noise_samples = 4;
  double worst_box = 0.0, worst_param = 0.0;
  int draws = 0, rejected = 0;
  while (draws < 100) {
    FeatureGrid grid = testing::random_grid(rng, 24, 24, 3, 0.5, -6, -6);
    EnergyNetParams params = testing::random_params(rng, testing::small_dims());
    const Box3D box = box_near_origin(rng);
    std::vector<NceAnnotation> anns;
    for (int k = 0; k < 2; ++k) anns.push_back({&grid, box_near_origin(rng), "s", k});
    const Rng stream = rng;
    rng.discard(1000);

    // Every box the loss will touch must stay clear of kinks and cell lines.
    bool ok = smooth(params, grid, box);
    Rng probe = stream;
    for (const NceAnnotation& a : anns) {
      sample_target_perturbation(nm, probe);
      ok = ok && smooth(params, grid, a.target);
      for (int m = 0; m < noise_samples; ++m) ok = ok && smooth(params, grid, sample_noise(nm, a.target, probe));
    }
    if (!ok) {
      ++rejected;
      continue;
    }

    const EnergyEval e = backward_box(params, grid, box);
    for (int k = 0; k < Box3D::kDims; ++k) {
      auto plus = box.to_array(), minus = box.to_array();
      plus[k] += kBoxStep;
      minus[k] -= kBoxStep;
      const double fd = (forward(params, grid, Box3D::from_array(plus)).value -
                         forward(params, grid, Box3D::from_array(minus)).value) /
                        (2 * kBoxStep);
      worst_box = std::max(worst_box, testing::rel_err(e.grad_box[k], fd));
    }

    Rng r0 = stream;
    const NceResult base = nce_loss(params, anns, nm, noise_samples, NceObjective::Nce, r0);
    const std::vector<std::size_t> idx = parameter_indices(params);
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    for (int s = 0; s < 50; ++s) {
      const std::size_t k = idx[pick(rng)];
      const double orig = params.values()[k];
      params.values()[k] = orig + kParamStep;
      Rng rp = stream;
      const double jp = nce_loss(params, anns, nm, noise_samples, NceObjective::Nce, rp).loss;
      params.values()[k] = orig - kParamStep;
      Rng rm = stream;
      const double jm = nce_loss(params, anns, nm, noise_samples, NceObjective::Nce, rm).loss;
      params.values()[k] = orig;
      worst_param = std::max(worst_param, testing::rel_err(base.grad[k], (jp - jm) / (2 * kParamStep)));
    }
    ++draws;
  }
  const double elapsed = seconds_since(start);
  const bool pass = worst_box < kGradRelTol && worst_param < kGradRelTol && elapsed < kGradRuntimeSeconds;
  return {pass, "draws " + std::to_string(draws) + " (rejected " + std::to_string(rejected) + "), max rel err df/dy " +
                    num(worst_box, 3) + ", dJ/dtheta " + num(worst_param, 3) + " (tol " + num(kGradRelTol) + "), " +
                    num(elapsed, 3) + " s"};
}

// ---- criterion 2 ----

Outcome criterion2() {
  Rng rng(202);
  int refinements = 0, accepted_steps = 0, violations = 0, noop_mismatch = 0, clamped = 0;
  for (int n = 0; n < 200; ++n) {
    const FeatureGrid g = testing::random_grid(rng, 24, 24, 3, 0.5, -6, -6);
    const EnergyNetParams p = testing::random_params(rng, testing::small_dims());
    for (int k = 0; k < 5; ++k) {
      const RefineConfig cfg{static_cast<int>(uniform(rng, 1, 30)), std::exp(uniform(rng, std::log(1e-4), 0.0)), 0.5};
      const Detection det{box_near_origin(rng), uniform(rng, 0.01, 0.99)};
      const RefineResult r = refine_one(p, g, det, cfg);
      double current = r.trace.at(0).value;
      for (std::size_t t = 1; t < r.trace.size(); ++t) {
        if (!r.trace[t].accepted) continue;
        ++accepted_steps;
        if (!(r.trace[t].value > current)) ++violations;
        current = r.trace[t].value;
      }
      if (!(r.final_value == current && r.final_value >= r.initial_value)) ++violations;
      // The size clamp moves the box after the last evaluation.
      if (!r.clamped && forward(p, g, r.detection.box).value != r.final_value) ++violations;
      clamped += r.clamped;
      ++refinements;

      const RefineResult z = refine_one(p, g, det, {0, cfg.lambda, cfg.eta});
      if (z.detection.box.to_array() != det.box.to_array() || z.detection.score != det.score) ++noop_mismatch;
    }
  }
  const bool pass = violations == 0 && noop_mismatch == 0 && accepted_steps > 0;
  return {pass, std::to_string(refinements) + " refinements, " + std::to_string(accepted_steps) +
                    " accepted steps, monotonicity violations " + std::to_string(violations) + ", T=0 mismatches " +
                    std::to_string(noop_mismatch) + ", clamped " + std::to_string(clamped)};
}

// ---- criterion 3 ----

Outcome criterion3() {
  Rng rng(303);
  FeatureGrid grid = testing::random_grid(rng, 24, 24, 3, 0.5, -6, -6);
  EnergyNetParams params = testing::random_params(rng, testing::small_dims());
  std::vector<NceAnnotation> anns;
  for (int k = 0; k < 4; ++k) anns.push_back({&grid, box_near_origin(rng), "s", k});
  const NoiseModel nm = NoiseModel::car_default();

  // Uniform logits: constant network output and a noise density that is
  // identical for the target and every noise sample.
  EnergyNetParams flat = params;
  for (double& w : flat.weight(kHead2)) w = 0.0;
  NoiseModel point;
  BoxVector tiny;
  tiny.fill(1e-30);
  point.sigma.assign(3, tiny);
  double worst_uniform = 0.0;
  for (int m : {1, 8, 64, 256}) {
    const double loss = nce_loss(flat, anns, point, m, NceObjective::Nce, rng).loss;
    worst_uniform = std::max(worst_uniform, std::abs(loss - std::log(m + 1.0)));
  }

  bool identical = true;
  for (int k = 0; k < 10; ++k) {
    Rng a(1000 + k), b(1000 + k);
    const NceResult x = nce_loss(params, anns, nm, 64, NceObjective::Nce, a);
    const NceResult y = nce_loss(params, anns, nm, 64, NceObjective::NcePlus, b);
    identical = identical && x.loss == y.loss && x.grad == y.grad && a() == b();
  }

  double worst_bias = 0.0;
  for (int k = 0; k < 10; ++k) {
    const NceResult r = nce_loss(params, anns, nm, 256, NceObjective::Nce, rng);
    worst_bias = std::max(worst_bias, std::abs(r.grad[params.bias_offset(kHead2)]));
  }
  const bool pass = worst_uniform <= kNceTol && identical && worst_bias <= kNceTol;
  return {pass, "|J - log(M+1)| max " + num(worst_uniform, 3) + ", NCE+ at beta=0 bit-identical " +
                    (identical ? "yes" : "no") + ", |dJ/db_last| max " + num(worst_bias, 3) + " (tol " +
                    num(kNceTol) + ")"};
}

// ---- criterion 4 ----

Outcome criterion4() {
  Rng rng(404);
  double worst_mc = 0.0, worst_axis = 0.0;
  int overlapping = 0;
  for (int k = 0; k < 200; ++k) {
    const BoxBEV a{uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, 0.5, 3), uniform(rng, 1, 6),
                   uniform(rng, -kPi, kPi)};
    const BoxBEV b{a.cx + uniform(rng, -2, 2), a.cy + uniform(rng, -2, 2), uniform(rng, 0.5, 3), uniform(rng, 1, 6),
                   uniform(rng, -kPi, kPi)};
    const double exact = bev_iou(a, b);
    overlapping += exact > 0.0;
    worst_mc = std::max(worst_mc, std::abs(exact - testing::mc_bev_iou(a, b, 1000, rng)));
  }
  for (int k = 0; k < 200; ++k) {
    const BoxBEV a{uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, 0.5, 3), uniform(rng, 1, 6), 0.0};
    const BoxBEV b{a.cx + uniform(rng, -3, 3), a.cy + uniform(rng, -2, 2), uniform(rng, 0.5, 3), uniform(rng, 1, 6),
                   0.0};
    worst_axis = std::max(worst_axis, std::abs(bev_iou(a, b) - testing::axis_aligned_iou(a, b)));
  }
  const bool pass = worst_mc < kMcTol && worst_axis <= kAxisTol;
  return {pass, "rotated pairs max |IoU - MC(1e6)| " + num(worst_mc, 3) + " (tol " + num(kMcTol) + ", " +
                    std::to_string(overlapping) + "/200 overlapping), axis-aligned max error " + num(worst_axis, 3) +
                    " (tol " + num(kAxisTol) + ")"};
}

// ---- criterion 5 ----

Outcome criterion5() {
  // Two GTs; detections TP 0.9, FP 0.8, TP 0.7.
  const Box3D g1{5, 0, 0.8, 1.6, 1.7, 4.0, 0.2}, g2{15, 3, 0.8, 1.5, 1.8, 4.2, -1.0};
  const Box3D far{30, -10, 0.8, 1.6, 1.7, 4.0, 0.0};
  const GtsByScene gts{{"a", {{g1, std::nullopt}, {g2, std::nullopt}}}};
  const DetsByScene dets{{"a", {{g1, 0.9}, {far, 0.8}, {g2, 0.7}}}};
  EvalSpec spec;
  bool hand = true;
  for (const APResult& r : evaluate(dets, gts, spec)) hand = hand && r.ap == 5.0 / 6.0;

  Rng rng(505);
  int instances = 0, changed = 0;
  const std::vector<std::function<double(double)>> transforms{
      [](double s) { return s * s * s; }, [](double s) { return std::exp(5 * s) - 2; },
      [](double s) { return 0.25 + 0.5 * s; }, [](double s) { return std::log(s); }};
  for (int k = 0; k < 200; ++k) {
    GtsByScene g;
    DetsByScene d;
    for (int s = 0; s < 3; ++s) {
      const std::string id = std::to_string(s);
      for (int n = 0; n < 5; ++n) {
        const Box3D t{uniform(rng, 0, 30) + 40.0 * n, uniform(rng, -10, 10), 0.8, 1.6, 1.7, 4.0,
                      uniform(rng, -kPi, kPi)};
        g[id].push_back({t, std::nullopt});
        for (int m = 0; m < 2; ++m) {
          Box3D p = t;
          p.cx += uniform(rng, -0.4, 0.4);
          p.cy += uniform(rng, -0.4, 0.4);
          p.phi += uniform(rng, -0.2, 0.2);
          // Coarse scores so that ties occur.
          d[id].push_back({p, std::ceil(uniform(rng, 0, 1) * 40) / 41});
        }
      }
    }
    const auto base = evaluate(d, g, spec);
    for (const auto& fn : transforms) {
      DetsByScene t = d;
      for (auto& [id, list] : t) {
        for (Detection& det : list) det.score = fn(det.score);
      }
      const auto other = evaluate(t, g, spec);
      for (std::size_t r = 0; r < base.size(); ++r) changed += other[r].ap != base[r].ap;
    }
    ++instances;
  }
  const bool pass = hand && changed == 0;
  return {pass, std::string("hand example AP == 5/6 exactly: ") + (hand ? "yes" : "no") + "; " +
                    std::to_string(instances) + " random instances x 4 transforms x 10 settings, AP changes " +
                    std::to_string(changed)};
}

// ---- criterion 9 ----

Outcome criterion9(const fs::path& work) {
  const fs::path dir = work / "c9";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Rng rng(909);
  auto micro = [&](double lo, double hi) { return std::round(uniform(rng, lo, hi) * 1e6) / 1e6; };

  // KITTI corpus: 100 files, each a mix of labels, DontCare and results.
  int kitti_mismatch = 0;
  for (int f = 0; f < 100; ++f) {
    std::vector<KittiLabel> labels;
    const int n = static_cast<int>(uniform(rng, 0, 12));
    const bool results = f % 2 == 1;
    for (int k = 0; k < n; ++k) {
      KittiLabel l;
      l.type = k % 5 == 4 ? "DontCare" : (k % 3 == 0 ? "Car" : "Van");
      l.truncated = micro(0, 1);
      l.occluded = static_cast<int>(uniform(rng, 0, 4));
      l.alpha = micro(-kPi, kPi);
      const double left = micro(0, 1000), top = micro(0, 300);
      l.bbox = {left, top, micro(left, left + 200), micro(top, top + 100)};
      l.h = micro(1, 3);
      l.w = micro(0.5, 2.5);
      l.l = micro(0.5, 6);
      l.x = micro(-30, 30);
      l.y = micro(-1, 3);
      l.z = micro(1, 70);
      l.rotation_y = micro(-kPi, kPi);
      if (results) l.score = micro(0, 1);
      labels.push_back(l);
    }
    const fs::path p = dir / ("kitti_" + std::to_string(f) + ".txt");
    write_text_file(p.string(), results ? write_result_file(labels) : write_label_file(labels));
    const auto back = read_label_file(p.string());
    kitti_mismatch += back != labels;
    kitti_mismatch += (results ? write_result_file(back) : write_label_file(back)) != read_text(p);
  }

  // Scene corpus: 100 generated scenes on a small grid.
  SynthConfig sc;
  sc.width = sc.length = 48;
  sc.channels = 6;
  sc.origin_y = -5.875;
  int scene_mismatch = 0;
  for (int s = 0; s < 100; ++s) {
    Rng srng(s);
    Scene scene = gen_scene(sc, "scene" + std::to_string(s), srng);
    if (!scene.gts.empty() && s % 3 == 0) scene.gts[0].difficulty = DifficultyInfo{uniform(rng, 10, 80), 2, 0.3};
    const fs::path p = dir / (scene.id + ".scene");
    save_scene(scene, p.string());
    const Scene back = load_scene(p.string());
    scene_mismatch += encode_scene(back) != encode_scene(scene) || back.grid.data() != scene.grid.data();
  }

  // Checkpoints reload bit-exactly.
  int ckpt_mismatch = 0;
  for (int k = 0; k < 5; ++k) {
    EnergyNetParams p = testing::random_params(rng, testing::small_dims(6));
    const fs::path path = dir / "ckpt.bin";
    save_checkpoint(p, path.string());
    const EnergyNetParams q = load_checkpoint(path.string());
    ckpt_mismatch += !(q.dims() == p.dims()) || !std::equal(p.values().begin(), p.values().end(),
                                                            q.values().begin(), q.values().end());
  }

  // Every CLI command twice with a fixed seed.
  const fs::path cfg = dir / "small.cfg";
  {
    std::ofstream out(cfg);
    out << "timing = false\nsynth.scenes = 6\nsynth.width = 32\nsynth.length = 32\nsynth.channels = 6\n"
           "synth.origin_y = -3.875\nsynth.max_cars = 2\npool.grid_w = 2\npool.grid_l = 3\nnet.enc_dim = 4\n"
           "net.hidden = 16\ntrain.noise_samples = 8\ntrain.learning_rate = 0.001\nrefine.lambda = 0.01\n"
           "refine.trace = true\nsweep.iterations = 0,1,4\nscan.points = 21\n";
  }
  std::vector<std::string> differing;
  for (int run = 0; run < 2; ++run) {
    const fs::path r = dir / ("run" + std::to_string(run));
    fs::remove_all(r);
    const std::string c = cfg.string();
    cli({"synth-gen", "--config", c, "--seed", "5", "--out", (r / "data").string()});
    cli({"train", "--config", c, "--seed", "5", "--dataset", (r / "data").string(), "--out", (r / "model").string()});
    const std::string ckpt = (r / "model" / "checkpoint.bin").string();
    cli({"refine", "--config", c, "--seed", "5", "--dataset", (r / "data").string(), "--checkpoint", ckpt, "--out",
         (r / "refined").string()});
    cli({"eval", "--config", c, "--seed", "5", "--dataset", (r / "data").string(), "--refined",
         (r / "refined").string(), "--out", (r / "eval").string()});
    cli({"sweep-T", "--config", c, "--seed", "5", "--dataset", (r / "data").string(), "--checkpoint", ckpt, "--out",
         (r / "sweep").string()});
    cli({"angle-scan", "--config", c, "--seed", "5", "--dataset", (r / "data").string(), "--checkpoint", ckpt,
         "--out", (r / "scan").string()});
  }
  for (const std::string sub : {"data", "model", "refined", "eval", "sweep", "scan"}) {
    if (snapshot(dir / "run0" / sub) != snapshot(dir / "run1" / sub)) differing.push_back(sub);
  }
  std::string diff_list;
  for (const std::string& s : differing) diff_list += " " + s;

  const bool pass = kitti_mismatch == 0 && scene_mismatch == 0 && ckpt_mismatch == 0 && differing.empty();
  return {pass, "KITTI files 100, mismatches " + std::to_string(kitti_mismatch) + "; scene files 100, mismatches " +
                    std::to_string(scene_mismatch) + "; checkpoint mismatches " + std::to_string(ckpt_mismatch) +
                    "; CLI commands with differing outputs:" + (differing.empty() ? " none" : diff_list)};
}

// ---- criteria 6-8: full-size synthetic pipeline ----

class Benchmark {
 public:
  explicit Benchmark(fs::path work) : work_(std::move(work)) {}

  // Default configuration, 2,000 train and 400 validation scenes.
  const fs::path& trained(bool symmetric) {
    fs::path& model = symmetric ? symmetric_model_ : model_;
    if (!model.empty()) return model;
    const std::string tag = symmetric ? "symmetric" : "default";
    const fs::path data = work_ / (tag + "_data");
    model = work_ / (tag + "_model");
    const auto start = Clock::now();
    cli(with_common({"synth-gen", "--out", data.string(), "--set",
                     std::string("synth.symmetric_rendering=") + (symmetric ? "true" : "false")}));
    cli(with_common({"train", "--dataset", data.string(), "--out", model.string()}));
    std::cout << tag << " dataset and training: " << num(seconds_since(start), 4) << " s\n";
    (symmetric ? symmetric_data_ : data_) = data;
    return model;
  }
  const fs::path& data(bool symmetric) {
    trained(symmetric);
    return symmetric ? symmetric_data_ : data_;
  }
  std::vector<std::string> with_common(std::vector<std::string> args) const {
    for (const char* s : {"synth.scenes=2400", "synth.val_fraction=0.1666667"}) {
      args.push_back("--set");
      args.push_back(s);
    }
    return args;
  }
  const fs::path& work() const { return work_; }

 private:
  fs::path work_;
  fs::path model_, symmetric_model_, data_, symmetric_data_;
};

double mean_best_iou(const fs::path& data, const fs::path& dets_dir, bool refined) {
  double sum = 0.0;
  long n = 0;
  for (const DatasetEntry& e : filter_split(read_manifest(data.string()), Split::Val)) {
    const Scene scene = load_scene((data / e.file).string());
    std::vector<Box3D> boxes;
    if (refined) {
      for (const KittiLabel& k : read_label_file((dets_dir / (e.id + ".txt")).string())) boxes.push_back(to_box3d(k));
    } else {
      for (const Detection& d : scene.initial_dets) boxes.push_back(d.box);
    }
    for (const Box3D& b : boxes) {
      double best = 0.0;
      for (const GroundTruth& gt : scene.gts) best = std::max(best, iou_3d(b, gt.box));
      sum += best;
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

Outcome criterion6(Benchmark& bench) {
  const auto start = Clock::now();
  const fs::path model = bench.trained(false);
  const fs::path data = bench.data(false);
  const fs::path refined = bench.work() / "default_refined";
  const fs::path eval = bench.work() / "default_eval";
  const std::string ckpt = (model / "checkpoint.bin").string();
  cli(bench.with_common({"refine", "--dataset", data.string(), "--checkpoint", ckpt, "--out", refined.string()}));
  cli(bench.with_common(
      {"eval", "--dataset", data.string(), "--refined", refined.string(), "--out", eval.string()}));

  const double iou0 = mean_best_iou(data, refined, false);
  const double iou1 = mean_best_iou(data, refined, true);
  bool improves = true;
  std::map<double, double> gain;
  std::string table;
  for (const auto& row : read_csv(eval / "eval.csv")) {
    if (row.at("mode") != "3d" || row.at("difficulty") != "all") continue;
    const double t = std::stod(row.at("threshold"));
    const double a0 = std::stod(row.at("ap_initial")), a1 = std::stod(row.at("ap_refined"));
    improves = improves && a1 > a0;
    gain[t] = std::stod(row.at("relative_gain"));
    table += " " + row.at("threshold") + ":" + num(a0, 4) + "->" + num(a1, 4);
  }
  const bool has = gain.contains(0.7) && gain.contains(0.9);
  const bool trend = has && gain[0.9] > gain[0.7];
  const bool pass = iou1 > iou0 && improves && trend && gain.size() == 5;
  return {pass, "(a) mean 3D IoU " + num(iou0, 5) + " -> " + num(iou1, 5) + "; (b) 3D AP" + table +
                    "; (c) relative gain @0.9 " + (has ? num(gain[0.9], 4) : "?") + " vs @0.7 " +
                    (has ? num(gain[0.7], 4) : "?") + "; " + num(seconds_since(start), 4) + " s"};
}

Outcome criterion7(Benchmark& bench) {
  const fs::path model = bench.trained(false);
  const fs::path data = bench.data(false);
  const fs::path out = bench.work() / "default_sweep";
  cli(bench.with_common({"sweep-T", "--dataset", data.string(), "--checkpoint", (model / "checkpoint.bin").string(),
                         "--out", out.string()}));
  // Judged on 3D AP at IoU 0.7; the mean over all thresholds is reported alongside.
  std::map<int, double> ap, mean_ap, rate;
  std::vector<int> order;
  for (const auto& row : read_csv(out / "sweep_T.csv")) {
    const int t = std::stoi(row.at("T"));
    order.push_back(t);
    ap[t] = std::stod(row.at("ap_0.7"));
    mean_ap[t] = std::stod(row.at("mean_ap"));
    rate[t] = std::stod(row.at("scenes_per_second"));
  }
  bool decreasing = true;
  std::string rates;
  for (std::size_t k = 0; k < order.size(); ++k) {
    rates += " " + std::to_string(order[k]) + ":" + num(rate[order[k]], 4);
    if (k > 0) decreasing = decreasing && rate[order[k]] < rate[order[k - 1]];
  }
  const bool has = ap.contains(4) && ap.contains(10) && ap.contains(64);
  const double d4 = has ? std::abs(ap[4] - ap[10]) : 1.0;
  const double d64 = has ? std::abs(ap[64] - ap[10]) : 1.0;
  const bool pass = has && d4 <= kPlateauTol && d64 <= kPlateauTol && decreasing;
  std::string aps, means;
  for (int t : order) {
    aps += " " + std::to_string(t) + ":" + num(ap[t], 4);
    means += " " + std::to_string(t) + ":" + num(mean_ap[t], 4);
  }
  return {pass, "3D AP@0.7 by T" + aps + "; |AP4-AP10| " + num(d4, 3) + ", |AP64-AP10| " + num(d64, 3) + " (tol " +
                    num(kPlateauTol) + "); mean over thresholds" + means + "; scenes/s" + rates + (decreasing ? " (strictly decreasing)" : " (NOT strictly decreasing)")};
}

Outcome criterion8(Benchmark& bench) {
  const fs::path model = bench.trained(true);
  const fs::path data = bench.data(true);
  const fs::path out = bench.work() / "symmetric_scan";
  cli(bench.with_common({"angle-scan", "--dataset", data.string(), "--checkpoint",
                         (model / "checkpoint.bin").string(), "--out", out.string()}));
  std::vector<AngleScanPoint> scan;
  for (const auto& row : read_csv(out / "angle_scan.csv")) scan.push_back({std::stod(row.at("dphi")), std::stod(row.at("f"))});
  const std::vector<std::size_t> maxima = dominant_maxima(scan);
  auto circular = [](double a, double b) { return std::abs(std::remainder(a - b, kTwoPi)); };
  bool near_zero = false, near_pi = false;
  std::string where;
  for (std::size_t k : maxima) {
    near_zero = near_zero || circular(scan[k].dphi, 0.0) <= kMaximumWindow;
    near_pi = near_pi || circular(scan[k].dphi, kPi) <= kMaximumWindow;
    where += " " + num(scan[k].dphi, 4);
  }
  const bool pass = maxima.size() == 2 && near_zero && near_pi;
  return {pass, std::to_string(maxima.size()) + " dominant maxima at dphi" + where + " (need 2, within " +
                    num(kMaximumWindow) + " rad of 0 and pi)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  fs::path work = fs::temp_directory_path() / "ebm3d_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      work = argv[++i];
    } else {
      const int n = std::atoi(a.c_str());
      if (n < 1 || n > 9) {
        std::cerr << "usage: ebm3d_acceptance [1-9 ...] [--workdir DIR]\n";
        return 2;
      }
      selected.insert(n);
    }
  }
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  fs::create_directories(work);
  Benchmark bench(work);

  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, [&] { return criterion6(bench); }}, {7, [&] { return criterion7(bench); }},
      {8, [&] { return criterion8(bench); }}, {9, [&] { return criterion9(work); }}};

  std::vector<std::string> lines;
  bool all = true;
  for (int n : selected) {
    Outcome o;
    try {
      o = criteria.at(n)();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    lines.push_back("criterion " + std::to_string(n) + ": " + (o.pass ? "PASS" : "FAIL") + " " + o.detail);
    std::cout << lines.back() << std::endl;
  }
  if (selected.size() > 1) {
    std::cout << "---- summary ----\n";
    for (const std::string& l : lines) std::cout << l << "\n";
  }
  return all ? 0 : 1;
}
