#include "ebm3d/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>

#include "ebm3d/error.hpp"
#include "ebm3d/kitti_io.hpp"
#include "ebm3d/run_config.hpp"

namespace ebm3d {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<long> seed;
  std::vector<std::string> sets;
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::string scene;
  std::optional<long> det;
  std::string labels;
  std::string initial;
  std::string refined;
};

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

RunConfig resolve_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg.load_file(o.config);
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  for (const std::string& s : o.sets) cfg.apply_override(s);
  return cfg;
}

std::string csv_comment(const RunConfig& cfg) { return "# ebm3d " EBM3D_VERSION " " + cfg.to_line() + "\n"; }

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw Error(ErrorCategory::Config, flag + " is required");
}

void require_exists(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCategory::Io, "no such file or directory: " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCategory::Io, "cannot create output directory: " + dir);
}

void write_text(const std::string& path, const std::string& text) { write_text_file(path, text); }

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

DirectorySceneSource open_split(const std::string& dir, const std::string& split) {
  require_exists(dir);
  auto entries = read_manifest(dir);
  if (split != "all") entries = filter_split(entries, parse_split(split));
  return DirectorySceneSource(dir, std::move(entries));
}

EnergyNetParams load_matching_checkpoint(const std::string& path, const RunConfig& cfg, int channels) {
  require_exists(path);
  EnergyNetParams params = load_checkpoint(path);
  const EnergyNetDims want = cfg.net(channels);
  if (!(params.dims() == want)) {
    throw Error(ErrorCategory::Config, "checkpoint " + path + " does not match the configured network dimensions");
  }
  return params;
}

// Highest IoU of a box against any of the scene's GTs.
double best_iou(const Box3D& box, const std::vector<GroundTruth>& gts) {
  double best = 0.0;
  for (const GroundTruth& gt : gts) best = std::max(best, iou_3d(box, gt.box));
  return best;
}

std::string result_text(const std::vector<Detection>& dets, const std::string& type) {
  std::vector<KittiLabel> labels;
  for (const Detection& d : dets) labels.push_back(from_box3d(d.box, type, d.score));
  return write_result_file(labels);
}

// ---- synth-gen ----

int cmd_synth_gen(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  require(o.out, "--out");
  const SynthConfig sc = cfg.synth();
  const auto entries = plan_dataset(sc, static_cast<int>(cfg.get_int("synth.scenes")),
                                    cfg.get_double("synth.val_fraction"));
  out << "config: " << cfg.to_line() << "\n";
  ensure_dir(o.out);
  const SyntheticSceneSource source(sc, entries);
  long boxes = 0, train = 0;
  double bev_sum = 0.0, iou_sum = 0.0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Scene scene = source.get(k);
    save_scene(scene, join(o.out, entries[k].file));
    boxes += static_cast<long>(scene.gts.size());
    if (entries[k].split == Split::Train) ++train;
    for (std::size_t g = 0; g < scene.gts.size(); ++g) {
      bev_sum += bev_iou(to_bev(scene.initial_dets[g].box), to_bev(scene.gts[g].box));
      iou_sum += iou_3d(scene.initial_dets[g].box, scene.gts[g].box);
    }
  }
  write_manifest(o.out, entries);
  const double n = boxes > 0 ? static_cast<double>(boxes) : 1.0;
  out << "scenes " << entries.size() << " (train " << train << ", val " << entries.size() - train << "), boxes "
      << boxes << ", mean initial BEV IoU " << fmt_fixed(bev_sum / n) << ", mean initial 3D IoU "
      << fmt_fixed(iou_sum / n) << "\n";
  return 0;
}

// ---- train ----

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  require(o.dataset, "--dataset");
  require(o.out, "--out");
  const DirectorySceneSource data = open_split(o.dataset, "train");
  if (data.size() == 0) throw Error(ErrorCategory::Config, "training split is empty");
  const int channels = data.get(0).grid.channels();
  const TrainConfig tc = cfg.train();
  const NoiseModel nm = cfg.noise();
  EnergyNetParams params = o.checkpoint.empty() ? init_params(cfg.seed() * 2 + 2, cfg.net(channels))
                                                : load_matching_checkpoint(o.checkpoint, cfg, channels);
  out << "config: " << cfg.to_line() << "\n";
  ensure_dir(o.out);
  const std::string ckpt = join(o.out, "checkpoint.bin");
  const TrainResult result = train(std::move(params), data, tc, nm, [&](int epoch, const EnergyNetParams& p) {
    save_checkpoint(p, ckpt);
    out << "epoch " << epoch << " checkpoint " << ckpt << "\n";
  });

  const bool timing = cfg.timing();
  std::string csv = csv_comment(cfg) + "epoch,step,loss,seconds\n";
  for (const StepLog& s : result.steps) {
    csv += std::to_string(s.epoch) + "," + std::to_string(s.step) + "," + fmt(s.loss) + "," +
           fmt_fixed(timing ? s.seconds : 0.0) + "\n";
  }
  write_text(join(o.out, "loss.csv"), csv);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    out << "epoch " << e << " mean loss " << fmt_fixed(result.epoch_loss[e]) << "\n";
  }
  out << "uniform-logit loss log(M+1) = " << fmt_fixed(std::log(tc.noise_samples + 1.0)) << "\n";
  return 0;
}

// ---- refine ----

int cmd_refine(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  require(o.dataset, "--dataset");
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  const DirectorySceneSource data = open_split(o.dataset, cfg.get("split"));
  const RefineConfig rc = cfg.refine();
  const bool want_trace = cfg.get_bool("refine.trace");
  const std::string type = cfg.get("eval.class");
  std::optional<EnergyNetParams> params;
  out << "config: " << cfg.to_line() << "\n";
  ensure_dir(o.out);

  std::string summary = csv_comment(cfg) + "scene,detection,initial_f,final_f,accepted,clamped\n";
  std::string trace = csv_comment(cfg) + "scene,detection,iteration,f,accepted,lambda\n";
  long n_det = 0, n_clamped = 0;
  double gain = 0.0, iou0 = 0.0, iou1 = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Scene scene = data.get(k);
    if (!params) params = load_matching_checkpoint(o.checkpoint, cfg, scene.grid.channels());
    if (scene.grid.channels() != params->dims().channels) {
      throw Error(ErrorCategory::Config, "scene " + scene.id + " channel count does not match the checkpoint");
    }
    const auto results = refine_all(*params, scene.grid, scene.initial_dets, rc);
    std::vector<Detection> refined;
    for (std::size_t d = 0; d < results.size(); ++d) {
      const RefineResult& r = results[d];
      refined.push_back(r.detection);
      long accepted = 0;
      for (const RefineTraceEntry& t : r.trace) {
        if (t.iteration > 0 && t.accepted) ++accepted;
        if (want_trace) {
          trace += scene.id + "," + std::to_string(d) + "," + std::to_string(t.iteration) + "," + fmt(t.value) + "," +
                   (t.accepted ? "1" : "0") + "," + fmt(t.lambda) + "\n";
        }
      }
      summary += scene.id + "," + std::to_string(d) + "," + fmt(r.initial_value) + "," + fmt(r.final_value) + "," +
                 std::to_string(accepted) + "," + (r.clamped ? "1" : "0") + "\n";
      gain += r.final_value - r.initial_value;
      iou0 += best_iou(scene.initial_dets[d].box, scene.gts);
      iou1 += best_iou(r.detection.box, scene.gts);
      if (r.clamped) ++n_clamped;
      ++n_det;
    }
    write_text(join(o.out, scene.id + ".txt"), result_text(refined, type));
  }
  write_text(join(o.out, "refine.csv"), summary);
  if (want_trace) write_text(join(o.out, "trace.csv"), trace);
  const double n = n_det > 0 ? static_cast<double>(n_det) : 1.0;
  out << "scenes " << data.size() << ", detections " << n_det << ", mean f increase " << fmt_fixed(gain / n)
      << ", mean 3D IoU " << fmt_fixed(iou0 / n) << " -> " << fmt_fixed(iou1 / n) << ", clamped " << n_clamped
      << "\n";
  return 0;
}

// ---- eval ----

std::set<std::string> txt_stems(const std::string& dir) {
  require_exists(dir);
  std::set<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") stems.insert(entry.path().stem().string());
  }
  return stems;
}

void check_same_ids(const std::set<std::string>& want, const std::set<std::string>& have, const std::string& dir) {
  std::string missing, extra;
  for (const std::string& id : want) {
    if (!have.contains(id)) missing += " " + id;
  }
  for (const std::string& id : have) {
    if (!want.contains(id)) extra += " " + id;
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "scene sets differ for " + dir + ":";
    if (!missing.empty()) msg += " missing" + missing + ";";
    if (!extra.empty()) msg += " unknown" + extra + ";";
    throw Error(ErrorCategory::Input, msg);
  }
}

DetsByScene read_result_dir(const std::string& dir, const std::set<std::string>& ids, const std::string& type) {
  check_same_ids(ids, txt_stems(dir), dir);
  DetsByScene dets;
  for (const std::string& id : ids) {
    auto& scene_dets = dets[id];
    for (const KittiLabel& k : read_label_file(join(dir, id + ".txt"))) {
      if (k.type != type) continue;
      scene_dets.push_back({to_box3d(k), k.score.value_or(1.0)});
    }
  }
  return dets;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  require(o.out, "--out");
  if (o.dataset.empty() == o.labels.empty()) {
    throw Error(ErrorCategory::Config, "exactly one of --dataset or --labels is required");
  }
  const EvalSpec spec = cfg.eval();
  const std::string type = cfg.get("eval.class");

  GtsByScene gts;
  DetsByScene initial;
  std::set<std::string> ids;
  if (!o.dataset.empty()) {
    const DirectorySceneSource data = open_split(o.dataset, cfg.get("split"));
    for (std::size_t k = 0; k < data.size(); ++k) {
      Scene scene = data.get(k);
      ids.insert(scene.id);
      initial[scene.id] = std::move(scene.initial_dets);
      gts[scene.id] = std::move(scene.gts);
    }
  } else {
    ids = txt_stems(o.labels);
    for (const std::string& id : ids) {
      auto& scene_gts = gts[id];
      for (const KittiLabel& k : read_label_file(join(o.labels, id + ".txt"))) {
        if (k.type == type) scene_gts.push_back(to_ground_truth(k));
      }
    }
  }
  if (!o.initial.empty()) {
    initial = read_result_dir(o.initial, ids, type);
  } else if (o.dataset.empty()) {
    throw Error(ErrorCategory::Config, "--initial is required with --labels");
  }
  std::optional<DetsByScene> refined;
  if (!o.refined.empty()) refined = read_result_dir(o.refined, ids, type);

  out << "config: " << cfg.to_line() << "\n";
  ensure_dir(o.out);
  const auto ap0 = evaluate(initial, gts, spec);
  std::string pr0 = csv_comment(cfg) + ap_csv_header() + "\n";
  for (const APResult& r : ap0) pr0 += ap_csv_row(r) + "\n";
  write_text(join(o.out, "pr_initial.csv"), pr0);

  std::string table = csv_comment(cfg);
  if (refined) {
    const auto ap1 = evaluate(*refined, gts, spec);
    std::string pr1 = csv_comment(cfg) + ap_csv_header() + "\n";
    for (const APResult& r : ap1) pr1 += ap_csv_row(r) + "\n";
    write_text(join(o.out, "pr_refined.csv"), pr1);
    table += "mode,threshold,difficulty,ap_initial,ap_refined,relative_gain\n";
    for (std::size_t k = 0; k < ap0.size(); ++k) {
      const double rel = (ap1[k].ap - ap0[k].ap) / ap0[k].ap;
      table += mode_name(ap0[k].mode) + "," + fmt(ap0[k].threshold) + "," + difficulty_name(ap0[k].difficulty) +
               "," + fmt(ap0[k].ap) + "," + fmt(ap1[k].ap) + "," + fmt(rel) + "\n";
      out << mode_name(ap0[k].mode) << " @" << fmt(ap0[k].threshold) << " " << difficulty_name(ap0[k].difficulty)
          << ": AP " << fmt_fixed(ap0[k].ap) << " -> " << fmt_fixed(ap1[k].ap) << "\n";
    }
  } else {
    table += "mode,threshold,difficulty,ap_initial\n";
    for (const APResult& r : ap0) {
      table += mode_name(r.mode) + "," + fmt(r.threshold) + "," + difficulty_name(r.difficulty) + "," + fmt(r.ap) +
               "\n";
      out << mode_name(r.mode) << " @" << fmt(r.threshold) << " " << difficulty_name(r.difficulty) << ": AP "
          << fmt_fixed(r.ap) << "\n";
    }
  }
  write_text(join(o.out, "eval.csv"), table);
  return 0;
}

// ---- sweep-T ----

int cmd_sweep_t(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  require(o.dataset, "--dataset");
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  const DirectorySceneSource data = open_split(o.dataset, cfg.get("split"));
  if (data.size() == 0) throw Error(ErrorCategory::Input, "no scenes in the selected split");
  std::vector<Scene> scenes;
  for (std::size_t k = 0; k < data.size(); ++k) scenes.push_back(data.get(k));
  const EnergyNetParams params = load_matching_checkpoint(o.checkpoint, cfg, scenes.front().grid.channels());
  RefineConfig rc = cfg.refine();
  EvalSpec spec = cfg.eval();
  spec.modes = {IouMode::Box3D};
  spec.difficulties = {Difficulty::All};
  const auto sweep = cfg.sweep_iterations();
  const bool timing = cfg.timing();
  out << "config: " << cfg.to_line() << "\n";
  ensure_dir(o.out);

  GtsByScene gts;
  for (const Scene& s : scenes) gts[s.id] = s.gts;
  std::string csv = csv_comment(cfg);
  csv += "# mean_ap averages 3D AP over eval.thresholds; throughput is scenes per second of refinement\n";
  csv += "T,mean_ap";
  for (double t : spec.thresholds) csv += ",ap_" + fmt(t);
  csv += ",scenes_per_second\n";
  for (int T : sweep) {
    rc.iterations = T;
    DetsByScene dets;
    const auto start = Clock::now();
    for (const Scene& s : scenes) {
      auto& out_dets = dets[s.id];
      for (const RefineResult& r : refine_all(params, s.grid, s.initial_dets, rc)) out_dets.push_back(r.detection);
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const auto aps = evaluate(dets, gts, spec);
    double mean = 0.0;
    for (const APResult& r : aps) mean += r.ap;
    mean /= static_cast<double>(aps.size());
    const double throughput = timing ? static_cast<double>(scenes.size()) / seconds : 0.0;
    csv += std::to_string(T) + "," + fmt(mean);
    for (const APResult& r : aps) csv += "," + fmt(r.ap);
    csv += "," + fmt(throughput) + "\n";
    out << "T " << T << ": mean AP " << fmt_fixed(mean) << ", " << fmt_fixed(throughput) << " scenes/s\n";
  }
  write_text(join(o.out, "sweep_T.csv"), csv);
  return 0;
}

// ---- angle-scan ----

int cmd_angle_scan(const Options& o, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  if (!o.scene.empty()) cfg.set("scan.scene", o.scene);
  if (o.det) cfg.set("scan.detection", std::to_string(*o.det));
  require(o.dataset, "--dataset");
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  require_exists(o.dataset);
  const auto all = read_manifest(o.dataset);
  std::string id = cfg.get("scan.scene");
  if (id.empty()) {
    const auto split = filter_split(all, parse_split(cfg.get("split")));
    if (split.empty()) throw Error(ErrorCategory::Input, "no scenes in the selected split");
    id = split.front().id;
  }
  std::vector<DatasetEntry> pick;
  for (const DatasetEntry& e : all) {
    if (e.id == id) pick.push_back(e);
  }
  if (pick.empty()) throw Error(ErrorCategory::Input, "unknown scene id '" + id + "'");
  const Scene scene = DirectorySceneSource(o.dataset, pick).get(0);
  const long index = cfg.get_int("scan.detection");
  if (index < 0 || index >= static_cast<long>(scene.initial_dets.size())) {
    throw Error(ErrorCategory::Input,
                "detection index " + std::to_string(index) + " out of range for scene " + id + " with " +
                    std::to_string(scene.initial_dets.size()) + " detections",
                index);
  }
  const EnergyNetParams params = load_matching_checkpoint(o.checkpoint, cfg, scene.grid.channels());
  out << "config: " << cfg.to_line() << "\n";
  ensure_dir(o.out);
  const auto scan = angle_scan(params, scene.grid, scene.initial_dets[index].box,
                               static_cast<int>(cfg.get_int("scan.points")));
  std::string csv = csv_comment(cfg) + "dphi,f\n";
  for (const AngleScanPoint& p : scan) csv += fmt(p.dphi) + "," + fmt(p.value) + "\n";
  write_text(join(o.out, "angle_scan.csv"), csv);
  out << "dominant maxima at dphi:";
  for (std::size_t k : dominant_maxima(scan)) out << " " << fmt_fixed(scan[k].dphi);
  out << "\n";
  return 0;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Configuration file (key = value lines)");
  cmd->add_option("--seed", o.seed, "Seed for generation, initialization and training");
  cmd->add_option("--set", o.sets, "Override one configuration key, key=value")->allow_extra_args(false);
  cmd->add_option("--out", o.out, "Output directory");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy-based refinement of 3D box detections"};
  app.set_version_flag("--version", EBM3D_VERSION);
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth-gen", "Generate a synthetic dataset");
  add_common(synth, o);

  auto* train = app.add_subcommand("train", "Train the energy network with NCE");
  add_common(train, o);
  train->add_option("--dataset", o.dataset, "Dataset directory");
  train->add_option("--checkpoint", o.checkpoint, "Checkpoint to resume from");

  auto* refine = app.add_subcommand("refine", "Refine detections by gradient ascent");
  add_common(refine, o);
  refine->add_option("--dataset", o.dataset, "Dataset directory");
  refine->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");

  auto* eval = app.add_subcommand("eval", "Compute AP of initial and refined detections");
  add_common(eval, o);
  eval->add_option("--dataset", o.dataset, "Dataset directory (ground truth and initial detections)");
  eval->add_option("--labels", o.labels, "Directory of KITTI label files used as ground truth");
  eval->add_option("--initial", o.initial, "Directory of KITTI result files with initial detections");
  eval->add_option("--refined", o.refined, "Directory of KITTI result files with refined detections");

  auto* sweep = app.add_subcommand("sweep-T", "AP and throughput against the number of iterations");
  add_common(sweep, o);
  sweep->add_option("--dataset", o.dataset, "Dataset directory");
  sweep->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");

  auto* scan = app.add_subcommand("angle-scan", "Energy along a full turn of one detection's heading");
  add_common(scan, o);
  scan->add_option("--dataset", o.dataset, "Dataset directory");
  scan->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");
  scan->add_option("--scene", o.scene, "Scene id");
  scan->add_option("--det", o.det, "Detection index within the scene");

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: config: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth_gen(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (refine->parsed()) return cmd_refine(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (sweep->parsed()) return cmd_sweep_t(o, out);
    if (scan->parsed()) return cmd_angle_scan(o, out);
  } catch (const Error& e) {
    err << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace ebm3d
