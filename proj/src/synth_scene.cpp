#include "ebm3d/synth_scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ebm3d/binary_io.hpp"
#include "ebm3d/error.hpp"

namespace ebm3d {

namespace {

constexpr char kSceneMagic[] = "EBM3DSCN";
constexpr std::uint32_t kSceneVersion = 1;
constexpr int kBaseChannels = 4;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mixing weights of the derived channels; fixed for a configuration seed.
std::vector<std::array<double, kBaseChannels>> mixing_weights(const SynthConfig& cfg) {
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x6d69786d69786d69ULL));
  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<std::array<double, kBaseChannels>> weights(cfg.channels - kBaseChannels);
  for (auto& row : weights) {
    for (double& v : row) v = normal(rng);
  }
  return weights;
}

double rect_signed_distance(const Box3D& box, double phi, Vec2 p) {
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const double dx = p.x - box.cx;
  const double dy = p.y - box.cy;
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  const double qx = std::abs(along) - 0.5 * box.l;
  const double qy = std::abs(across) - 0.5 * box.w;
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
  const double inside = std::min(std::max(qx, qy), 0.0);
  return outside + inside;
}

}  // namespace

void SynthConfig::validate() const {
  if (channels < kBaseChannels) throw Error(ErrorCategory::Config, "synthetic grids need at least 4 channels");
  if (width < 2 || length < 2 || !(res > 0.0)) throw Error(ErrorCategory::Config, "invalid synthetic grid shape");
  if (min_cars < 0 || max_cars < min_cars) throw Error(ErrorCategory::Config, "invalid cars-per-scene range");
  if (!(h_min > 0.0 && w_min > 0.0 && l_min > 0.0) || h_max < h_min || w_max < w_min || l_max < l_min) {
    throw Error(ErrorCategory::Config, "invalid box size ranges");
  }
  for (double s : det_std) {
    if (!(s >= 0.0)) throw Error(ErrorCategory::Config, "detection perturbation stds must be >= 0");
  }
  if (!(feature_noise >= 0.0)) throw Error(ErrorCategory::Config, "feature noise std must be >= 0");
  if (max_attempts < 1) throw Error(ErrorCategory::Config, "max_attempts must be >= 1");
}

std::array<double, 4> render_base_channels(const SynthConfig& cfg, const std::vector<Box3D>& boxes, Vec2 p) {
  double best = kDistanceClip;
  double heading = 0.0;
  bool near = false;
  for (const Box3D& box : boxes) {
    // Canonical angle: in symmetric mode a box and its pi-rotation share it.
    const double phi = cfg.symmetric_rendering ? std::remainder(box.phi, kPi) : reduce_angle(box.phi);
    const double sd = rect_signed_distance(box, phi, p);
    if (sd < best) {
      best = sd;
      heading = phi;
      near = true;
    }
  }
  const double occupancy = 1.0 / (1.0 + std::exp(best / kOccupancySoftness));
  const double distance = std::clamp(best, -kDistanceClip, kDistanceClip);
  if (!near) return {occupancy, distance, 0.0, 0.0};
  const double angle = cfg.symmetric_rendering ? 2.0 * heading : heading;
  return {occupancy, distance, std::cos(angle), std::sin(angle)};
}

FeatureGrid render_features(const SynthConfig& cfg, const std::vector<Box3D>& boxes, std::mt19937_64& rng) {
  cfg.validate();
  FeatureGrid grid(cfg.width, cfg.length, cfg.channels, cfg.origin_x, cfg.origin_y, cfg.res);
  const auto mix = mixing_weights(cfg);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < cfg.width; ++i) {
    for (int j = 0; j < cfg.length; ++j) {
      const Vec2 p = grid.grid_to_world({static_cast<double>(i), static_cast<double>(j)});
      const std::array<double, 4> base = render_base_channels(cfg, boxes, p);
      for (int c = 0; c < kBaseChannels; ++c) grid.at(i, j, c) = base[c];
      for (int c = kBaseChannels; c < cfg.channels; ++c) {
        const auto& w = mix[c - kBaseChannels];
        double v = w[0] * base[0] + w[1] * base[1] + w[2] * base[2] + w[3] * base[3];
        v += cfg.feature_noise * noise(rng);
        grid.at(i, j, c) = v;
      }
    }
  }
  return grid;
}

double detection_score(const BoxVector& perturbation, const BoxVector& stds) {
  double acc = 0.0;
  for (int d = 0; d < Box3D::kDims; ++d) {
    if (stds[d] > 0.0) {
      const double z = perturbation[d] / stds[d];
      acc += z * z;
    }
  }
  const double magnitude = std::sqrt(acc / Box3D::kDims);
  return 0.01 + 0.98 * std::exp(-magnitude);
}

Scene gen_scene(const SynthConfig& cfg, const std::string& id, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_int_distribution<int> count(cfg.min_cars, cfg.max_cars);
  std::uniform_real_distribution<double> ux(cfg.x_min() + cfg.margin, cfg.x_max() - cfg.margin);
  std::uniform_real_distribution<double> uy(cfg.y_min() + cfg.margin, cfg.y_max() - cfg.margin);
  std::uniform_real_distribution<double> uh(cfg.h_min, cfg.h_max);
  std::uniform_real_distribution<double> uw(cfg.w_min, cfg.w_max);
  std::uniform_real_distribution<double> ul(cfg.l_min, cfg.l_max);
  std::uniform_real_distribution<double> uphi(-kPi, kPi);
  std::normal_distribution<double> normal(0.0, 1.0);

  if (cfg.x_max() - cfg.x_min() <= 2.0 * cfg.margin || cfg.y_max() - cfg.y_min() <= 2.0 * cfg.margin) {
    throw Error(ErrorCategory::Generation, "world extent too small for the placement margin");
  }

  const int n = count(rng);
  std::vector<Box3D> boxes;
  for (int k = 0; k < n; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      Box3D box;
      box.h = uh(rng);
      box.w = uw(rng);
      box.l = ul(rng);
      box.phi = uphi(rng);
      box.cx = ux(rng);
      box.cy = uy(rng);
      box.cz = cfg.ground_z + 0.5 * box.h + cfg.cz_jitter * normal(rng);
      placed = std::all_of(boxes.begin(), boxes.end(), [&](const Box3D& other) {
        return bev_iou(to_bev(box), to_bev(other)) < cfg.max_pair_iou;
      });
      if (placed) boxes.push_back(box);
    }
    if (!placed) {
      throw Error(ErrorCategory::Generation, "could not place " + std::to_string(n) + " boxes in scene " + id +
                                                 " after " + std::to_string(cfg.max_attempts) + " attempts");
    }
  }

  Scene scene{id, render_features(cfg, boxes, rng), {}, {}};
  for (const Box3D& box : boxes) {
    scene.gts.push_back({box, std::nullopt});
    const BoxVector gt = box.to_array();
    for (;;) {
      BoxVector delta, perturbed;
      for (int d = 0; d < Box3D::kDims; ++d) {
        delta[d] = cfg.det_std[d] * normal(rng);
        perturbed[d] = gt[d] + delta[d];
      }
      const Box3D det = Box3D::from_array(perturbed);
      if (det.valid()) {
        scene.initial_dets.push_back({det, detection_score(delta, cfg.det_std)});
        break;
      }
    }
  }
  return scene;
}

std::string split_name(Split s) { return s == Split::Train ? "train" : "val"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  throw Error(ErrorCategory::Parse, "unknown split '" + s + "'");
}

std::vector<DatasetEntry> plan_dataset(const SynthConfig& cfg, int n_scenes, double val_fraction) {
  if (n_scenes < 1) throw Error(ErrorCategory::Config, "empty dataset requested");
  if (!(val_fraction >= 0.0 && val_fraction <= 1.0)) {
    throw Error(ErrorCategory::Config, "validation fraction must lie in [0, 1]");
  }
  const int n_val = static_cast<int>(std::lround(n_scenes * val_fraction));
  std::vector<DatasetEntry> entries;
  entries.reserve(n_scenes);
  for (int k = 0; k < n_scenes; ++k) {
    char id[16];
    std::snprintf(id, sizeof(id), "%06d", k);
    DatasetEntry e;
    e.id = id;
    e.split = k >= n_scenes - n_val ? Split::Val : Split::Train;
    e.seed = splitmix64(cfg.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(k));
    e.file = e.id + ".scene";
    entries.push_back(e);
  }
  return entries;
}

std::vector<DatasetEntry> filter_split(const std::vector<DatasetEntry>& entries, Split split) {
  std::vector<DatasetEntry> out;
  for (const DatasetEntry& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

Scene SyntheticSceneSource::get(std::size_t index) const {
  const DatasetEntry& e = entries_.at(index);
  std::mt19937_64 rng(e.seed);
  return gen_scene(cfg_, e.id, rng);
}

Dataset gen_dataset(const SynthConfig& cfg, int n_scenes, double val_fraction) {
  const std::vector<DatasetEntry> entries = plan_dataset(cfg, n_scenes, val_fraction);
  const SyntheticSceneSource source(cfg, entries);
  Dataset ds;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    (entries[k].split == Split::Train ? ds.train : ds.val).push_back(source.get(k));
  }
  return ds;
}

std::vector<std::uint8_t> encode_scene(const Scene& scene) {
  const FeatureGrid& g = scene.grid;
  BinaryWriter w;
  w.put_raw(std::string_view(kSceneMagic, 8));
  w.put_u32(kSceneVersion);
  w.put_u32(g.width());
  w.put_u32(g.length());
  w.put_u32(g.channels());
  w.put_f64(g.res());
  w.put_f64(g.origin_x());
  w.put_f64(g.origin_y());
  w.put_string(scene.id);
  w.put_f64s(g.data());
  w.put_u32(static_cast<std::uint32_t>(scene.gts.size()));
  for (const GroundTruth& gt : scene.gts) {
    w.put_f64s(gt.box.to_array());
    w.put_u8(gt.difficulty ? 1 : 0);
    if (gt.difficulty) {
      w.put_f64(gt.difficulty->height_px);
      w.put_i32(gt.difficulty->occlusion);
      w.put_f64(gt.difficulty->truncation);
    }
  }
  w.put_u32(static_cast<std::uint32_t>(scene.initial_dets.size()));
  for (const Detection& d : scene.initial_dets) {
    w.put_f64s(d.box.to_array());
    w.put_f64(d.score);
  }
  return w.bytes();
}

Scene decode_scene(std::vector<std::uint8_t> bytes) {
  BinaryReader r(std::move(bytes));
  if (r.get_raw(8) != std::string_view(kSceneMagic, 8)) throw Error(ErrorCategory::Parse, "not a scene file");
  const std::uint32_t version = r.get_u32();
  if (version != kSceneVersion) throw Error(ErrorCategory::Parse, "unsupported scene version " + std::to_string(version));
  const int width = static_cast<int>(r.get_u32());
  const int length = static_cast<int>(r.get_u32());
  const int channels = static_cast<int>(r.get_u32());
  const double res = r.get_f64();
  const double ox = r.get_f64();
  const double oy = r.get_f64();
  std::string id = r.get_string();
  std::vector<double> data(static_cast<std::size_t>(width) * length * channels);
  r.get_f64s(data);
  Scene scene{std::move(id), FeatureGrid(width, length, channels, ox, oy, res, std::move(data)), {}, {}};
  auto read_box = [&] {
    BoxVector v;
    r.get_f64s(v);
    return Box3D::from_array(v);
  };
  const std::uint32_t n_gt = r.get_u32();
  for (std::uint32_t k = 0; k < n_gt; ++k) {
    GroundTruth gt{read_box(), std::nullopt};
    if (r.get_u8() != 0) {
      DifficultyInfo info;
      info.height_px = r.get_f64();
      info.occlusion = r.get_i32();
      info.truncation = r.get_f64();
      gt.difficulty = info;
    }
    scene.gts.push_back(gt);
  }
  const std::uint32_t n_det = r.get_u32();
  for (std::uint32_t k = 0; k < n_det; ++k) {
    Detection d{read_box(), 0.0};
    d.score = r.get_f64();
    scene.initial_dets.push_back(d);
  }
  if (!r.at_end()) throw Error(ErrorCategory::Parse, "trailing bytes in scene file");
  return scene;
}

void save_scene(const Scene& scene, const std::string& path) { write_file_bytes(path, encode_scene(scene)); }

Scene load_scene(const std::string& path) {
  try {
    return decode_scene(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.category(), path + ": " + e.what(), e.index());
  }
}

void write_manifest(const std::string& dir, const std::vector<DatasetEntry>& entries) {
  const std::string path = (std::filesystem::path(dir) / kManifestName).string();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCategory::Io, "cannot write manifest: " + path);
  for (const DatasetEntry& e : entries) out << e.id << ' ' << split_name(e.split) << ' ' << e.file << '\n';
  if (!out) throw Error(ErrorCategory::Io, "write failed: " + path);
}

std::vector<DatasetEntry> read_manifest(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / kManifestName).string();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::Io, "cannot read manifest: " + path);
  std::vector<DatasetEntry> entries;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, split, file, extra;
    if (!(fields >> id >> split >> file) || (fields >> extra)) {
      throw Error(ErrorCategory::Parse, path + ":" + std::to_string(line_no) + ": expected '<id> <split> <file>'",
                  line_no);
    }
    DatasetEntry e;
    e.id = id;
    e.split = parse_split(split);
    e.file = file;
    entries.push_back(e);
  }
  return entries;
}

Scene DirectorySceneSource::get(std::size_t index) const {
  return load_scene((std::filesystem::path(dir_) / entries_.at(index).file).string());
}

}  // namespace ebm3d
