#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ebm3d/scene.hpp"

namespace ebm3d {

// Desk-scale stand-in for a LiDAR detector: a 32 m x 32 m world of cars,
// rendered into a 128 x 128 x 16 BEV feature map, with perturbed initial
// detections.
struct SynthConfig {
  int width = 128;
  int length = 128;
  int channels = 16;
  double res = 0.25;
  double origin_x = 0.125;   // world x of cell (0, 0) center
  double origin_y = -15.875; // world y of cell (0, 0) center
  double margin = 2.0;       // min distance from box center to the world edge

  int min_cars = 1;
  int max_cars = 6;
  double h_min = 1.4, h_max = 1.8;
  double w_min = 1.5, w_max = 1.9;
  double l_min = 3.4, l_max = 4.6;
  double ground_z = 0.0;     // cz = ground_z + h / 2 + jitter
  double cz_jitter = 0.03;
  double max_pair_iou = 0.05;
  int max_attempts = 1000;   // placement retries per box

  // Detection perturbation std over (cx, cy, cz, h, w, l, phi).
  BoxVector det_std{0.25, 0.25, 0.1, 0.08, 0.08, 0.15, 0.1};
  double feature_noise = 0.05;
  // Heading channels encode 2*phi, so a box and its pi-rotation render the same.
  bool symmetric_rendering = false;
  std::uint64_t seed = 7;

  void validate() const;
  double x_min() const { return origin_x - 0.5 * res; }
  double x_max() const { return origin_x + (width - 0.5) * res; }
  double y_min() const { return origin_y - 0.5 * res; }
  double y_max() const { return origin_y + (length - 0.5) * res; }
};

inline constexpr double kOccupancySoftness = 0.25;
inline constexpr double kDistanceClip = 2.0;

// Per-cell channels: 0 soft occupancy, 1 clipped signed distance to the
// nearest box boundary (negative inside), 2-3 heading of the nearest box
// within 2 m, 4.. fixed random mixtures of 0-3 plus Gaussian noise.
FeatureGrid render_features(const SynthConfig& cfg, const std::vector<Box3D>& boxes, std::mt19937_64& rng);

// Noise-free value of channels 0-3 at a world point.
std::array<double, 4> render_base_channels(const SynthConfig& cfg, const std::vector<Box3D>& boxes, Vec2 p);

// Monotone decreasing map from a normalized perturbation magnitude to (0, 1).
double detection_score(const BoxVector& perturbation, const BoxVector& stds);

Scene gen_scene(const SynthConfig& cfg, const std::string& id, std::mt19937_64& rng);

enum class Split { Train, Val };
std::string split_name(Split s);
Split parse_split(const std::string& s);

struct DatasetEntry {
  std::string id;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  std::string file;  // scene file name inside a dataset directory
};

// Scene ids and per-scene seeds derived from cfg.seed; the last
// round(n * val_fraction) scenes form the validation split.
std::vector<DatasetEntry> plan_dataset(const SynthConfig& cfg, int n_scenes, double val_fraction = 0.2);
std::vector<DatasetEntry> filter_split(const std::vector<DatasetEntry>& entries, Split split);

// Generates scenes on demand from their entries.
class SyntheticSceneSource : public SceneSource {
 public:
  SyntheticSceneSource(SynthConfig cfg, std::vector<DatasetEntry> entries)
      : cfg_(std::move(cfg)), entries_(std::move(entries)) {}
  std::size_t size() const override { return entries_.size(); }
  Scene get(std::size_t index) const override;
  const std::vector<DatasetEntry>& entries() const { return entries_; }

 private:
  SynthConfig cfg_;
  std::vector<DatasetEntry> entries_;
};

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
};

Dataset gen_dataset(const SynthConfig& cfg, int n_scenes, double val_fraction = 0.2);

// Scene file: magic, version, grid header, float64 payload, GT and detection
// records, all little-endian.
std::vector<std::uint8_t> encode_scene(const Scene& scene);
Scene decode_scene(std::vector<std::uint8_t> bytes);
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

// Dataset directory: one scene file per entry plus manifest.txt with lines
// "<id> <split> <file>".
inline constexpr char kManifestName[] = "manifest.txt";
void write_manifest(const std::string& dir, const std::vector<DatasetEntry>& entries);
std::vector<DatasetEntry> read_manifest(const std::string& dir);

class DirectorySceneSource : public SceneSource {
 public:
  DirectorySceneSource(std::string dir, std::vector<DatasetEntry> entries)
      : dir_(std::move(dir)), entries_(std::move(entries)) {}
  std::size_t size() const override { return entries_.size(); }
  Scene get(std::size_t index) const override;
  const std::vector<DatasetEntry>& entries() const { return entries_; }

 private:
  std::string dir_;
  std::vector<DatasetEntry> entries_;
};

}  // namespace ebm3d
