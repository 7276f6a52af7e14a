#include "ebm3d/run_config.hpp"

#include <charconv>
#include <fstream>

#include "ebm3d/error.hpp"

namespace ebm3d {

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table = {
      {"seed", "7"},
      {"timing", "true"},
      {"split", "val"},
      {"synth.scenes", "100"},
      {"synth.val_fraction", "0.2"},
      {"synth.width", "128"},
      {"synth.length", "128"},
      {"synth.channels", "16"},
      {"synth.res", "0.25"},
      {"synth.origin_x", "0.125"},
      {"synth.origin_y", "-15.875"},
      {"synth.margin", "2"},
      {"synth.min_cars", "1"},
      {"synth.max_cars", "6"},
      {"synth.h_range", "1.4,1.8"},
      {"synth.w_range", "1.5,1.9"},
      {"synth.l_range", "3.4,4.6"},
      {"synth.ground_z", "0"},
      {"synth.cz_jitter", "0.03"},
      {"synth.max_pair_iou", "0.05"},
      {"synth.max_attempts", "1000"},
      {"synth.det_std", "0.25,0.25,0.1,0.08,0.08,0.15,0.1"},
      {"synth.feature_noise", "0.05"},
      {"synth.symmetric_rendering", "false"},
      {"pool.grid_w", "4"},
      {"pool.grid_l", "7"},
      {"net.enc_dim", "16"},
      {"net.hidden", "1024"},
      {"noise.sigma3", "0.25,0.25,0.125,0.125,0.125,0.125,0.0625"},
      {"noise.ratios", "0.25,0.5,1"},
      {"noise.beta", "0"},
      {"train.objective", "nce"},
      {"train.noise_samples", "256"},
      {"train.learning_rate", "0.0001"},
      {"train.batch_scenes", "1"},
      {"train.epochs", "4"},
      {"train.max_steps", "0"},
      {"refine.iterations", "10"},
      {"refine.lambda", "0.0002"},
      {"refine.eta", "0.5"},
      {"refine.trace", "false"},
      {"eval.modes", "3d,bev"},
      {"eval.thresholds", "0.7,0.75,0.8,0.85,0.9"},
      {"eval.difficulties", "all"},
      {"eval.class", "Car"},
      {"sweep.iterations", "0,1,2,4,8,10,16,32,64"},
      {"scan.scene", ""},
      {"scan.detection", "0"},
      {"scan.points", "101"},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T value{};
  const std::string t = trim(text);
  const char* first = t.data();
  const char* last = first + t.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (t.empty() || ec != std::errc() || ptr != last) {
    throw Error(ErrorCategory::Config, "invalid value '" + text + "' for " + key);
  }
  return value;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = s.find(',', pos);
    out.push_back(trim(s.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

BoxVector box_vector(const RunConfig& cfg, const std::string& key) {
  const auto v = cfg.get_doubles(key);
  if (v.size() != Box3D::kDims) throw Error(ErrorCategory::Config, key + " needs 7 comma-separated values");
  BoxVector out;
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::pair<double, double> range(const RunConfig& cfg, const std::string& key) {
  const auto v = cfg.get_doubles(key);
  if (v.size() != 2) throw Error(ErrorCategory::Config, key + " needs 'min,max'");
  return {v[0], v[1]};
}

int to_int(const RunConfig& cfg, const std::string& key) { return static_cast<int>(cfg.get_int(key)); }

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCategory::Config, "unknown configuration key '" + key + "'");
  it->second = trim(value);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error(ErrorCategory::Config, "override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::Io, "cannot read config file: " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    if (line.find('=') == std::string::npos) {
      throw Error(ErrorCategory::Config, path + ":" + std::to_string(line_no) + ": expected 'key = value'", line_no);
    }
    apply_override(line);
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCategory::Config, "unknown configuration key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const { return parse_value<double>(key, get(key)); }
long RunConfig::get_int(const std::string& key) const { return parse_value<long>(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCategory::Config, "invalid boolean '" + v + "' for " + key);
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(get(key))) out.push_back(parse_value<double>(key, item));
  return out;
}

std::vector<std::string> RunConfig::get_strings(const std::string& key) const { return split_list(get(key)); }

std::string RunConfig::to_line() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    if (!out.empty()) out += ' ';
    out += k + "=" + v;
  }
  return out;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t RunConfig::seed() const {
  const long s = get_int("seed");
  if (s < 0) throw Error(ErrorCategory::Config, "seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

SynthConfig RunConfig::synth() const {
  SynthConfig c;
  c.width = to_int(*this, "synth.width");
  c.length = to_int(*this, "synth.length");
  c.channels = to_int(*this, "synth.channels");
  c.res = get_double("synth.res");
  c.origin_x = get_double("synth.origin_x");
  c.origin_y = get_double("synth.origin_y");
  c.margin = get_double("synth.margin");
  c.min_cars = to_int(*this, "synth.min_cars");
  c.max_cars = to_int(*this, "synth.max_cars");
  std::tie(c.h_min, c.h_max) = range(*this, "synth.h_range");
  std::tie(c.w_min, c.w_max) = range(*this, "synth.w_range");
  std::tie(c.l_min, c.l_max) = range(*this, "synth.l_range");
  c.ground_z = get_double("synth.ground_z");
  c.cz_jitter = get_double("synth.cz_jitter");
  c.max_pair_iou = get_double("synth.max_pair_iou");
  c.max_attempts = to_int(*this, "synth.max_attempts");
  c.det_std = box_vector(*this, "synth.det_std");
  c.feature_noise = get_double("synth.feature_noise");
  c.symmetric_rendering = get_bool("synth.symmetric_rendering");
  c.seed = seed();
  c.validate();
  return c;
}

PoolConfig RunConfig::pool() const {
  PoolConfig p;
  p.grid_w = to_int(*this, "pool.grid_w");
  p.grid_l = to_int(*this, "pool.grid_l");
  p.validate();
  return p;
}

EnergyNetDims RunConfig::net(int channels) const {
  EnergyNetDims d;
  d.pool = pool();
  d.channels = channels;
  d.enc_dim = to_int(*this, "net.enc_dim");
  d.hidden = to_int(*this, "net.hidden");
  d.validate();
  return d;
}

NoiseModel RunConfig::noise() const {
  const auto ratios = get_doubles("noise.ratios");
  NoiseModel nm = NoiseModel::from_sigma3(box_vector(*this, "noise.sigma3"), ratios, get_double("noise.beta"));
  nm.validate();
  return nm;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  const std::string& objective = get("train.objective");
  if (objective == "nce") {
    t.objective = NceObjective::Nce;
  } else if (objective == "nce+") {
    t.objective = NceObjective::NcePlus;
  } else {
    throw Error(ErrorCategory::Config, "train.objective must be 'nce' or 'nce+'");
  }
  t.noise_samples = to_int(*this, "train.noise_samples");
  t.learning_rate = get_double("train.learning_rate");
  t.batch_scenes = to_int(*this, "train.batch_scenes");
  t.epochs = to_int(*this, "train.epochs");
  t.max_steps = get_int("train.max_steps");
  // Separate stream from scene generation.
  t.seed = seed() * 2 + 1;
  t.validate();
  return t;
}

RefineConfig RunConfig::refine() const {
  RefineConfig r;
  r.iterations = to_int(*this, "refine.iterations");
  r.lambda = get_double("refine.lambda");
  r.eta = get_double("refine.eta");
  r.validate();
  return r;
}

EvalSpec RunConfig::eval() const {
  EvalSpec e;
  e.modes.clear();
  for (const std::string& m : get_strings("eval.modes")) e.modes.push_back(parse_mode(m));
  e.thresholds = get_doubles("eval.thresholds");
  for (double t : e.thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCategory::Config, "eval thresholds must lie in (0, 1]");
  }
  e.difficulties.clear();
  for (const std::string& d : get_strings("eval.difficulties")) e.difficulties.push_back(parse_difficulty(d));
  if (e.modes.empty() || e.thresholds.empty() || e.difficulties.empty()) {
    throw Error(ErrorCategory::Config, "eval modes, thresholds and difficulties must be non-empty");
  }
  return e;
}

std::vector<int> RunConfig::sweep_iterations() const {
  std::vector<int> out;
  for (const std::string& item : get_strings("sweep.iterations")) {
    const long t = parse_value<long>("sweep.iterations", item);
    if (t < 0) throw Error(ErrorCategory::Config, "sweep.iterations must be >= 0");
    out.push_back(static_cast<int>(t));
  }
  if (out.empty()) throw Error(ErrorCategory::Config, "sweep.iterations is empty");
  return out;
}

}  // namespace ebm3d
