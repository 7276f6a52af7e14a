#pragma once

#include <map>
#include <string>
#include <vector>

#include "ebm3d/energy_net.hpp"
#include "ebm3d/evalkit.hpp"
#include "ebm3d/nce.hpp"
#include "ebm3d/refine.hpp"
#include "ebm3d/synth_scene.hpp"

namespace ebm3d {

// Flat key=value configuration shared by all commands. Every key has an
// embedded default; a config file and command-line overrides replace values
// in that order. Values are kept as written so the resolved configuration
// echoes back byte for byte.
class RunConfig {
 public:
  RunConfig();

  // Throws Config on an unknown key.
  void set(const std::string& key, const std::string& value);
  // "key=value".
  void apply_override(const std::string& assignment);
  // Lines "key = value"; '#' starts a comment.
  void load_file(const std::string& path);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // All keys on one line, "k=v" separated by spaces, sorted by key.
  std::string to_line() const;
  // One "k = v" line per key.
  std::string dump() const;

  std::uint64_t seed() const;
  SynthConfig synth() const;
  PoolConfig pool() const;
  EnergyNetDims net(int channels) const;
  NoiseModel noise() const;
  TrainConfig train() const;
  RefineConfig refine() const;
  EvalSpec eval() const;
  std::vector<int> sweep_iterations() const;
  bool timing() const { return get_bool("timing"); }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ebm3d
