#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ebm3d/energy_net.hpp"
#include "ebm3d/scene.hpp"

namespace ebm3d {

using Rng = std::mt19937_64;

// q(y | y_i): equally weighted mixture of K diagonal Gaussians centered at the
// annotation, one standard deviation per component and box coordinate.
struct NoiseModel {
  std::vector<BoxVector> sigma;
  double beta = 0.0;  // NCE+ target-perturbation scale

  int components() const { return static_cast<int>(sigma.size()); }
  void validate() const;

  // Components sigma3 * ratio[k].
  static NoiseModel from_sigma3(const BoxVector& sigma3, std::span<const double> ratios, double beta = 0.0);
  // K = 3 with ratios (1/4, 1/2, 1) and sigma3 = 0.25 for (cx, cy), 0.125 for
  // (cz, h, w, l), 0.0625 for phi.
  static NoiseModel car_default();
};

enum class NceObjective { Nce, NcePlus };

struct TrainConfig {
  int noise_samples = 256;  // M
  double learning_rate = 1e-4;
  int batch_scenes = 1;
  int epochs = 4;
  long max_steps = 0;  // 0 = no cap
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  NceObjective objective = NceObjective::Nce;
  std::uint64_t seed = 1;

  void validate() const;
};

// Redraws until h, w and l are positive.
Box3D sample_noise(const NoiseModel& nm, const Box3D& center, Rng& rng);

// Zero-centered perturbation from the mixture with variances beta * sigma_k^2.
BoxVector sample_target_perturbation(const NoiseModel& nm, Rng& rng);

double log_q(const NoiseModel& nm, const Box3D& y, const Box3D& center);

// J_i = z_0 - logsumexp(z) for one annotation. Writes d(-J_i)/d z_m =
// softmax(z)_m - [m == 0] into `d_logits`.
double nce_term(std::span<const double> logits, std::span<double> d_logits);

struct NceAnnotation {
  const FeatureGrid* grid = nullptr;
  Box3D target;
  std::string scene_id;
  int index = 0;  // annotation index within the scene
};

struct NceResult {
  double loss = 0.0;               // J = -mean_i J_i
  std::vector<double> grad;        // d J / d theta
};

NceResult nce_loss(const EnergyNetParams& params, std::span<const NceAnnotation> batch, const NoiseModel& nm,
                   int noise_samples, NceObjective objective, Rng& rng);

struct StepLog {
  int epoch = 0;
  long step = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  EnergyNetParams params;
  std::vector<StepLog> steps;
  std::vector<double> epoch_loss;  // mean step loss per epoch
};

// Called after every epoch with the current parameters; lets callers
// checkpoint.
using EpochCallback = std::function<void(int epoch, const EnergyNetParams& params)>;

// Mini-batch Adam with cosine learning-rate decay over the full run. Feature
// grids are fixed inputs; only the energy network parameters are updated.
TrainResult train(EnergyNetParams params, const SceneSource& data, const TrainConfig& cfg, const NoiseModel& nm,
                  const EpochCallback& on_epoch = {});

}  // namespace ebm3d
