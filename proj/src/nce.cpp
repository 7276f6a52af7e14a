#include "ebm3d/nce.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "ebm3d/error.hpp"

namespace ebm3d {

namespace {

constexpr double kLogSqrtTwoPi = 0.91893853320467274178;  // log(sqrt(2 pi))

double log_sum_exp(std::span<const double> v) {
  const double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

bool positive_size(const Box3D& b) { return b.h > 0.0 && b.w > 0.0 && b.l > 0.0; }

}  // namespace

void NoiseModel::validate() const {
  if (sigma.empty()) throw Error(ErrorCategory::Config, "noise model needs at least one component");
  for (const BoxVector& s : sigma) {
    for (double v : s) {
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCategory::Config, "noise sigmas must be positive");
    }
  }
  if (!(beta >= 0.0)) throw Error(ErrorCategory::Config, "NCE+ beta must be non-negative");
}

NoiseModel NoiseModel::from_sigma3(const BoxVector& sigma3, std::span<const double> ratios, double beta) {
  NoiseModel nm;
  nm.beta = beta;
  for (double r : ratios) {
    BoxVector s;
    for (int d = 0; d < Box3D::kDims; ++d) s[d] = sigma3[d] * r;
    nm.sigma.push_back(s);
  }
  nm.validate();
  return nm;
}

NoiseModel NoiseModel::car_default() {
  const BoxVector sigma3{0.25, 0.25, 0.125, 0.125, 0.125, 0.125, 0.0625};
  const std::array<double, 3> ratios{0.25, 0.5, 1.0};
  return from_sigma3(sigma3, ratios);
}

void TrainConfig::validate() const {
  if (noise_samples < 1) throw Error(ErrorCategory::Config, "noise sample count M must be >= 1");
  if (batch_scenes < 1) throw Error(ErrorCategory::Config, "batch size must be >= 1");
  if (epochs < 0 || max_steps < 0) throw Error(ErrorCategory::Config, "epochs and max_steps must be >= 0");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCategory::Config, "learning rate must be >= 0");
}

Box3D sample_noise(const NoiseModel& nm, const Box3D& center, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, nm.components() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const BoxVector c = center.to_array();
  for (;;) {
    const BoxVector& s = nm.sigma[pick(rng)];
    BoxVector y;
    for (int d = 0; d < Box3D::kDims; ++d) y[d] = c[d] + s[d] * normal(rng);
    const Box3D box = Box3D::from_array(y);
    if (positive_size(box)) return box;
  }
}

BoxVector sample_target_perturbation(const NoiseModel& nm, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, nm.components() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = std::sqrt(nm.beta);
  const BoxVector& s = nm.sigma[pick(rng)];
  BoxVector nu;
  for (int d = 0; d < Box3D::kDims; ++d) nu[d] = scale * s[d] * normal(rng);
  return nu;
}

double log_q(const NoiseModel& nm, const Box3D& y, const Box3D& center) {
  const BoxVector a = y.to_array();
  const BoxVector c = center.to_array();
  std::vector<double> comp(nm.sigma.size());
  for (std::size_t k = 0; k < nm.sigma.size(); ++k) {
    double acc = 0.0;
    for (int d = 0; d < Box3D::kDims; ++d) {
      const double s = nm.sigma[k][d];
      const double z = (a[d] - c[d]) / s;
      acc += -std::log(s) - kLogSqrtTwoPi - 0.5 * z * z;
    }
    comp[k] = acc;
  }
  return log_sum_exp(comp) - std::log(static_cast<double>(nm.sigma.size()));
}

double nce_term(std::span<const double> logits, std::span<double> d_logits) {
  const double lse = log_sum_exp(logits);
  for (std::size_t m = 0; m < logits.size(); ++m) {
    d_logits[m] = std::exp(logits[m] - lse) - (m == 0 ? 1.0 : 0.0);
  }
  return logits[0] - lse;
}

NceResult nce_loss(const EnergyNetParams& params, std::span<const NceAnnotation> batch, const NoiseModel& nm,
                   int noise_samples, NceObjective objective, Rng& rng) {
  if (batch.empty()) throw Error(ErrorCategory::Config, "NCE batch contains no annotations");
  NceResult result;
  result.grad.assign(params.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<Box3D> samples(noise_samples + 1);
  std::vector<double> logits(samples.size());
  std::vector<double> d_logits(samples.size());
  double sum_terms = 0.0;
  for (const NceAnnotation& ann : batch) {
    // The perturbation is always drawn so that NCE and NCE+ consume the
    // random stream identically.
    BoxVector target = ann.target.to_array();
    for (;;) {
      const BoxVector nu = sample_target_perturbation(nm, rng);
      if (objective == NceObjective::Nce) break;
      BoxVector perturbed;
      for (int d = 0; d < Box3D::kDims; ++d) perturbed[d] = target[d] + nu[d];
      if (positive_size(Box3D::from_array(perturbed))) {
        target = perturbed;
        break;
      }
    }
    samples[0] = Box3D::from_array(target);
    for (int m = 1; m <= noise_samples; ++m) samples[m] = sample_noise(nm, ann.target, rng);

    BatchPass pass(params, *ann.grid, samples, false);
    const std::vector<double>& f = pass.values();
    for (std::size_t m = 0; m < samples.size(); ++m) logits[m] = f[m] - log_q(nm, samples[m], ann.target);
    const double term = nce_term(logits, d_logits);
    if (!std::isfinite(term)) {
      throw Error(ErrorCategory::Numeric,
                  "non-finite NCE loss for scene " + ann.scene_id + " annotation " + std::to_string(ann.index),
                  ann.index);
    }
    sum_terms += term;
    for (double& d : d_logits) d *= inv_n;
    pass.backward(d_logits, result.grad, {});
  }
  result.loss = -sum_terms * inv_n;
  return result;
}

TrainResult train(EnergyNetParams params, const SceneSource& data, const TrainConfig& cfg, const NoiseModel& nm,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  nm.validate();
  if (data.size() == 0) throw Error(ErrorCategory::Config, "training dataset is empty");

  const std::size_t n = data.size();
  const long steps_per_epoch = static_cast<long>((n + cfg.batch_scenes - 1) / cfg.batch_scenes);
  long total_steps = steps_per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

  Rng rng(cfg.seed);
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{params, {}, {}};
  EnergyNetParams& theta = result.params;
  const auto start = std::chrono::steady_clock::now();
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs && step < total_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    long epoch_steps = 0;
    for (std::size_t begin = 0; begin < n && step < total_steps; begin += cfg.batch_scenes) {
      const std::size_t end = std::min(n, begin + cfg.batch_scenes);
      std::vector<Scene> scenes;
      scenes.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) scenes.push_back(data.get(order[k]));
      std::vector<NceAnnotation> batch;
      for (const Scene& s : scenes) {
        for (std::size_t g = 0; g < s.gts.size(); ++g) {
          batch.push_back({&s.grid, s.gts[g].box, s.id, static_cast<int>(g)});
        }
      }
      if (batch.empty()) continue;

      const NceResult r = nce_loss(theta, batch, nm, cfg.noise_samples, cfg.objective, rng);

      ++step;
      const double lr = cfg.learning_rate * 0.5 * (1.0 + std::cos(kPi * (step - 1) / static_cast<double>(total_steps)));
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      std::span<double> values = theta.values();
      for (std::size_t k = 0; k < values.size(); ++k) {
        const double g = r.grad[k];
        m1[k] = cfg.adam_beta1 * m1[k] + (1.0 - cfg.adam_beta1) * g;
        m2[k] = cfg.adam_beta2 * m2[k] + (1.0 - cfg.adam_beta2) * g * g;
        values[k] -= lr * (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + cfg.adam_eps);
      }

      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.steps.push_back({epoch, step, r.loss, seconds});
      epoch_sum += r.loss;
      ++epoch_steps;
    }
    result.epoch_loss.push_back(epoch_steps > 0 ? epoch_sum / epoch_steps : 0.0);
    if (on_epoch) on_epoch(epoch, theta);
  }
  return result;
}

}  // namespace ebm3d
