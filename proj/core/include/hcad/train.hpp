#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hcad/model.hpp"
#include "hcad/sampler.hpp"

namespace hcad {

struct TrainConfig {
  double lr = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;  // the optimizer momentum setting
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  int epochs = 100;
  int batch_size = 300;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
      throw ConfigError("train: betas must be in (0,1)");
    }
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  }
};

/// Binary cross-entropy over (q, y) pairs: -sum y*log(q) + (1-y)*log(1-q).
/// Scores outside (eps, 1-eps) are clamped and counted as saturation events.
double bce_loss(std::span<const std::pair<double, double>> scores,
                NumericCounters* counters = nullptr);

struct BatchGradients {
  ModelGrads grads;
  double loss = 0.0;  // sum over the batch (same convention as bce_loss)
  NumericCounters counters;
};

/// Exact reverse-mode gradients of bce_loss over the batch. Dropout masks are
/// keyed by (dropout_key, pair index), so results are schedule-independent;
/// per-thread partials are reduced in thread order with static chunking.
BatchGradients compute_gradients(const ModelParams& params, std::span<const InstancePair> batch,
                                 const GraphView& g, const EncoderCache& cache, bool training,
                                 std::uint64_t dropout_key, int threads = 1);

struct AdamState {
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  std::int64_t step = 0;

  static AdamState zeros_like(ModelParams& params);
};

/// Classic Adam with bias correction; weight decay is coupled into the
/// gradient as an additive lambda*theta term. Bias first coordinates stay
/// pinned at zero.
void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0.0;  // mean per pair over the epoch
  std::uint64_t clamp_events = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStat> trace;
};

/// Self-supervised training loop: per epoch, sample one positive and one
/// negative pair per node, shuffle into mini-batches, and take Adam steps on
/// the batch-mean gradients. Takes a label-free GraphView by construction.
TrainResult train_loop(const GraphView& g, const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, const RwrConfig& rwr_cfg);

void write_loss_trace_csv(const std::vector<EpochStat>& trace, const std::string& path);

struct GradientCheckReport {
  double max_rel_error = 0.0;
  int coordinates_checked = 0;
  bool pass = false;
};

/// Central finite-difference verification of compute_gradients on randomly
/// selected coordinates. Coordinates whose perturbation flips any guard
/// (ReLU sign, norm clamp, small-norm branch, loss saturation) are skipped,
/// as are exact structural zeros (pinned bias coordinates).
GradientCheckReport finite_difference_check(const ModelParams& params,
                                            std::span<const InstancePair> batch,
                                            const GraphView& g, int coordinates, double step,
                                            double threshold, std::uint64_t seed);

}  // namespace hcad
