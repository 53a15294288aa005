#include "hcad/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "hcad/parallel.hpp"

namespace hcad {

namespace {

constexpr double kScoreEps = 1e-7;

struct PairLoss {
  double loss = 0.0;
  double dloss_dlogit = 0.0;
};

PairLoss pair_bce(double q, double y, NumericCounters* counters) {
  double qt = q;
  const bool saturated = q < kScoreEps || q > 1.0 - kScoreEps;
  if (counters) counters->note_guard(saturated);
  if (saturated) {
    qt = std::clamp(q, kScoreEps, 1.0 - kScoreEps);
    if (counters) ++counters->bce_saturations;
  }
  PairLoss out;
  out.loss = -(y * std::log(qt) + (1.0 - y) * std::log(1.0 - qt));
  if (!saturated) {
    const double dloss_dq = -y / qt + (1.0 - y) / (1.0 - qt);
    out.dloss_dlogit = dloss_dq * q * (1.0 - q);
  }
  return out;
}

/// Forward-only batch loss with the same dropout keying as compute_gradients.
double batch_loss(const ModelParams& params, std::span<const InstancePair> batch,
                  const GraphView& g, const EncoderCache& cache, bool training,
                  std::uint64_t dropout_key, NumericCounters* counters) {
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng drop_rng = Rng(dropout_key).fork(i);
    const PairEvalResult r =
        forward_pair(params, cache, g, batch[i], training, &drop_rng, counters, nullptr);
    loss += pair_bce(r.q, batch[i].label(), counters).loss;
  }
  return loss;
}

}  // namespace

double bce_loss(std::span<const std::pair<double, double>> scores, NumericCounters* counters) {
  double loss = 0.0;
  for (const auto& [q, y] : scores) {
    if (y != 0.0 && y != 1.0) throw DomainError("bce_loss: labels must be 0 or 1");
    loss += pair_bce(q, y, counters).loss;
  }
  return loss;
}

BatchGradients compute_gradients(const ModelParams& params, std::span<const InstancePair> batch,
                                 const GraphView& g, const EncoderCache& cache, bool training,
                                 std::uint64_t dropout_key, int threads) {
  const auto n = static_cast<std::int64_t>(batch.size());
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));

  std::vector<ModelGrads> grads(workers);
  std::vector<double> losses(workers, 0.0);
  std::vector<NumericCounters> counters(workers);
  for (auto& gr : grads) gr = ModelGrads::zeros_like(params);

  parallel_for(n, workers, [&](std::int64_t begin, std::int64_t end, int tid) {
    PairTape tape;
    for (std::int64_t i = begin; i < end; ++i) {
      tape.sub.layers.clear();
      tape.tgt.layers.clear();
      Rng drop_rng = Rng(dropout_key).fork(static_cast<std::uint64_t>(i));
      const PairEvalResult r =
          forward_pair(params, cache, g, batch[i], training, &drop_rng, &counters[tid], &tape);
      const PairLoss pl = pair_bce(r.q, batch[i].label(), &counters[tid]);
      losses[tid] += pl.loss;
      if (pl.dloss_dlogit != 0.0) backward_pair(params, tape, pl.dloss_dlogit, grads[tid]);
    }
  });

  BatchGradients out;
  out.grads = std::move(grads[0]);
  out.loss = losses[0];
  out.counters = counters[0];
  for (int t = 1; t < workers; ++t) {
    out.grads.accumulate(grads[t]);
    out.loss += losses[t];
    out.counters += counters[t];
  }

  for (const auto& ref : tensor_refs(out.grads)) {
    for (std::int64_t i = 0; i < ref.size; ++i) {
      if (!std::isfinite(ref.data[i])) {
        throw NumericError("non-finite gradient in " + ref.name + " (norm clamps: " +
                           std::to_string(out.counters.norm_clamps) + ", saturations: " +
                           std::to_string(out.counters.bce_saturations) + ")");
      }
    }
  }
  return out;
}

AdamState AdamState::zeros_like(ModelParams& params) {
  AdamState st;
  for (const auto& ref : tensor_refs(params)) {
    st.m.push_back(Eigen::VectorXd::Zero(ref.size));
    st.v.push_back(Eigen::VectorXd::Zero(ref.size));
  }
  return st;
}

void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state,
               const TrainConfig& cfg) {
  cfg.validate();
  auto param_refs = tensor_refs(params);
  auto grad_refs = tensor_refs(const_cast<ModelGrads&>(grads));  // read-only access
  if (param_refs.size() != grad_refs.size()) {
    throw DimensionError("adam_step: gradient layout does not match parameters");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t t = 0; t < param_refs.size(); ++t) {
    if (param_refs[t].size != grad_refs[t].size) {
      throw DimensionError("adam_step: tensor shape mismatch at " + param_refs[t].name);
    }
    double* theta = param_refs[t].data;
    const double* grad = grad_refs[t].data;
    double* m = state.m[t].data();
    double* v = state.v[t].data();
    for (std::int64_t i = 0; i < param_refs[t].size; ++i) {
      const double g = grad[i] + cfg.weight_decay * theta[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
  // Bias first coordinates are structural zeros, not free parameters.
  for (auto& layer : params.layers) layer.b(0) = 0.0;
}

TrainResult train_loop(const GraphView& g, const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, const RwrConfig& rwr_cfg) {
  model_cfg.validate();
  train_cfg.validate();
  rwr_cfg.validate();
  if (model_cfg.input_dim != g.X->cols()) {
    throw DimensionError("train_loop: model input_dim does not match graph attributes");
  }

  TrainResult result;
  result.params = ModelParams::init(model_cfg, train_cfg.seed);
  EncoderCache cache = build_encoder_cache(g, result.params, /*with_first_layer=*/false);
  AdamState state = AdamState::zeros_like(result.params);

  const std::int64_t pairs_per_epoch = 2 * g.n;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    std::vector<InstancePair> pairs = sample_epoch(g, rwr_cfg, static_cast<std::uint64_t>(epoch));
    Rng shuffle_rng = Rng(train_cfg.seed).fork(0x736866ULL, static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(pairs);

    double loss_sum = 0.0;
    NumericCounters epoch_counters;
    std::int64_t batch_index = 0;
    for (std::size_t start = 0; start < pairs.size(); start += train_cfg.batch_size) {
      const auto count = std::min<std::size_t>(train_cfg.batch_size, pairs.size() - start);
      const std::uint64_t dropout_key = Rng(train_cfg.seed)
                                            .fork(0x64726f70ULL, static_cast<std::uint64_t>(epoch),
                                                  static_cast<std::uint64_t>(batch_index))
                                            .next_u64();
      BatchGradients bg =
          compute_gradients(result.params, std::span(pairs).subspan(start, count), g, cache,
                            /*training=*/true, dropout_key, train_cfg.threads);
      if (!std::isfinite(bg.loss)) {
        throw NumericError("NaN loss at epoch " + std::to_string(epoch) + " (norm clamps: " +
                           std::to_string(bg.counters.norm_clamps) + ", saturations: " +
                           std::to_string(bg.counters.bce_saturations) + ")");
      }
      loss_sum += bg.loss;
      epoch_counters += bg.counters;

      bg.grads.scale(1.0 / static_cast<double>(count));  // batch-mean gradient
      adam_step(result.params, bg.grads, state, train_cfg);
      ++batch_index;
    }

    result.trace.push_back(EpochStat{epoch, loss_sum / static_cast<double>(pairs_per_epoch),
                                     epoch_counters.norm_clamps + epoch_counters.bce_saturations});
  }
  return result;
}

void write_loss_trace_csv(const std::vector<EpochStat>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss trace: " + path);
  out << "epoch,mean_loss,clamp_events\n";
  char buf[32];
  for (const auto& stat : trace) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), stat.mean_loss);
    (void)ec;
    out << stat.epoch << ',' << std::string_view(buf, ptr - buf) << ',' << stat.clamp_events
        << '\n';
  }
}

GradientCheckReport finite_difference_check(const ModelParams& params,
                                            std::span<const InstancePair> batch,
                                            const GraphView& g, int coordinates, double step,
                                            double threshold, std::uint64_t seed) {
  ModelParams work = params;
  const EncoderCache cache = build_encoder_cache(g, work, /*with_first_layer=*/false);
  const std::uint64_t dropout_key = Rng(seed).fork(0x66646472ULL).next_u64();

  const BatchGradients analytic =
      compute_gradients(work, batch, g, cache, /*training=*/true, dropout_key, 1);
  auto grad_refs = tensor_refs(const_cast<ModelGrads&>(analytic.grads));
  auto param_refs = tensor_refs(work);

  // Flat candidate list of (tensor, index), excluding pinned coordinates.
  std::vector<std::pair<std::size_t, std::int64_t>> candidates;
  for (std::size_t t = 0; t < param_refs.size(); ++t) {
    const bool layer_bias = param_refs[t].name.find("layer") == 0 &&
                            param_refs[t].name.find(".b") != std::string::npos;
    for (std::int64_t i = 0; i < param_refs[t].size; ++i) {
      if (layer_bias && i == 0) continue;  // structural zero
      candidates.emplace_back(t, i);
    }
  }
  Rng rng = Rng(seed).fork(0x636f6f72ULL);
  rng.shuffle(candidates);

  auto guarded_loss = [&](double* slot, double value) {
    const double saved = *slot;
    *slot = value;
    NumericCounters counters;
    counters.trace_guards = true;
    const double loss = batch_loss(work, batch, g, cache, /*training=*/true, dropout_key, &counters);
    *slot = saved;
    return std::pair<double, std::uint64_t>(loss, counters.guard_hash);
  };

  GradientCheckReport report;
  for (const auto& [t, i] : candidates) {
    if (report.coordinates_checked >= coordinates) break;
    double* slot = param_refs[t].data + i;
    const double base = *slot;
    const auto [loss_plus, hash_plus] = guarded_loss(slot, base + step);
    const auto [loss_minus, hash_minus] = guarded_loss(slot, base - step);
    if (hash_plus != hash_minus) continue;  // perturbation crossed a kink

    const double fd = (loss_plus - loss_minus) / (2.0 * step);
    const double an = grad_refs[t].data[i];
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.coordinates_checked;
  }
  report.pass = report.coordinates_checked > 0 && report.max_rel_error <= threshold;
  return report;
}

}  // namespace hcad
