#include "hcad/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "hcad/version.hpp"

namespace hcad {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using manifold::kNormEps;

std::string to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::Full: return "full";
    case EncoderMode::NoDecoder: return "no_decoder";
    case EncoderMode::Euclidean: return "euclidean";
  }
  return "full";
}

EncoderMode encoder_mode_from_string(const std::string& s) {
  if (s == "full") return EncoderMode::Full;
  if (s == "no_decoder") return EncoderMode::NoDecoder;
  if (s == "euclidean") return EncoderMode::Euclidean;
  throw ConfigError("unknown encoder mode: " + s);
}

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("model: hidden_dim must be >= 1");
  if (num_layers < 1) throw ConfigError("model: num_layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must be in [0,1)");
  if (!(curvature > 0.0)) throw ConfigError("model: curvature must be positive");
  if (!(norm_clamp > 0.0)) throw ConfigError("model: norm_clamp must be positive");
}

namespace {

MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = (2.0 * rng.next_double() - 1.0) * bound;
  }
  return m;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  Rng rng = Rng(seed).fork(0x696e6974ULL);  // init stream

  const int d0 = cfg.input_dim + 1;
  const int dh = cfg.hidden_dim + 1;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const int fan_in = (l == 0) ? d0 : dh;
    LayerParams layer;
    layer.W = uniform_matrix(dh, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    layer.b = VectorXd::Zero(dh);
    p.layers.push_back(std::move(layer));
  }
  p.decoder.W = uniform_matrix(cfg.hidden_dim, dh, 1.0 / std::sqrt(static_cast<double>(dh)), rng);
  p.decoder.b = VectorXd::Zero(cfg.hidden_dim);
  const int m_dim = cfg.embed_dim();
  p.discriminator = uniform_matrix(m_dim, m_dim, 1.0 / std::sqrt(static_cast<double>(m_dim)), rng);
  return p;
}

ModelGrads ModelGrads::zeros_like(const ModelParams& p) {
  ModelGrads g;
  for (const auto& layer : p.layers) {
    g.layers.push_back(LayerParams{MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
                                   VectorXd::Zero(layer.b.size())});
  }
  g.decoder.W = MatrixXd::Zero(p.decoder.W.rows(), p.decoder.W.cols());
  g.decoder.b = VectorXd::Zero(p.decoder.b.size());
  g.discriminator = MatrixXd::Zero(p.discriminator.rows(), p.discriminator.cols());
  return g;
}

void ModelGrads::accumulate(const ModelGrads& other) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].W += other.layers[l].W;
    layers[l].b += other.layers[l].b;
  }
  decoder.W += other.decoder.W;
  decoder.b += other.decoder.b;
  discriminator += other.discriminator;
}

void ModelGrads::scale(double factor) {
  for (auto& layer : layers) {
    layer.W *= factor;
    layer.b *= factor;
  }
  decoder.W *= factor;
  decoder.b *= factor;
  discriminator *= factor;
}

namespace {

template <typename T>
std::vector<TensorRef> refs_impl(T& t) {
  std::vector<TensorRef> out;
  for (std::size_t l = 0; l < t.layers.size(); ++l) {
    out.push_back({"layer" + std::to_string(l) + ".W", t.layers[l].W.data(),
                   static_cast<std::int64_t>(t.layers[l].W.size())});
    out.push_back({"layer" + std::to_string(l) + ".b", t.layers[l].b.data(),
                   static_cast<std::int64_t>(t.layers[l].b.size())});
  }
  out.push_back({"decoder.W", t.decoder.W.data(), static_cast<std::int64_t>(t.decoder.W.size())});
  out.push_back({"decoder.b", t.decoder.b.data(), static_cast<std::int64_t>(t.decoder.b.size())});
  out.push_back({"discriminator.M", t.discriminator.data(),
                 static_cast<std::int64_t>(t.discriminator.size())});
  return out;
}

}  // namespace

std::vector<TensorRef> tensor_refs(ModelParams& p) { return refs_impl(p); }
std::vector<TensorRef> tensor_refs(ModelGrads& g) { return refs_impl(g); }

// --- Forward helpers --------------------------------------------------------

namespace {

/// Tangent-at-origin embedding of raw feature rows: log_o(lift(x)) in
/// hyperbolic modes, (0, x) in euclidean mode.
MatrixXd feature_tangent_rows(const MatrixXd& x_rows, const ModelConfig& cfg) {
  if (cfg.mode == EncoderMode::Euclidean) {
    MatrixXd t(x_rows.rows(), x_rows.cols() + 1);
    t.col(0).setZero();
    t.rightCols(x_rows.cols()) = x_rows;
    return t;
  }
  const Curvature K = cfg.K();
  return manifold::log_origin_rows(manifold::lift_rows(x_rows, K), K);
}

void apply_relu_dropout(const MatrixXd& g_pre, MatrixXd& z, MatrixXd& mask, bool training,
                        double dropout, Rng* rng, NumericCounters* counters) {
  z = g_pre.cwiseMax(0.0);
  if (counters && counters->trace_guards) {
    for (Eigen::Index i = 0; i < g_pre.rows(); ++i) {
      for (Eigen::Index j = 0; j < g_pre.cols(); ++j) counters->note_guard(g_pre(i, j) > 0.0);
    }
  }
  if (training && dropout > 0.0 && rng) {
    const double keep = 1.0 - dropout;
    mask.resize(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        mask(i, j) = rng->next_double() < keep ? 1.0 / keep : 0.0;
      }
    }
    z = z.cwiseProduct(mask);
  } else {
    mask.resize(0, 0);
  }
}

/// One layer given tangent input rows; fills the tape when provided.
MatrixXd layer_forward(const MatrixXd& t_in, const MatrixXd& adj, const LayerParams& params,
                       const ModelConfig& cfg, bool training, Rng* rng, NumericCounters* counters,
                       LayerTape* tape) {
  const bool euclid = cfg.mode == EncoderMode::Euclidean;
  MatrixXd u = t_in * params.W.transpose();
  u.col(0).setZero();

  MatrixXd h_w, w_pt, h_b, t1;
  if (euclid) {
    h_w = u;
    h_b = u.rowwise() + params.b.transpose();
    t1 = h_b;
  } else {
    const Curvature K = cfg.K();
    h_w = manifold::exp_origin_rows(u, K, cfg.norm_clamp, counters);
    h_b = manifold::mobius_add_bias(h_w, params.b, K, cfg.norm_clamp, counters, &w_pt);
    t1 = manifold::log_origin_rows(h_b, K, counters);
  }

  MatrixXd g_pre = adj * t1;
  MatrixXd z, mask;
  apply_relu_dropout(g_pre, z, mask, training, cfg.dropout, rng, counters);

  MatrixXd h_out =
      euclid ? z : manifold::exp_origin_rows(z, cfg.K(), cfg.norm_clamp, counters);

  if (tape) {
    tape->t_in = t_in;
    tape->u = std::move(u);
    tape->h_w = std::move(h_w);
    tape->w_pt = std::move(w_pt);
    tape->h_b = std::move(h_b);
    tape->t1 = std::move(t1);
    tape->g_pre = std::move(g_pre);
    tape->drop_mask = std::move(mask);
    tape->z = std::move(z);
    tape->h_out = h_out;
  }
  return h_out;
}

/// Whole branch from tangent input rows (or a precomputed first-layer matvec)
/// to the pooled embedding.
void branch_forward(const MatrixXd& t0, const MatrixXd* u0_precomputed, const MatrixXd& a_sub,
                    const ModelParams& params, bool training, Rng* rng, NumericCounters* counters,
                    BranchTape* tape, VectorXd& pooled_out) {
  const ModelConfig& cfg = params.cfg;
  const bool euclid = cfg.mode == EncoderMode::Euclidean;
  MatrixXd adj = normalize_adjacency_dense(a_sub);

  MatrixXd h;
  MatrixXd t_in = t0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerTape* lt = tape ? &tape->layers.emplace_back() : nullptr;
    if (l == 0 && u0_precomputed != nullptr && !tape) {
      // Inference fast path: the first matvec is precomputed per node.
      MatrixXd u = *u0_precomputed;
      MatrixXd h_w, w_pt, h_b, t1;
      if (euclid) {
        h_w = u;
        h_b = u.rowwise() + params.layers[0].b.transpose();
        t1 = h_b;
      } else {
        const Curvature K = cfg.K();
        h_w = manifold::exp_origin_rows(u, K, cfg.norm_clamp, counters);
        h_b = manifold::mobius_add_bias(h_w, params.layers[0].b, K, cfg.norm_clamp, counters);
        t1 = manifold::log_origin_rows(h_b, K, counters);
      }
      MatrixXd g_pre = adj * t1;
      MatrixXd z, mask;
      apply_relu_dropout(g_pre, z, mask, training, cfg.dropout, rng, counters);
      h = euclid ? z : manifold::exp_origin_rows(z, cfg.K(), cfg.norm_clamp, counters);
    } else {
      if (l > 0) {
        t_in = euclid ? h : manifold::log_origin_rows(h, cfg.K(), counters);
      }
      h = layer_forward(t_in, adj, params.layers[l], cfg, training, rng, counters, lt);
    }
  }

  MatrixXd emb, t_dec;
  if (cfg.mode == EncoderMode::NoDecoder) {
    emb = h;
  } else {
    t_dec = euclid ? h : manifold::log_origin_rows(h, cfg.K(), counters);
    emb = (t_dec * params.decoder.W.transpose()).rowwise() + params.decoder.b.transpose();
  }
  pooled_out = emb.colwise().mean().transpose();

  if (tape) {
    tape->adj = std::move(adj);
    tape->t_dec = std::move(t_dec);
    tape->emb = std::move(emb);
    tape->pooled = pooled_out;
  }
}

MatrixXd gather_rows(const MatrixXd& source, const InstancePair& pair, bool mask_start) {
  const auto c = static_cast<Eigen::Index>(pair.members.size());
  MatrixXd out = MatrixXd::Zero(c, source.cols());
  for (int i = 0; i < pair.distinct_count; ++i) {
    if (i == 0 && mask_start) continue;  // anonymized start node
    out.row(i) = source.row(pair.members[i]);
  }
  return out;
}

double stable_logistic(double x) {
  double q;
  if (x >= 0) {
    q = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    q = e / (1.0 + e);
  }
  if (q <= 0.0) q = std::numeric_limits<double>::min();
  if (q >= 1.0) q = 1.0 - 1e-16;
  return q;
}

}  // namespace

EncoderCache build_encoder_cache(const GraphView& g, const ModelParams& params,
                                 bool with_first_layer) {
  EncoderCache cache;
  cache.tangent0 = feature_tangent_rows(*g.X, params.cfg);
  if (with_first_layer) {
    cache.first_layer = cache.tangent0 * params.layers[0].W.transpose();
    cache.first_layer.col(0).setZero();
    cache.has_first_layer = true;
  }
  return cache;
}

MatrixXd hgcn_layer(const MatrixXd& H, const MatrixXd& adj_norm, const LayerParams& params,
                    const ModelConfig& cfg, bool training, Rng* dropout_rng,
                    NumericCounters* counters) {
  if (adj_norm.rows() != H.rows() || adj_norm.cols() != H.rows()) {
    throw DimensionError("hgcn_layer: adjacency shape does not match row count");
  }
  if (params.W.cols() != H.cols()) {
    throw DimensionError("hgcn_layer: weight columns do not match ambient dimension");
  }
  const bool euclid = cfg.mode == EncoderMode::Euclidean;
  MatrixXd t_in = euclid ? H : manifold::log_origin_rows(H, cfg.K(), counters);
  // Re-run the aggregation against the provided (already normalized)
  // adjacency rather than normalizing again.
  MatrixXd u = t_in * params.W.transpose();
  u.col(0).setZero();
  MatrixXd h_w, h_b, t1;
  if (euclid) {
    h_b = u.rowwise() + params.b.transpose();
    t1 = h_b;
  } else {
    const Curvature K = cfg.K();
    h_w = manifold::exp_origin_rows(u, K, cfg.norm_clamp, counters);
    h_b = manifold::mobius_add_bias(h_w, params.b, K, cfg.norm_clamp, counters);
    t1 = manifold::log_origin_rows(h_b, K, counters);
  }
  MatrixXd g_pre = adj_norm * t1;
  MatrixXd z, mask;
  apply_relu_dropout(g_pre, z, mask, training, cfg.dropout, dropout_rng, counters);
  return euclid ? z : manifold::exp_origin_rows(z, cfg.K(), cfg.norm_clamp, counters);
}

MatrixXd encode_rows(const MatrixXd& x_rows, const MatrixXd& a_sub, const ModelParams& params,
                     bool training, Rng* dropout_rng, NumericCounters* counters) {
  if (x_rows.cols() != params.cfg.input_dim) {
    throw DimensionError("encode_rows: feature dimension mismatch");
  }
  const MatrixXd t0 = feature_tangent_rows(x_rows, params.cfg);
  BranchTape tape;
  VectorXd pooled;
  branch_forward(t0, nullptr, a_sub, params, training, dropout_rng, counters, &tape, pooled);
  return tape.layers.back().h_out;
}

MatrixXd encode_subgraph(const InstancePair& pair, const GraphView& g, const ModelParams& params,
                         bool training, Rng* dropout_rng, NumericCounters* counters) {
  return encode_rows(pair.features(g), pair.a_sub, params, training, dropout_rng, counters);
}

MatrixXd decode_tangent(const MatrixXd& H, const DecoderParams& dec, const ModelConfig& cfg) {
  const bool euclid = cfg.mode == EncoderMode::Euclidean;
  const MatrixXd t = euclid ? H : manifold::log_origin_rows(H, cfg.K());
  return (t * dec.W.transpose()).rowwise() + dec.b.transpose();
}

VectorXd readout(const MatrixXd& E) {
  if (E.rows() < 1) throw DimensionError("readout: need at least one row");
  return E.colwise().mean().transpose();
}

VectorXd encode_target(const VectorXd& x_v, const ModelParams& params, bool training,
                       Rng* dropout_rng, NumericCounters* counters) {
  const MatrixXd x = x_v.transpose();
  const MatrixXd a = MatrixXd::Zero(1, 1);
  const MatrixXd h = encode_rows(x, a, params, training, dropout_rng, counters);
  if (params.cfg.mode == EncoderMode::NoDecoder) return h.row(0).transpose();
  return decode_tangent(h, params.decoder, params.cfg).row(0).transpose();
}

double discriminate(const VectorXd& target_emb, const VectorXd& subgraph_emb,
                    const Eigen::MatrixXd& M) {
  if (target_emb.size() != M.rows() || subgraph_emb.size() != M.cols()) {
    throw DimensionError("discriminate: embedding lengths do not match the bilinear matrix");
  }
  return stable_logistic(target_emb.dot(M * subgraph_emb));
}

// --- Pair forward/backward ---------------------------------------------------

PairEvalResult forward_pair(const ModelParams& params, const EncoderCache& cache,
                            const GraphView& g, const InstancePair& pair, bool training,
                            Rng* dropout_rng, NumericCounters* counters, PairTape* tape) {
  (void)g;
  const auto c = static_cast<Eigen::Index>(pair.members.size());

  // Subgraph branch.
  VectorXd s_emb;
  {
    BranchTape* bt = tape ? &tape->sub : nullptr;
    if (!tape && cache.has_first_layer && !training) {
      MatrixXd u0 = gather_rows(cache.first_layer, pair, /*mask_start=*/true);
      MatrixXd t0(c, 0);  // unused on the fast path
      branch_forward(t0, &u0, pair.a_sub, params, training, dropout_rng, counters, bt, s_emb);
    } else {
      MatrixXd t0 = gather_rows(cache.tangent0, pair, /*mask_start=*/true);
      branch_forward(t0, nullptr, pair.a_sub, params, training, dropout_rng, counters, bt, s_emb);
    }
  }

  // Target branch: one unmasked node with a self-loop adjacency.
  VectorXd t_emb;
  {
    BranchTape* bt = tape ? &tape->tgt : nullptr;
    const MatrixXd a1 = MatrixXd::Zero(1, 1);
    if (!tape && cache.has_first_layer && !training) {
      MatrixXd u0 = cache.first_layer.row(pair.target);
      MatrixXd t0(1, 0);
      branch_forward(t0, &u0, a1, params, training, dropout_rng, counters, bt, t_emb);
    } else {
      MatrixXd t0 = cache.tangent0.row(pair.target);
      branch_forward(t0, nullptr, a1, params, training, dropout_rng, counters, bt, t_emb);
    }
  }

  const double logit = t_emb.dot(params.discriminator * s_emb);
  const double q = stable_logistic(logit);
  if (tape) {
    tape->t_emb = std::move(t_emb);
    tape->s_emb = std::move(s_emb);
    tape->logit = logit;
    tape->q = q;
  }
  return PairEvalResult{q, logit};
}

// --- VJPs --------------------------------------------------------------------

namespace {

/// Backward of exp at the origin. U are the forward input rows (col 0 == 0),
/// y_bar the cotangent of the output rows; returns u_bar (col 0 zeroed).
MatrixXd vjp_exp_origin_rows(const MatrixXd& U, const MatrixXd& y_bar, const Curvature& K,
                             double norm_clamp) {
  const auto n = U.rows();
  const auto dd = U.cols();
  const double sqrt_k = K.sqrt_k();
  const double k = K.k();
  const double max_norm = norm_clamp * sqrt_k;
  MatrixXd u_bar = MatrixXd::Zero(n, dd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto us = U.row(i).tail(dd - 1);
    const auto ybs = y_bar.row(i).tail(dd - 1);
    const double r = us.norm();
    if (r < kNormEps) {
      u_bar.row(i).tail(dd - 1) = ybs;  // identity gradient below the guard
      continue;
    }
    if (r > max_norm) {
      // Forward used the clamped norm: y0 constant, ys = C2 * us / r.
      const double c2 = sqrt_k * std::sinh(norm_clamp);
      const double dot = ybs.dot(us);
      u_bar.row(i).tail(dd - 1) = (c2 / r) * ybs - (c2 * dot / (r * r * r)) * us;
      continue;
    }
    const double lam = r / sqrt_k;
    const double sh = std::sinh(lam);
    const double a = sqrt_k * sh / r;
    // a' = (cosh - a)/r cancels badly for small r; switch to the series.
    const double aprime =
        (r < 1e-4 * sqrt_k) ? (r / (3.0 * k)) * (1.0 + r * r / (10.0 * k))
                            : (std::cosh(lam) - a) / r;
    const double dot = ybs.dot(us);
    u_bar.row(i).tail(dd - 1) =
        a * ybs + ((dot * aprime + y_bar(i, 0) * sh) / r) * us;
  }
  return u_bar;
}

/// Backward of the asinh-form log at the origin. H are the forward input rows
/// (manifold points), v_bar the cotangent of the tangent output rows.
MatrixXd vjp_log_origin_rows(const MatrixXd& H, const MatrixXd& v_bar, const Curvature& K) {
  const auto n = H.rows();
  const auto dd = H.cols();
  const double sqrt_k = K.sqrt_k();
  const double k = K.k();
  MatrixXd h_bar = MatrixXd::Zero(n, dd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto hs = H.row(i).tail(dd - 1);
    const auto vbs = v_bar.row(i).tail(dd - 1);
    const double rho = hs.norm();
    if (rho < kNormEps) {
      h_bar.row(i).tail(dd - 1) = vbs;
      continue;
    }
    const double len = sqrt_k * std::asinh(rho / sqrt_k);
    const double f = len / rho;
    const double lenp = 1.0 / std::sqrt(1.0 + rho * rho / k);
    // f' = (len' * rho - len)/rho^2; series below the cancellation threshold.
    const double fprime =
        (rho < 1e-4 * sqrt_k) ? -rho / (3.0 * k) : (lenp * rho - len) / (rho * rho);
    const double dot = vbs.dot(hs);
    h_bar.row(i).tail(dd - 1) = f * vbs + (fprime / rho) * dot * hs;
  }
  return h_bar;
}

/// Backward of the Mobius bias add y = exp_h(P_{o->h}(b)). Uses the taped
/// transported vectors W_pt; accumulates into h_bar (same shape as H) and
/// b_grad.
void vjp_bias_add(const MatrixXd& H, const MatrixXd& W_pt, const VectorXd& b,
                  const MatrixXd& y_bar, const Curvature& K, double norm_clamp, MatrixXd& h_bar,
                  VectorXd& b_grad) {
  const auto n = H.rows();
  const auto dd = H.cols();
  const double sqrt_k = K.sqrt_k();
  const double k = K.k();
  const double max_norm = norm_clamp * sqrt_k;
  h_bar = MatrixXd::Zero(n, dd);

  VectorXd o = VectorXd::Zero(dd);
  o(0) = sqrt_k;

  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd h = H.row(i).transpose();
    const VectorXd w = W_pt.row(i).transpose();
    const VectorXd yb = y_bar.row(i).transpose();

    VectorXd jw = w;
    jw(0) = -jw(0);
    const double n2 = w.dot(jw);
    const double n0 = std::sqrt(std::max(0.0, n2));

    VectorXd w_bar;
    if (n0 < kNormEps) {
      h_bar.row(i) += yb.transpose();
      w_bar = yb;
    } else if (n0 > max_norm) {
      const double c1 = std::cosh(norm_clamp);
      const double c2 = sqrt_k * std::sinh(norm_clamp);
      h_bar.row(i) += (c1 * yb).transpose();
      w_bar = (c2 / n0) * yb - (c2 * w.dot(yb) / (n0 * n0 * n0)) * jw;
    } else {
      const double lam = n0 / sqrt_k;
      const double ch = std::cosh(lam);
      const double sh = std::sinh(lam);
      h_bar.row(i) += (ch * yb).transpose();
      const double hy = h.dot(yb);
      const double wy = w.dot(yb);
      w_bar = (sqrt_k * sh / n0) * yb +
              (hy * sh / (sqrt_k * n0) + wy * (ch / (n0 * n0) - sqrt_k * sh / (n0 * n0 * n0))) * jw;
    }

    // Transport backward: w = b + s*(o+h), s = <h,b>_L / (K + sqrt(K) h0).
    const double denom = k + sqrt_k * h(0);
    const double hb = -h(0) * b(0) + h.tail(dd - 1).dot(b.tail(dd - 1));
    const double s = hb / denom;
    const double ow = (o + h).dot(w_bar);

    VectorXd jh = h;
    jh(0) = -jh(0);
    b_grad += w_bar + (ow / denom) * jh;

    VectorXd jb = b;
    jb(0) = -jb(0);
    VectorXd h_extra = s * w_bar + (ow / denom) * jb;
    h_extra(0) -= ow * hb * sqrt_k / (denom * denom);
    h_bar.row(i) += h_extra.transpose();
  }
}

/// Backward through one branch; emb_bar is the cotangent of the decoded rows
/// (or ambient rows in no-decoder mode).
void branch_backward(const ModelParams& params, const BranchTape& tape, const MatrixXd& emb_bar,
                     ModelGrads& grads) {
  const ModelConfig& cfg = params.cfg;
  const bool euclid = cfg.mode == EncoderMode::Euclidean;

  MatrixXd h_bar;
  if (cfg.mode == EncoderMode::NoDecoder) {
    h_bar = emb_bar;
  } else {
    grads.decoder.W += emb_bar.transpose() * tape.t_dec;
    grads.decoder.b += emb_bar.colwise().sum().transpose();
    const MatrixXd t_dec_bar = emb_bar * params.decoder.W;
    h_bar = euclid ? t_dec_bar
                   : vjp_log_origin_rows(tape.layers.back().h_out, t_dec_bar, cfg.K());
  }

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const LayerTape& lt = tape.layers[l];

    // h_out = exp_o(z) (identity in euclidean mode).
    MatrixXd z_bar = euclid ? std::move(h_bar) : vjp_exp_origin_rows(lt.z, h_bar, cfg.K(),
                                                                     cfg.norm_clamp);
    // dropout + ReLU (subgradient 0 at the kink)
    if (lt.drop_mask.size() > 0) z_bar = z_bar.cwiseProduct(lt.drop_mask);
    MatrixXd g_bar = (lt.g_pre.array() > 0.0).select(z_bar, 0.0);

    // aggregation g_pre = adj * t1
    MatrixXd t1_bar = tape.adj.transpose() * g_bar;

    MatrixXd u_bar;
    if (euclid) {
      // t1 = h_b = u + b
      grads.layers[l].b += t1_bar.colwise().sum().transpose();
      u_bar = std::move(t1_bar);
    } else {
      const Curvature K = cfg.K();
      const MatrixXd hb_bar = vjp_log_origin_rows(lt.h_b, t1_bar, K);
      MatrixXd hw_bar;
      vjp_bias_add(lt.h_w, lt.w_pt, params.layers[l].b, hb_bar, K, cfg.norm_clamp, hw_bar,
                   grads.layers[l].b);
      u_bar = vjp_exp_origin_rows(lt.u, hw_bar, K, cfg.norm_clamp);
    }
    u_bar.col(0).setZero();

    grads.layers[l].W += u_bar.transpose() * lt.t_in;
    if (l > 0) {
      const MatrixXd t_in_bar = u_bar * params.layers[l].W;
      h_bar = euclid ? t_in_bar
                     : vjp_log_origin_rows(tape.layers[l - 1].h_out, t_in_bar, cfg.K());
    }
  }

  // Bias parameters keep a pinned zero first coordinate.
  for (auto& layer : grads.layers) layer.b(0) = 0.0;
}

}  // namespace

void backward_pair(const ModelParams& params, const PairTape& tape, double dloss_dlogit,
                   ModelGrads& grads) {
  grads.discriminator += dloss_dlogit * tape.t_emb * tape.s_emb.transpose();
  const VectorXd t_bar = dloss_dlogit * (params.discriminator * tape.s_emb);
  const VectorXd s_bar = dloss_dlogit * (params.discriminator.transpose() * tape.t_emb);

  auto pooled_to_emb_bar = [](const BranchTape& bt, const VectorXd& pooled_bar) {
    const auto c = bt.emb.rows();
    return MatrixXd((1.0 / static_cast<double>(c)) *
                    (VectorXd::Ones(c) * pooled_bar.transpose()));
  };
  branch_backward(params, tape.sub, pooled_to_emb_bar(tape.sub, s_bar), grads);
  branch_backward(params, tape.tgt, pooled_to_emb_bar(tape.tgt, t_bar), grads);
}

// --- Checkpoint I/O -----------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return MatrixXd(0, 0);
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) {
      throw ParseError("checkpoint: ragged matrix rows");
    }
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = j[i][jj].get<double>();
  }
  return m;
}

nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, std::uint64_t seed, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["tool_version"] = kVersion;
  j["seed"] = seed;
  j["init"] = "uniform_fanin_bias0";
  j["config"] = {
      {"input_dim", params.cfg.input_dim},   {"hidden_dim", params.cfg.hidden_dim},
      {"num_layers", params.cfg.num_layers}, {"dropout", params.cfg.dropout},
      {"curvature", params.cfg.curvature},   {"mode", to_string(params.cfg.mode)},
      {"norm_clamp", params.cfg.norm_clamp},
  };
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : params.layers) {
    layers.push_back({{"W", matrix_to_json(layer.W)}, {"b", vector_to_json(layer.b)}});
  }
  j["layers"] = std::move(layers);
  j["decoder"] = {{"W", matrix_to_json(params.decoder.W)},
                  {"b", vector_to_json(params.decoder.b)}};
  j["discriminator"] = matrix_to_json(params.discriminator);

  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump();
  out << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format_version", 0) != 1) {
    throw ParseError("checkpoint " + path + ": unsupported format version");
  }

  Checkpoint ckpt;
  const auto& c = j.at("config");
  ckpt.params.cfg.input_dim = c.at("input_dim").get<int>();
  ckpt.params.cfg.hidden_dim = c.at("hidden_dim").get<int>();
  ckpt.params.cfg.num_layers = c.at("num_layers").get<int>();
  ckpt.params.cfg.dropout = c.at("dropout").get<double>();
  ckpt.params.cfg.curvature = c.at("curvature").get<double>();
  ckpt.params.cfg.mode = encoder_mode_from_string(c.at("mode").get<std::string>());
  ckpt.params.cfg.norm_clamp = c.at("norm_clamp").get<double>();
  ckpt.params.cfg.validate();

  for (const auto& layer : j.at("layers")) {
    ckpt.params.layers.push_back(
        LayerParams{matrix_from_json(layer.at("W")), vector_from_json(layer.at("b"))});
  }
  ckpt.params.decoder.W = matrix_from_json(j.at("decoder").at("W"));
  ckpt.params.decoder.b = vector_from_json(j.at("decoder").at("b"));
  ckpt.params.discriminator = matrix_from_json(j.at("discriminator"));
  ckpt.seed = j.value("seed", 0ULL);
  return ckpt;
}

}  // namespace hcad
