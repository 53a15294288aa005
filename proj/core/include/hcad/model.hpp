#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hcad/graph.hpp"
#include "hcad/manifold.hpp"
#include "hcad/rng.hpp"
#include "hcad/sampler.hpp"

namespace hcad {

/// Encoder variants: the full hyperboloid pipeline, the ablation that feeds
/// ambient hyperboloid coordinates straight to the discriminator, and the
/// plain-GCN ablation where lift/exp/log are identities.
enum class EncoderMode { Full, NoDecoder, Euclidean };

std::string to_string(EncoderMode mode);
EncoderMode encoder_mode_from_string(const std::string& s);

struct ModelConfig {
  int input_dim = 0;
  int hidden_dim = 64;
  int num_layers = 1;
  double dropout = 0.1;
  double curvature = 2.5;
  EncoderMode mode = EncoderMode::Full;
  double norm_clamp = manifold::kDefaultNormClamp;

  void validate() const;
  Curvature K() const { return Curvature(curvature); }
  /// Length of the vectors the bilinear discriminator consumes.
  int embed_dim() const {
    return mode == EncoderMode::NoDecoder ? hidden_dim + 1 : hidden_dim;
  }
};

/// One graph-convolution layer: W acts on ambient tangent coordinates
/// (first input column multiplied by zero, first output row re-zeroed);
/// b is a tangent vector at the origin (first coordinate pinned to 0).
struct LayerParams {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

/// Tangent-space decoder: e = W * log_o(h) + b per row.
struct DecoderParams {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

struct ModelParams {
  ModelConfig cfg;
  std::vector<LayerParams> layers;
  DecoderParams decoder;
  Eigen::MatrixXd discriminator;

  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
};

/// Gradient container with the same tensor layout as ModelParams.
struct ModelGrads {
  std::vector<LayerParams> layers;
  DecoderParams decoder;
  Eigen::MatrixXd discriminator;

  static ModelGrads zeros_like(const ModelParams& p);
  void accumulate(const ModelGrads& other);
  void scale(double factor);
};

/// Uniform view over every parameter/gradient tensor, in a fixed order.
struct TensorRef {
  std::string name;
  double* data;
  std::int64_t size;
};
std::vector<TensorRef> tensor_refs(ModelParams& p);
std::vector<TensorRef> tensor_refs(ModelGrads& g);

/// Per-node precomputation shared across pairs: tangent-at-origin rows of
/// every node's lifted attributes, and (optionally, for inference where the
/// weights are frozen) the first layer's matvec output per node.
struct EncoderCache {
  Eigen::MatrixXd tangent0;     // n x (input_dim+1)
  Eigen::MatrixXd first_layer;  // n x (hidden_dim+1) when enabled
  bool has_first_layer = false;
};

EncoderCache build_encoder_cache(const GraphView& g, const ModelParams& params,
                                 bool with_first_layer);

// --- Spec-level building blocks ------------------------------------------

/// One hyperbolic graph-convolution pass over manifold rows:
/// exp_o(ReLU(Adj * log_o((W (x) H) (+) b))), with dropout on tangent
/// coordinates during training.
Eigen::MatrixXd hgcn_layer(const Eigen::MatrixXd& H, const Eigen::MatrixXd& adj_norm,
                           const LayerParams& params, const ModelConfig& cfg,
                           bool training = false, Rng* dropout_rng = nullptr,
                           NumericCounters* counters = nullptr);

/// Encodes raw feature rows with the configured number of layers; `a_sub` is
/// the 0/1 subgraph adjacency (zero diagonal), normalized internally.
Eigen::MatrixXd encode_rows(const Eigen::MatrixXd& x_rows, const Eigen::MatrixXd& a_sub,
                            const ModelParams& params, bool training = false,
                            Rng* dropout_rng = nullptr, NumericCounters* counters = nullptr);

/// Encodes an instance pair's (anonymized) subgraph.
Eigen::MatrixXd encode_subgraph(const InstancePair& pair, const GraphView& g,
                                const ModelParams& params, bool training = false,
                                Rng* dropout_rng = nullptr, NumericCounters* counters = nullptr);

/// Decodes manifold rows to the tangent space at the origin and applies the
/// affine decoder.
Eigen::MatrixXd decode_tangent(const Eigen::MatrixXd& H, const DecoderParams& dec,
                               const ModelConfig& cfg);

/// Mean pooling over rows.
Eigen::VectorXd readout(const Eigen::MatrixXd& E);

/// Embeds the target node as a one-node subgraph with its true (unmasked)
/// attributes and a self-loop adjacency, through the same encoder (and, except
/// in no-decoder mode, the same decoder).
Eigen::VectorXd encode_target(const Eigen::VectorXd& x_v, const ModelParams& params,
                              bool training = false, Rng* dropout_rng = nullptr,
                              NumericCounters* counters = nullptr);

/// logistic(t' M s), strictly inside (0,1).
double discriminate(const Eigen::VectorXd& target_emb, const Eigen::VectorXd& subgraph_emb,
                    const Eigen::MatrixXd& M);

// --- Training-grade pair evaluation ---------------------------------------

/// Saved intermediates of one pair's forward pass (both branches).
struct LayerTape {
  Eigen::MatrixXd t_in, u, h_w, w_pt, h_b, t1, g_pre, drop_mask, z, h_out;
};
struct BranchTape {
  Eigen::MatrixXd adj;
  std::vector<LayerTape> layers;
  Eigen::MatrixXd t_dec;
  Eigen::MatrixXd emb;
  Eigen::VectorXd pooled;
};
struct PairTape {
  BranchTape sub, tgt;
  Eigen::VectorXd t_emb, s_emb;
  double logit = 0.0;
  double q = 0.5;
};

struct PairEvalResult {
  double q = 0.5;
  double logit = 0.0;
};

/// Forward pass for one pair. With a tape, records everything backward_pair
/// needs; without one (inference) it uses the cache's first-layer rows when
/// available.
PairEvalResult forward_pair(const ModelParams& params, const EncoderCache& cache,
                            const GraphView& g, const InstancePair& pair, bool training = false,
                            Rng* dropout_rng = nullptr, NumericCounters* counters = nullptr,
                            PairTape* tape = nullptr);

/// Accumulates d(loss)/d(params) for one pair given d(loss)/d(logit).
void backward_pair(const ModelParams& params, const PairTape& tape, double dloss_dlogit,
                   ModelGrads& grads);

// --- Checkpointing ---------------------------------------------------------

/// Writes a versioned JSON checkpoint; doubles round-trip bit-exactly.
void save_checkpoint(const ModelParams& params, std::uint64_t seed, const std::string& path);

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hcad
