#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hcad/model.hpp"
#include "hcad/sampler.hpp"

namespace hcad {

struct ScoreConfig {
  int rounds = 256;
  std::uint64_t seed = 0;
  int threads = 1;
  bool keep_detail = false;  // track per-node mean negative/positive scores

  void validate() const {
    if (rounds < 1) throw ConfigError("score: rounds must be >= 1");
  }
};

struct AnomalyReport {
  Eigen::VectorXd scores;          // Q_i per node
  std::vector<NodeId> ranking;     // node ids by descending score, ties by id
  std::optional<double> auc;
  Eigen::MatrixXd detail;          // n x 2: mean q_minus, mean q_plus (optional)
  int rounds = 0;
  std::uint64_t seed = 0;
};

/// One detection round for node v: draws a fresh positive and negative pair
/// from the stream keyed by (seed, v, round) and returns (q_minus, q_plus).
std::pair<double, double> round_score(const ModelParams& params, const EncoderCache& cache,
                                      const GraphView& g, NodeId v, std::uint64_t round_index,
                                      const RwrConfig& rwr_cfg, std::uint64_t seed);

/// Multi-round anomaly scores Q_i = mean_r (q_minus - q_plus), with the
/// descending-score ranking. Rounds and nodes are schedule-independent.
AnomalyReport multi_round_score(const ModelParams& params, const GraphView& g,
                                const RwrConfig& rwr_cfg, const ScoreConfig& cfg);

/// Mann-Whitney ROC-AUC with ties counted as 1/2, via rank aggregation.
double roc_auc(const Eigen::VectorXd& scores, const std::vector<std::uint8_t>& labels);

/// Writes scores CSV (node_id,score,rank), a JSON summary, and optionally the
/// per-node margin detail CSV (node_id,negative,positive,margin).
void emit_report(const AnomalyReport& report, const std::string& scores_csv_path,
                 const std::string& summary_json_path,
                 const std::optional<std::string>& detail_csv_path = std::nullopt,
                 const std::string& checkpoint_id = "");

/// Reads back a scores CSV in the emitted format: (node_id, score) rows.
std::vector<std::pair<NodeId, double>> read_scores_csv(const std::string& path);

}  // namespace hcad
