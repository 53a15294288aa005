#include "hcad/score.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "hcad/parallel.hpp"

namespace hcad {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

std::pair<double, double> round_score(const ModelParams& params, const EncoderCache& cache,
                                      const GraphView& g, NodeId v, std::uint64_t round_index,
                                      const RwrConfig& rwr_cfg, std::uint64_t seed) {
  // Third key component is salted so inference streams never coincide with
  // training-epoch streams when one seed drives a whole pipeline.
  Rng neg_rng = Rng(seed).fork(static_cast<std::uint64_t>(v), round_index, 0x100);
  Rng pos_rng = Rng(seed).fork(static_cast<std::uint64_t>(v), round_index, 0x101);
  const InstancePair neg = make_pair(g, v, Polarity::Negative, rwr_cfg, neg_rng);
  const InstancePair pos = make_pair(g, v, Polarity::Positive, rwr_cfg, pos_rng);
  // Inference: dropout disabled, no tape.
  const double q_minus = forward_pair(params, cache, g, neg, false, nullptr, nullptr, nullptr).q;
  const double q_plus = forward_pair(params, cache, g, pos, false, nullptr, nullptr, nullptr).q;
  return {q_minus, q_plus};
}

AnomalyReport multi_round_score(const ModelParams& params, const GraphView& g,
                                const RwrConfig& rwr_cfg, const ScoreConfig& cfg) {
  cfg.validate();
  rwr_cfg.validate();
  const EncoderCache cache = build_encoder_cache(g, params, /*with_first_layer=*/true);

  AnomalyReport report;
  report.rounds = cfg.rounds;
  report.seed = cfg.seed;
  report.scores = Eigen::VectorXd::Zero(g.n);
  if (cfg.keep_detail) report.detail = Eigen::MatrixXd::Zero(g.n, 2);

  parallel_for(g.n, cfg.threads, [&](std::int64_t begin, std::int64_t end, int) {
    for (std::int64_t v = begin; v < end; ++v) {
      double sum_minus = 0.0;
      double sum_plus = 0.0;
      for (int r = 0; r < cfg.rounds; ++r) {
        const auto [q_minus, q_plus] =
            round_score(params, cache, g, static_cast<NodeId>(v),
                        static_cast<std::uint64_t>(r), rwr_cfg, cfg.seed);
        sum_minus += q_minus;
        sum_plus += q_plus;
      }
      report.scores(v) = (sum_minus - sum_plus) / cfg.rounds;
      if (cfg.keep_detail) {
        report.detail(v, 0) = sum_minus / cfg.rounds;
        report.detail(v, 1) = sum_plus / cfg.rounds;
      }
    }
  });

  report.ranking.resize(g.n);
  std::iota(report.ranking.begin(), report.ranking.end(), 0);
  std::sort(report.ranking.begin(), report.ranking.end(), [&](NodeId a, NodeId b) {
    if (report.scores(a) != report.scores(b)) return report.scores(a) > report.scores(b);
    return a < b;  // reproducible tie-break
  });
  return report;
}

double roc_auc(const Eigen::VectorXd& scores, const std::vector<std::uint8_t>& labels) {
  const auto n = scores.size();
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw DimensionError("roc_auc: scores and labels differ in length");
  }
  std::int64_t n_pos = 0;
  for (auto y : labels) n_pos += y;
  const std::int64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw NumericError("roc_auc: need at least one positive and one negative label");
  }

  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::int64_t a, std::int64_t b) { return scores(a) < scores(b); });

  // Average ranks over tie groups; ties then contribute exactly 1/2 per pair.
  double rank_sum_pos = 0.0;
  std::int64_t i = 0;
  while (i < n) {
    std::int64_t j = i;
    while (j < n && scores(order[j]) == scores(order[i])) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::int64_t t = i; t < j; ++t) {
      if (labels[order[t]]) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  return (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

void emit_report(const AnomalyReport& report, const std::string& scores_csv_path,
                 const std::string& summary_json_path,
                 const std::optional<std::string>& detail_csv_path,
                 const std::string& checkpoint_id) {
  const auto n = report.scores.size();
  std::vector<std::int64_t> rank_of(n);
  for (std::int64_t r = 0; r < n; ++r) rank_of[report.ranking[r]] = r + 1;

  {
    std::ofstream out(scores_csv_path);
    if (!out) throw IoError("cannot write scores CSV: " + scores_csv_path);
    out << "node_id,score,rank\n";
    for (std::int64_t v = 0; v < n; ++v) {
      out << v << ',' << fmt_double(report.scores(v)) << ',' << rank_of[v] << '\n';
    }
  }
  {
    nlohmann::json j;
    j["auc"] = report.auc ? nlohmann::json(*report.auc) : nlohmann::json(nullptr);
    j["rounds"] = report.rounds;
    j["seed"] = report.seed;
    j["nodes"] = n;
    j["checkpoint"] = checkpoint_id;
    std::ofstream out(summary_json_path);
    if (!out) throw IoError("cannot write summary JSON: " + summary_json_path);
    out << j.dump(2) << '\n';
  }
  if (detail_csv_path) {
    if (report.detail.rows() != n) {
      throw ConfigError("emit_report: detail requested but not tracked during scoring");
    }
    std::ofstream out(*detail_csv_path);
    if (!out) throw IoError("cannot write detail CSV: " + *detail_csv_path);
    out << "node_id,negative,positive,margin\n";
    for (std::int64_t v = 0; v < n; ++v) {
      const double neg = report.detail(v, 0);
      const double pos = report.detail(v, 1);
      out << v << ',' << fmt_double(neg) << ',' << fmt_double(pos) << ','
          << fmt_double(std::abs(neg - pos)) << '\n';
    }
  }
}

std::vector<std::pair<NodeId, double>> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scores CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty scores CSV");
  std::vector<std::pair<NodeId, double>> out;
  std::int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected node_id,score,rank");
    }
    NodeId id = 0;
    double score = 0;
    auto r1 = std::from_chars(line.data(), line.data() + c1, id);
    auto r2 = std::from_chars(line.data() + c1 + 1, line.data() + c2, score);
    if (r1.ec != std::errc{} || r2.ec != std::errc{}) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed row");
    }
    out.emplace_back(id, score);
  }
  return out;
}

}  // namespace hcad
