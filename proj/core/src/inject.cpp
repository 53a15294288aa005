#include "hcad/inject.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "hcad/rng.hpp"

namespace hcad {

namespace {

std::vector<std::uint8_t> labels_or_zero(const AttributedGraph& g) {
  if (g.labels) return *g.labels;
  return std::vector<std::uint8_t>(g.n, 0);
}

}  // namespace

std::pair<AttributedGraph, std::vector<NodeId>> inject_structural(const AttributedGraph& g, int p,
                                                                  int q, std::uint64_t seed) {
  if (p < 2) throw ConfigError("inject_structural: clique size must be >= 2");
  if (q < 0) throw ConfigError("inject_structural: clique count must be >= 0");
  const std::int64_t total = static_cast<std::int64_t>(p) * q;
  if (total > g.n) {
    throw ConfigError("inject_structural: p*q = " + std::to_string(total) + " exceeds n = " +
                      std::to_string(g.n));
  }

  Rng rng(seed);
  const auto picks = rng.sample_without_replacement(g.n, total);
  std::vector<NodeId> chosen(picks.begin(), picks.end());

  std::vector<std::pair<NodeId, NodeId>> edges = g.edges;
  for (int c = 0; c < q; ++c) {
    for (int i = 0; i < p; ++i) {
      for (int j = i + 1; j < p; ++j) {
        edges.emplace_back(chosen[c * p + i], chosen[c * p + j]);  // dedup in make_graph
      }
    }
  }

  auto labels = labels_or_zero(g);
  for (NodeId v : chosen) labels[v] = 1;

  AttributedGraph out = make_graph(g.n, std::move(edges), g.X, std::move(labels));
  return {std::move(out), std::move(chosen)};
}

std::pair<AttributedGraph, std::vector<NodeId>> inject_attribute(
    const AttributedGraph& g, std::int64_t k, int candidate_size, std::uint64_t seed,
    const std::vector<NodeId>& exclude) {
  if (k < 0) throw ConfigError("inject_attribute: k must be >= 0");
  if (candidate_size < 1) throw ConfigError("inject_attribute: candidate_size must be >= 1");
  if (k + static_cast<std::int64_t>(exclude.size()) > g.n) {
    throw ConfigError("inject_attribute: k + |exclude| exceeds n");
  }

  std::unordered_set<NodeId> excluded(exclude.begin(), exclude.end());
  std::vector<NodeId> eligible;
  eligible.reserve(g.n - static_cast<std::int64_t>(excluded.size()));
  for (std::int64_t v = 0; v < g.n; ++v) {
    if (!excluded.count(static_cast<NodeId>(v))) eligible.push_back(static_cast<NodeId>(v));
  }
  if (k > static_cast<std::int64_t>(eligible.size())) {
    throw ConfigError("inject_attribute: not enough eligible nodes");
  }

  Rng rng(seed);
  const auto target_idx = rng.sample_without_replacement(eligible.size(), k);
  std::vector<NodeId> targets;
  targets.reserve(k);
  for (auto i : target_idx) targets.push_back(eligible[i]);

  AttributedGraph out = g;
  auto labels = labels_or_zero(g);

  for (NodeId t : targets) {
    // Candidate pool: everything eligible except the target itself.
    std::vector<NodeId> pool;
    pool.reserve(eligible.size() - 1);
    for (NodeId v : eligible) {
      if (v != t) pool.push_back(v);
    }
    if (pool.empty()) throw ConfigError("inject_attribute: no candidate donors available");
    const auto want = std::min<std::int64_t>(candidate_size, static_cast<std::int64_t>(pool.size()));
    const auto cand_idx = rng.sample_without_replacement(pool.size(), want);

    NodeId best = pool[cand_idx[0]];
    double best_dist = -1.0;
    for (auto ci : cand_idx) {
      const NodeId c = pool[ci];
      const double dist = (out.X.row(t) - out.X.row(c)).norm();
      if (dist > best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    out.X.row(t) = out.X.row(best);
    labels[t] = 1;
  }

  out.labels = std::move(labels);
  return {std::move(out), std::move(targets)};
}

std::pair<AttributedGraph, InjectionReport> inject_combined(const AttributedGraph& g,
                                                            const InjectionConfig& cfg) {
  const std::int64_t k = cfg.resolved_attr_count();
  const std::int64_t structural = static_cast<std::int64_t>(cfg.clique_size) * cfg.clique_count;
  if (structural + k > g.n) {
    throw ConfigError("injection would label more nodes than the graph has: " +
                      std::to_string(structural + k) + " > " + std::to_string(g.n));
  }

  InjectionReport report;
  AttributedGraph staged = g;
  if (cfg.clique_count > 0) {
    const std::int64_t edges_before = staged.num_edges();
    auto [with_cliques, structural_nodes] = inject_structural(
        staged, cfg.clique_size, cfg.clique_count, Rng(cfg.seed).fork(0x696e6a31ULL).next_u64());
    report.edges_added = with_cliques.num_edges() - edges_before;
    report.structural_nodes = std::move(structural_nodes);
    staged = std::move(with_cliques);
  }
  if (k > 0) {
    auto [with_attrs, attr_nodes] =
        inject_attribute(staged, k, cfg.candidate_size, Rng(cfg.seed).fork(0x696e6a32ULL).next_u64(),
                         report.structural_nodes);
    report.attribute_nodes = std::move(attr_nodes);
    staged = std::move(with_attrs);
  }
  if (!staged.labels) staged.labels = std::vector<std::uint8_t>(staged.n, 0);
  return {std::move(staged), std::move(report)};
}

std::string injection_report_json(const InjectionReport& r) {
  nlohmann::json j;
  j["structural_nodes"] = r.structural_nodes;
  j["attribute_nodes"] = r.attribute_nodes;
  j["edges_added"] = r.edges_added;
  return j.dump(2);
}

}  // namespace hcad
