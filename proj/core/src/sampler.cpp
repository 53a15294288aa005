#include "hcad/sampler.hpp"

#include <algorithm>

namespace hcad {

namespace {

constexpr int kNegativeRetries = 32;

Eigen::MatrixXd induced_adjacency(const GraphView& g, const std::vector<NodeId>& members,
                                  int distinct_count) {
  const auto c = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(c, c);
  for (int i = 0; i < distinct_count; ++i) {
    for (int j = i + 1; j < distinct_count; ++j) {
      if (g.adj->has_edge(members[i], members[j])) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
      }
    }
  }
  return a;
}

}  // namespace

Eigen::MatrixXd InstancePair::features(const GraphView& g) const {
  const auto c = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(c, g.X->cols());
  // Row 0 stays zero: the start node is anonymized. Padded rows stay zero too.
  for (int i = 1; i < distinct_count; ++i) x.row(i) = g.X->row(members[i]);
  return x;
}

std::vector<NodeId> rwr_subgraph(const GraphView& g, NodeId start, const RwrConfig& cfg, Rng& rng) {
  cfg.validate();
  if (start < 0 || start >= g.n) throw DomainError("rwr_subgraph: start node out of range");
  const int c = cfg.subgraph_size;

  std::vector<NodeId> members;
  members.reserve(c);
  members.push_back(start);

  NodeId current = start;
  const int max_steps = cfg.resolved_max_steps();
  for (int step = 0; step < max_steps && static_cast<int>(members.size()) < c; ++step) {
    const std::int64_t deg = g.adj->degree(current);
    if (deg == 0 || rng.next_double() < cfg.restart_prob) {
      current = start;
      continue;
    }
    current = g.adj->begin(current)[rng.next_below(static_cast<std::uint64_t>(deg))];
    if (std::find(members.begin(), members.end(), current) == members.end()) {
      members.push_back(current);
    }
  }
  while (static_cast<int>(members.size()) < c) members.push_back(start);
  return members;
}

InstancePair make_pair(const GraphView& g, NodeId target, Polarity polarity, const RwrConfig& cfg,
                       Rng& rng) {
  if (target < 0 || target >= g.n) throw DomainError("make_pair: target out of range");

  InstancePair pair;
  pair.target = target;
  pair.polarity = polarity;

  if (polarity == Polarity::Positive) {
    pair.members = rwr_subgraph(g, target, cfg, rng);
  } else {
    if (g.n < 2) throw SamplingError("cannot draw a negative pair on a single-node graph");
    // Resample if the target leaks into the sampled subgraph; on tiny graphs
    // where that is unavoidable, keep the last sample.
    for (int attempt = 0; attempt < kNegativeRetries; ++attempt) {
      std::int64_t start = static_cast<std::int64_t>(rng.next_below(g.n - 1));
      if (start >= target) ++start;
      pair.members = rwr_subgraph(g, static_cast<NodeId>(start), cfg, rng);
      if (std::find(pair.members.begin(), pair.members.end(), target) == pair.members.end()) break;
    }
  }

  std::vector<NodeId> distinct;
  for (NodeId v : pair.members) {
    if (std::find(distinct.begin(), distinct.end(), v) == distinct.end()) distinct.push_back(v);
  }
  pair.distinct_count = static_cast<int>(distinct.size());
  pair.a_sub = induced_adjacency(g, pair.members, pair.distinct_count);
  return pair;
}

std::vector<InstancePair> sample_epoch(const GraphView& g, const RwrConfig& cfg,
                                       std::uint64_t round) {
  cfg.validate();
  std::vector<NodeId> order(g.n);
  for (std::int64_t i = 0; i < g.n; ++i) order[i] = static_cast<NodeId>(i);
  Rng perm_rng = Rng(cfg.seed).fork(0x7065726dULL, round);  // "perm"
  perm_rng.shuffle(order);

  std::vector<InstancePair> pairs;
  pairs.reserve(2 * g.n);
  for (NodeId v : order) {
    Rng pos_rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(v), round, 0);
    Rng neg_rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(v), round, 1);
    pairs.push_back(make_pair(g, v, Polarity::Positive, cfg, pos_rng));
    pairs.push_back(make_pair(g, v, Polarity::Negative, cfg, neg_rng));
  }
  return pairs;
}

}  // namespace hcad
