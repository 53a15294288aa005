#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "hcad/graph.hpp"
#include "hcad/rng.hpp"

namespace hcad {

struct RwrConfig {
  int subgraph_size = 4;      // c: nodes collected per subgraph
  double restart_prob = 0.1;  // probability of jumping back to the start
  int max_steps = -1;         // walk step cap; -1 means 64 * c
  std::uint64_t seed = 0;

  int resolved_max_steps() const { return max_steps > 0 ? max_steps : 64 * subgraph_size; }
  void validate() const {
    if (subgraph_size < 1) throw ConfigError("rwr: subgraph_size must be >= 1");
    if (!(restart_prob > 0.0 && restart_prob < 1.0)) {
      throw ConfigError("rwr: restart_prob must be in (0,1)");
    }
    if (resolved_max_steps() < subgraph_size) {
      throw ConfigError("rwr: max_steps must be >= subgraph_size");
    }
  }
};

enum class Polarity { Positive, Negative };

/// A target node paired with a sampled neighbor subgraph. `members` always has
/// length c; entries past `distinct_count` repeat the start node as padding and
/// carry zero attributes and no edges. Position 0 is the subgraph start node,
/// whose attribute row is zeroed (anonymization) in `features`.
struct InstancePair {
  NodeId target = 0;
  Polarity polarity = Polarity::Positive;
  std::vector<NodeId> members;
  int distinct_count = 0;
  Eigen::MatrixXd a_sub;  // c x c induced adjacency, symmetric, zero diagonal

  /// Pair label for the contrastive objective: positive -> 1, negative -> 0.
  double label() const { return polarity == Polarity::Positive ? 1.0 : 0.0; }

  /// X_sub: attribute rows of members with row 0 zeroed and padded rows zero.
  Eigen::MatrixXd features(const GraphView& g) const;
};

/// Random walk with restart from `start`: collects distinct visited nodes
/// (start first) until c are found or the step cap runs out, then pads with
/// the start node up to length c.
std::vector<NodeId> rwr_subgraph(const GraphView& g, NodeId start, const RwrConfig& cfg, Rng& rng);

/// Builds an instance pair. Positive pairs start the walk at the target;
/// negative pairs start at a uniformly drawn other node and resample (bounded
/// retries) if the target leaks into the subgraph.
InstancePair make_pair(const GraphView& g, NodeId target, Polarity polarity, const RwrConfig& cfg,
                       Rng& rng);

/// One positive and one negative pair for every node, in a seeded random node
/// permutation. Pair RNG streams are keyed by (seed, target, round, polarity),
/// so construction is schedule-independent.
std::vector<InstancePair> sample_epoch(const GraphView& g, const RwrConfig& cfg,
                                       std::uint64_t round);

}  // namespace hcad
