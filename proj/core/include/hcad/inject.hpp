#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hcad/graph.hpp"

namespace hcad {

struct InjectionConfig {
  int clique_size = 15;      // nodes per injected clique (p)
  int clique_count = 0;      // number of cliques (q)
  std::int64_t attr_count = -1;  // attribute anomalies (k); -1 means p*q
  int candidate_size = 50;   // candidates examined per attribute swap
  std::uint64_t seed = 0;

  std::int64_t resolved_attr_count() const {
    return attr_count >= 0 ? attr_count
                           : static_cast<std::int64_t>(clique_size) * clique_count;
  }
};

struct InjectionReport {
  std::vector<NodeId> structural_nodes;
  std::vector<NodeId> attribute_nodes;
  std::int64_t edges_added = 0;
};

/// Selects q disjoint node sets of size p and makes each a clique; the chosen
/// nodes are labeled anomalous. Only adds edges.
std::pair<AttributedGraph, std::vector<NodeId>> inject_structural(const AttributedGraph& g, int p,
                                                                  int q, std::uint64_t seed);

/// Overwrites the attribute rows of k uniformly chosen targets (outside
/// `exclude`) with the row of the most Euclidean-distant of `candidate_size`
/// sampled candidates; targets are labeled anomalous. Only rewrites rows.
std::pair<AttributedGraph, std::vector<NodeId>> inject_attribute(
    const AttributedGraph& g, std::int64_t k, int candidate_size, std::uint64_t seed,
    const std::vector<NodeId>& exclude);

/// Structural injection followed by attribute injection with the structural
/// nodes excluded; the result carries exactly p*q + k positive labels.
std::pair<AttributedGraph, InjectionReport> inject_combined(const AttributedGraph& g,
                                                            const InjectionConfig& cfg);

std::string injection_report_json(const InjectionReport& r);

}  // namespace hcad
