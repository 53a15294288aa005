#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hcad/errors.hpp"

namespace hcad {

using NodeId = std::int32_t;

/// Compressed sparse row adjacency with sorted neighbor lists.
struct Csr {
  std::vector<std::int64_t> offsets;  // length n+1
  std::vector<NodeId> neighbors;

  std::int64_t degree(NodeId v) const { return offsets[v + 1] - offsets[v]; }
  const NodeId* begin(NodeId v) const { return neighbors.data() + offsets[v]; }
  const NodeId* end(NodeId v) const { return neighbors.data() + offsets[v + 1]; }
  bool has_edge(NodeId u, NodeId v) const;
};

/// Undirected attributed graph: deduplicated edge list (u < v, sorted),
/// dense attribute matrix, optional anomaly labels.
struct AttributedGraph {
  std::int64_t n = 0;
  std::vector<std::pair<NodeId, NodeId>> edges;
  Eigen::MatrixXd X;  // n x d
  std::optional<std::vector<std::uint8_t>> labels;
  Csr adj;

  // Cleanup counters from construction.
  std::int64_t self_loops_dropped = 0;
  std::int64_t duplicate_edges_collapsed = 0;

  std::int64_t num_edges() const { return static_cast<std::int64_t>(edges.size()); }
  int attr_dim() const { return static_cast<int>(X.cols()); }
};

/// Label-free view of a graph. The training path takes this type, so by
/// construction it cannot read anomaly labels.
struct GraphView {
  std::int64_t n = 0;
  const Csr* adj = nullptr;
  const Eigen::MatrixXd* X = nullptr;
};

inline GraphView view_of(const AttributedGraph& g) { return GraphView{g.n, &g.adj, &g.X}; }

/// Builds a graph from raw parts: drops self-loops (counted), collapses
/// duplicate/reversed edges (counted), validates endpoint ranges.
AttributedGraph make_graph(std::int64_t n, std::vector<std::pair<NodeId, NodeId>> raw_edges,
                           Eigen::MatrixXd X,
                           std::optional<std::vector<std::uint8_t>> labels = std::nullopt);

/// Loads a graph from an edge list, attribute CSV, and optional label file.
/// The node count is the attribute row count.
AttributedGraph load_graph(const std::string& edge_path, const std::string& attr_path,
                           const std::optional<std::string>& label_path = std::nullopt);

/// Writes the graph back out in the same formats.
void save_graph(const AttributedGraph& g, const std::string& edge_path,
                const std::string& attr_path,
                const std::optional<std::string>& label_path = std::nullopt);

/// Symmetrically normalized adjacency with self-loops:
/// D^{-1/2} (A + I) D^{-1/2}, assembled symmetric by construction.
struct NormalizedAdjacency {
  Eigen::SparseMatrix<double> matrix;
};

NormalizedAdjacency normalize_adjacency(const AttributedGraph& g);

/// Dense form of the same normalization for a small subgraph adjacency
/// (0/1 entries, zero diagonal).
Eigen::MatrixXd normalize_adjacency_dense(const Eigen::MatrixXd& a_sub);

inline constexpr std::int32_t kUnreachable = std::numeric_limits<std::int32_t>::max();

/// BFS hop distances from each source; unreachable entries get kUnreachable.
std::vector<std::vector<std::int32_t>> shortest_paths(const AttributedGraph& g,
                                                      const std::vector<NodeId>& sources);

/// Nodes of the largest connected component, ascending.
std::vector<NodeId> largest_component(const AttributedGraph& g);

struct HyperbolicityReport {
  double delta = 0.0;
  std::uint64_t quadruples_examined = 0;
  bool exact = false;
};

/// Gromov four-point hyperbolicity on the largest connected component: for a
/// quadruple with pairwise-distance sums S1 >= S2 >= S3, its delta is
/// (S1 - S2) / 2; the report carries the maximum over examined quadruples.
/// Exhaustive when C(n,4) <= sample_budget, otherwise a sampled lower bound.
HyperbolicityReport gromov_hyperbolicity(const AttributedGraph& g, std::uint64_t sample_budget,
                                         std::uint64_t seed);

std::string hyperbolicity_report_json(const HyperbolicityReport& r);

}  // namespace hcad
