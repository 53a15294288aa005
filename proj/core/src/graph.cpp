#include "hcad/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <queue>
#include <sstream>
#include <system_error>

#include "hcad/rng.hpp"

namespace hcad {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

double parse_double(std::string_view tok, const std::string& path, std::int64_t line_no) {
  double out = 0;
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  if (ec != std::errc{} || ptr != e) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": malformed numeric field '" +
                     std::string(tok) + "'");
  }
  return out;
}

std::int64_t parse_int(std::string_view tok, const std::string& path, std::int64_t line_no) {
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": malformed integer '" +
                     std::string(tok) + "'");
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

bool Csr::has_edge(NodeId u, NodeId v) const {
  return std::binary_search(begin(u), end(u), v);
}

AttributedGraph make_graph(std::int64_t n, std::vector<std::pair<NodeId, NodeId>> raw_edges,
                           Eigen::MatrixXd X, std::optional<std::vector<std::uint8_t>> labels) {
  if (X.rows() != n) {
    throw ParseError("attribute matrix has " + std::to_string(X.rows()) + " rows but n = " +
                     std::to_string(n));
  }
  if (labels && static_cast<std::int64_t>(labels->size()) != n) {
    throw ParseError("label vector has " + std::to_string(labels->size()) + " entries but n = " +
                     std::to_string(n));
  }

  AttributedGraph g;
  g.n = n;
  g.X = std::move(X);
  g.labels = std::move(labels);

  g.edges.reserve(raw_edges.size());
  for (auto [u, v] : raw_edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw ParseError("edge endpoint out of range: (" + std::to_string(u) + ", " +
                       std::to_string(v) + ") with n = " + std::to_string(n));
    }
    if (u == v) {
      ++g.self_loops_dropped;
      continue;
    }
    if (u > v) std::swap(u, v);
    g.edges.emplace_back(u, v);
  }
  std::sort(g.edges.begin(), g.edges.end());
  const auto before = g.edges.size();
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.duplicate_edges_collapsed = static_cast<std::int64_t>(before - g.edges.size());

  g.adj.offsets.assign(n + 1, 0);
  for (auto [u, v] : g.edges) {
    ++g.adj.offsets[u + 1];
    ++g.adj.offsets[v + 1];
  }
  std::partial_sum(g.adj.offsets.begin(), g.adj.offsets.end(), g.adj.offsets.begin());
  g.adj.neighbors.resize(g.edges.size() * 2);
  std::vector<std::int64_t> cursor(g.adj.offsets.begin(), g.adj.offsets.end() - 1);
  for (auto [u, v] : g.edges) {
    g.adj.neighbors[cursor[u]++] = v;
    g.adj.neighbors[cursor[v]++] = u;
  }
  // Neighbor lists are sorted because the edge list is sorted and insertion
  // preserves order per row.
  return g;
}

AttributedGraph load_graph(const std::string& edge_path, const std::string& attr_path,
                           const std::optional<std::string>& label_path) {
  // Attributes first: the row count defines n.
  std::ifstream attr_in(attr_path);
  if (!attr_in) throw IoError("cannot open attribute file: " + attr_path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::int64_t line_no = 0;
  std::int64_t d = -1;
  while (std::getline(attr_in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view tok(line.data() + start,
                                 (comma == std::string::npos ? line.size() : comma) - start);
      row.push_back(parse_double(tok, attr_path, line_no));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (d < 0) {
      d = static_cast<std::int64_t>(row.size());
    } else if (static_cast<std::int64_t>(row.size()) != d) {
      throw ParseError(attr_path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(d) + " columns, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<std::int64_t>(rows.size());
  if (n == 0) throw ParseError(attr_path + ": no attribute rows");
  Eigen::MatrixXd X(n, d);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < d; ++j) X(i, j) = rows[i][j];
  }

  std::ifstream edge_in(edge_path);
  if (!edge_in) throw IoError("cannot open edge file: " + edge_path);
  std::vector<std::pair<NodeId, NodeId>> edges;
  line_no = 0;
  while (std::getline(edge_in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto toks = split_ws(line);
    if (toks.size() != 2) {
      throw ParseError(edge_path + ":" + std::to_string(line_no) +
                       ": expected two node indices, got " + std::to_string(toks.size()) +
                       " fields");
    }
    const std::int64_t u = parse_int(toks[0], edge_path, line_no);
    const std::int64_t v = parse_int(toks[1], edge_path, line_no);
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw ParseError(edge_path + ":" + std::to_string(line_no) + ": node index out of range [0, " +
                       std::to_string(n) + ")");
    }
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }

  std::optional<std::vector<std::uint8_t>> labels;
  if (label_path) {
    std::ifstream label_in(*label_path);
    if (!label_in) throw IoError("cannot open label file: " + *label_path);
    std::vector<std::uint8_t> y;
    line_no = 0;
    while (std::getline(label_in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::int64_t v = parse_int(line, *label_path, line_no);
      if (v != 0 && v != 1) {
        throw ParseError(*label_path + ":" + std::to_string(line_no) +
                         ": labels must be 0 or 1, got " + std::to_string(v));
      }
      y.push_back(static_cast<std::uint8_t>(v));
    }
    if (static_cast<std::int64_t>(y.size()) != n) {
      throw ParseError(*label_path + ": " + std::to_string(y.size()) + " labels for " +
                       std::to_string(n) + " attribute rows");
    }
    labels = std::move(y);
  }

  return make_graph(n, std::move(edges), std::move(X), std::move(labels));
}

void save_graph(const AttributedGraph& g, const std::string& edge_path,
                const std::string& attr_path, const std::optional<std::string>& label_path) {
  {
    std::ofstream out(edge_path);
    if (!out) throw IoError("cannot write edge file: " + edge_path);
    for (auto [u, v] : g.edges) out << u << ' ' << v << '\n';
  }
  {
    std::ofstream out(attr_path);
    if (!out) throw IoError("cannot write attribute file: " + attr_path);
    std::string line;
    for (std::int64_t i = 0; i < g.n; ++i) {
      line.clear();
      for (std::int64_t j = 0; j < g.X.cols(); ++j) {
        if (j) line.push_back(',');
        line += fmt_double(g.X(i, j));
      }
      line.push_back('\n');
      out << line;
    }
  }
  if (label_path) {
    if (!g.labels) throw ConfigError("save_graph: label path given but graph has no labels");
    std::ofstream out(*label_path);
    if (!out) throw IoError("cannot write label file: " + *label_path);
    for (auto y : *g.labels) out << static_cast<int>(y) << '\n';
  }
}

NormalizedAdjacency normalize_adjacency(const AttributedGraph& g) {
  Eigen::VectorXd inv_sqrt_deg(g.n);
  for (std::int64_t v = 0; v < g.n; ++v) {
    inv_sqrt_deg(v) = 1.0 / std::sqrt(static_cast<double>(g.adj.degree(static_cast<NodeId>(v)) + 1));
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(g.edges.size() * 2 + g.n);
  for (std::int64_t v = 0; v < g.n; ++v) {
    trip.emplace_back(v, v, inv_sqrt_deg(v) * inv_sqrt_deg(v));
  }
  for (auto [u, v] : g.edges) {
    const double w = inv_sqrt_deg(u) * inv_sqrt_deg(v);
    trip.emplace_back(u, v, w);
    trip.emplace_back(v, u, w);
  }
  Eigen::SparseMatrix<double> m(g.n, g.n);
  m.setFromTriplets(trip.begin(), trip.end());
  return NormalizedAdjacency{std::move(m)};
}

Eigen::MatrixXd normalize_adjacency_dense(const Eigen::MatrixXd& a_sub) {
  const auto c = a_sub.rows();
  Eigen::MatrixXd a_tilde = a_sub + Eigen::MatrixXd::Identity(c, c);
  Eigen::VectorXd inv_sqrt = a_tilde.rowwise().sum().array().sqrt().inverse();
  return inv_sqrt.asDiagonal() * a_tilde * inv_sqrt.asDiagonal();
}

namespace {

void bfs_from(const AttributedGraph& g, NodeId source, std::vector<std::int32_t>& dist) {
  dist.assign(g.n, kUnreachable);
  std::deque<NodeId> queue;
  dist[source] = 0;
  queue.push_back(source);
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    for (const NodeId* it = g.adj.begin(u); it != g.adj.end(u); ++it) {
      if (dist[*it] == kUnreachable) {
        dist[*it] = dist[u] + 1;
        queue.push_back(*it);
      }
    }
  }
}

}  // namespace

std::vector<std::vector<std::int32_t>> shortest_paths(const AttributedGraph& g,
                                                      const std::vector<NodeId>& sources) {
  std::vector<std::vector<std::int32_t>> out(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const NodeId s = sources[i];
    if (s < 0 || s >= g.n) throw DomainError("shortest_paths: source out of range");
    bfs_from(g, s, out[i]);
  }
  return out;
}

std::vector<NodeId> largest_component(const AttributedGraph& g) {
  std::vector<std::int32_t> comp(g.n, -1);
  std::int32_t n_comp = 0;
  std::vector<std::int64_t> sizes;
  for (std::int64_t s = 0; s < g.n; ++s) {
    if (comp[s] != -1) continue;
    std::int64_t size = 0;
    std::deque<NodeId> queue{static_cast<NodeId>(s)};
    comp[s] = n_comp;
    while (!queue.empty()) {
      const NodeId u = queue.front();
      queue.pop_front();
      ++size;
      for (const NodeId* it = g.adj.begin(u); it != g.adj.end(u); ++it) {
        if (comp[*it] == -1) {
          comp[*it] = n_comp;
          queue.push_back(*it);
        }
      }
    }
    sizes.push_back(size);
    ++n_comp;
  }
  const auto best = static_cast<std::int32_t>(
      std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  std::vector<NodeId> nodes;
  nodes.reserve(sizes[best]);
  for (std::int64_t v = 0; v < g.n; ++v) {
    if (comp[v] == best) nodes.push_back(static_cast<NodeId>(v));
  }
  return nodes;
}

namespace {

// C(n,4) without overflow; saturates at uint64 max.
std::uint64_t choose4(std::uint64_t n) {
  if (n < 4) return 0;
  unsigned __int128 r = n;
  r *= n - 1;
  r *= n - 2;
  r *= n - 3;
  r /= 24;
  const unsigned __int128 cap = std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(r > cap ? cap : r);
}

double quad_delta(std::int32_t ab, std::int32_t ac, std::int32_t ad, std::int32_t bc,
                  std::int32_t bd, std::int32_t cd) {
  std::int32_t s1 = ab + cd;
  std::int32_t s2 = ac + bd;
  std::int32_t s3 = ad + bc;
  if (s1 < s2) std::swap(s1, s2);
  if (s2 < s3) std::swap(s2, s3);
  if (s1 < s2) std::swap(s1, s2);
  return 0.5 * static_cast<double>(s1 - s2);
}

}  // namespace

HyperbolicityReport gromov_hyperbolicity(const AttributedGraph& g, std::uint64_t sample_budget,
                                         std::uint64_t seed) {
  if (sample_budget < 1) throw ConfigError("gromov_hyperbolicity: sample_budget must be >= 1");
  const std::vector<NodeId> comp = largest_component(g);
  const auto m = static_cast<std::int64_t>(comp.size());
  if (m < 4) return HyperbolicityReport{0.0, 0, true};

  const std::uint64_t total = choose4(static_cast<std::uint64_t>(m));
  const bool exhaustive = total <= sample_budget;

  // Working node set: the whole component when exhaustive, otherwise a seeded
  // uniform subset sized so that it carries at least `sample_budget` distinct
  // quadruples. Each examined quadruple is then marginally uniform over the
  // component's quadruples; the estimate stays a lower bound either way.
  std::vector<NodeId> pool;
  Rng rng(seed);
  if (exhaustive) {
    pool = comp;
  } else {
    std::int64_t s = 4;
    while (s < m && choose4(static_cast<std::uint64_t>(s)) < sample_budget) ++s;
    const auto picks = rng.sample_without_replacement(m, s);
    pool.reserve(picks.size());
    for (auto i : picks) pool.push_back(comp[i]);
  }

  const auto s = static_cast<std::int64_t>(pool.size());
  std::vector<std::vector<std::int32_t>> dist(s);
  for (std::int64_t i = 0; i < s; ++i) bfs_from(g, pool[i], dist[i]);
  auto d = [&](std::int64_t i, std::int64_t j) { return dist[i][pool[j]]; };

  HyperbolicityReport report;
  report.exact = exhaustive;
  double best = 0.0;
  if (exhaustive) {
    for (std::int64_t a = 0; a < s; ++a)
      for (std::int64_t b = a + 1; b < s; ++b)
        for (std::int64_t c = b + 1; c < s; ++c)
          for (std::int64_t e = c + 1; e < s; ++e) {
            best = std::max(best, quad_delta(d(a, b), d(a, c), d(a, e), d(b, c), d(b, e), d(c, e)));
            ++report.quadruples_examined;
          }
  } else {
    for (std::uint64_t q = 0; q < sample_budget; ++q) {
      std::int64_t idx[4];
      for (int t = 0; t < 4; ++t) {
        bool fresh = false;
        while (!fresh) {
          idx[t] = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(s)));
          fresh = true;
          for (int p = 0; p < t; ++p) fresh = fresh && idx[p] != idx[t];
        }
      }
      best = std::max(best, quad_delta(d(idx[0], idx[1]), d(idx[0], idx[2]), d(idx[0], idx[3]),
                                       d(idx[1], idx[2]), d(idx[1], idx[3]), d(idx[2], idx[3])));
      ++report.quadruples_examined;
    }
  }
  report.delta = best;
  return report;
}

std::string hyperbolicity_report_json(const HyperbolicityReport& r) {
  nlohmann::json j;
  j["delta"] = r.delta;
  j["quadruples_examined"] = r.quadruples_examined;
  j["exact"] = r.exact;
  return j.dump(2);
}

}  // namespace hcad
