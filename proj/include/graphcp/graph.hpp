#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graphcp/errors.hpp"

namespace graphcp {

using NodeId = std::uint32_t;

struct Edge {
  NodeId source;
  NodeId target;
};

/// Immutable CSR adjacency. Rows are sorted, duplicate-free and loop-free.
class Graph {
 public:
  Graph() : row_offsets_{0} {}

  /// Builds the CSR from an arbitrary edge list. Duplicates and self-loops
  /// are dropped; with `symmetrize` every arc is mirrored.
  static Graph from_edges(std::size_t num_nodes, std::span<const Edge> edges, bool symmetrize) {
    std::vector<std::pair<NodeId, NodeId>> arcs;
    arcs.reserve(symmetrize ? 2 * edges.size() : edges.size());
    for (const auto& e : edges) {
      if (e.source >= num_nodes || e.target >= num_nodes) {
        throw DataError("edge (" + std::to_string(e.source) + ", " + std::to_string(e.target) +
                        ") references a node id >= num_nodes = " + std::to_string(num_nodes));
      }
      if (e.source == e.target) continue;
      arcs.emplace_back(e.source, e.target);
      if (symmetrize) arcs.emplace_back(e.target, e.source);
    }
    std::sort(arcs.begin(), arcs.end());
    arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());

    Graph g;
    g.num_nodes_ = num_nodes;
    g.symmetrized_ = symmetrize;
    g.row_offsets_.assign(num_nodes + 1, 0);
    g.col_indices_.reserve(arcs.size());
    for (const auto& [u, v] : arcs) {
      ++g.row_offsets_[u + 1];
      g.col_indices_.push_back(v);
    }
    for (std::size_t i = 0; i < num_nodes; ++i) g.row_offsets_[i + 1] += g.row_offsets_[i];
    return g;
  }

  [[nodiscard]] std::size_t num_nodes() const noexcept { return num_nodes_; }
  /// Number of stored directed entries (twice the undirected edge count when symmetrized).
  [[nodiscard]] std::size_t num_arcs() const noexcept { return col_indices_.size(); }
  [[nodiscard]] bool is_symmetrized() const noexcept { return symmetrized_; }

  [[nodiscard]] std::span<const NodeId> neighbors(NodeId v) const {
    return {col_indices_.data() + row_offsets_[v], col_indices_.data() + row_offsets_[v + 1]};
  }
  [[nodiscard]] std::size_t degree(NodeId v) const { return row_offsets_[v + 1] - row_offsets_[v]; }

  [[nodiscard]] std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  [[nodiscard]] std::span<const NodeId> col_indices() const noexcept { return col_indices_; }

  [[nodiscard]] bool has_arc(NodeId u, NodeId v) const {
    const auto row = neighbors(u);
    return std::binary_search(row.begin(), row.end(), v);
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<NodeId> col_indices_;
  bool symmetrized_ = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace detail

/// Reads `u<TAB>v` lines (0-based). Blank lines and lines starting with '#'
/// are skipped. Without `num_nodes` the node count is max id + 1.
inline Graph load_graph(std::istream& in, bool symmetrize,
                        std::optional<std::size_t> num_nodes = std::nullopt) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  NodeId max_id = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto sep = view.find('\t');
    if (sep == std::string_view::npos) sep = view.find(' ');
    Edge e{};
    if (sep == std::string_view::npos || !detail::parse_int(view.substr(0, sep), e.source) ||
        !detail::parse_int(view.substr(sep + 1), e.target)) {
      throw DataError("malformed edge record at line " + std::to_string(line_no) + ": '" + line + "'");
    }
    max_id = std::max({max_id, e.source, e.target});
    any = true;
    edges.push_back(e);
  }
  const std::size_t n = num_nodes.value_or(any ? static_cast<std::size_t>(max_id) + 1 : 0);
  return Graph::from_edges(n, edges, symmetrize);
}

inline Graph load_graph_file(const std::string& path, bool symmetrize,
                             std::optional<std::size_t> num_nodes = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list '" + path + "'");
  return load_graph(in, symmetrize, num_nodes);
}

/// Writes every stored arc as `u<TAB>v`, row-major order.
inline void save_graph(std::ostream& out, const Graph& g) {
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    for (NodeId v : g.neighbors(u)) out << u << '\t' << v << '\n';
  }
}

}  // namespace graphcp
