#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"
#include "graphcp/graph.hpp"
#include "graphcp/random.hpp"

namespace graphcp {

struct SbmGraph {
  Graph graph;
  LabelVector labels;
};

namespace detail {

inline constexpr std::uint64_t kOracleKeyBase = std::uint64_t{1} << 40;
inline constexpr std::uint64_t kCorruptKeyBase = std::uint64_t{1} << 41;

inline std::size_t block_of(std::size_t v, std::size_t n, std::size_t k) { return v * k / n; }

// Adds arcs (u, v) for v in [lo, hi), each independently with probability p,
// by skipping geometric gaps.
inline void sample_segment(NodeId u, std::size_t lo, std::size_t hi, double p, Stream& stream,
                           std::vector<Edge>& edges) {
  if (lo >= hi || p <= 0.0) return;
  if (p >= 1.0) {
    for (std::size_t v = lo; v < hi; ++v) edges.push_back({u, static_cast<NodeId>(v)});
    return;
  }
  const double log_q = std::log1p(-p);
  double pos = static_cast<double>(lo) - 1.0;
  for (;;) {
    const double gap = std::floor(std::log1p(-stream.next_unit()) / log_q);
    pos += 1.0 + gap;
    if (pos >= static_cast<double>(hi)) return;
    edges.push_back({u, static_cast<NodeId>(pos)});
  }
}

// Row centered on `center`: (1 - noise) e_center + noise * ((1 - noise) D + noise / K),
// D ~ Dirichlet(1, ..., 1).
inline void noisy_row(std::size_t center, double noise, Stream& stream, std::span<double> row) {
  const std::size_t k = row.size();
  double total = 0.0;
  for (auto& x : row) {
    x = -std::log1p(-stream.next_unit());
    total += x;
  }
  for (std::size_t c = 0; c < k; ++c) {
    const double dirichlet = row[c] / total;
    row[c] = noise * ((1.0 - noise) * dirichlet + noise / static_cast<double>(k));
  }
  row[center] += 1.0 - noise;
}

inline std::size_t sample_from_row(std::span<const double> row, double u) {
  double cumulative = 0.0;
  for (std::size_t c = 0; c < row.size(); ++c) {
    cumulative += row[c];
    if (u < cumulative) return c;
  }
  for (std::size_t c = row.size(); c-- > 0;) {
    if (row[c] > 0.0) return c;
  }
  return row.size() - 1;
}

}  // namespace detail

/// Balanced K-block stochastic block model with contiguous blocks, symmetrized.
inline SbmGraph generate_sbm(std::size_t num_nodes, std::size_t num_classes, double intra_p, double inter_p,
                             const RandomPolicy& policy) {
  if (num_classes < 1 || num_nodes < num_classes) throw ConfigError("SBM needs num_nodes >= K >= 1");
  if (!(inter_p >= 0.0 && inter_p <= intra_p && intra_p <= 1.0)) {
    throw ConfigError("SBM requires 0 <= inter_p <= intra_p <= 1");
  }
  std::vector<Edge> edges;
  std::vector<Label> labels(num_nodes);
  for (std::size_t u = 0; u < num_nodes; ++u) {
    const std::size_t b = detail::block_of(u, num_nodes, num_classes);
    labels[u] = static_cast<Label>(b);
    // First node of the next block.
    const std::size_t block_end = ((b + 1) * num_nodes + num_classes - 1) / num_classes;
    Stream stream(policy, Purpose::synth, u);
    detail::sample_segment(static_cast<NodeId>(u), u + 1, block_end, intra_p, stream, edges);
    detail::sample_segment(static_cast<NodeId>(u), block_end, num_nodes, inter_p, stream, edges);
  }
  return {Graph::from_edges(num_nodes, edges, true), LabelVector(std::move(labels), num_classes)};
}

/// Fraction of stored arcs joining equally-labeled endpoints.
inline double edge_homophily(const Graph& graph, const LabelVector& labels) {
  if (graph.num_arcs() == 0) return 0.0;
  std::size_t same = 0;
  for (NodeId u = 0; u < graph.num_nodes(); ++u) {
    for (NodeId v : graph.neighbors(u)) same += labels[u] == labels[v] ? 1 : 0;
  }
  return static_cast<double>(same) / static_cast<double>(graph.num_arcs());
}

struct OracleData {
  ProbabilityMatrix probs;
  /// Labels drawn from the rows, so each row is the exact conditional law.
  LabelVector labels;
};

/// Noisy rows centered on `centers[v]` with per-class noise (indexed by the
/// center's class), then labels resampled from each row.
inline OracleData oracle_probabilities(const LabelVector& centers, std::span<const double> noise_per_class,
                                       const RandomPolicy& policy) {
  const std::size_t k = centers.num_classes();
  if (noise_per_class.size() != k) throw ConfigError("need one noise level per class");
  for (double x : noise_per_class) {
    if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("noise must lie in [0, 1]");
  }
  std::vector<double> values(centers.size() * k);
  std::vector<Label> labels(centers.size());
  for (NodeId v = 0; v < centers.size(); ++v) {
    Stream stream(policy, Purpose::synth, detail::kOracleKeyBase + v);
    const auto center = static_cast<std::size_t>(centers[v]);
    auto row = std::span(values).subspan(static_cast<std::size_t>(v) * k, k);
    detail::noisy_row(center, noise_per_class[center], stream, row);
    labels[v] = static_cast<Label>(detail::sample_from_row(row, stream.next_unit()));
  }
  return {ProbabilityMatrix(centers.size(), k, std::move(values)), LabelVector(std::move(labels), k)};
}

inline OracleData oracle_probabilities(const LabelVector& centers, double noise, const RandomPolicy& policy) {
  const std::vector<double> per_class(centers.num_classes(), noise);
  return oracle_probabilities(centers, per_class, policy);
}

/// Base-model stand-in whose rows are centered on a wrong class with
/// probability `flip_rate`. Labels are left untouched.
inline ProbabilityMatrix corrupted_probabilities(const LabelVector& labels, double noise, double flip_rate,
                                                 const RandomPolicy& policy) {
  const std::size_t k = labels.num_classes();
  if (!(noise >= 0.0 && noise <= 1.0) || !(flip_rate >= 0.0 && flip_rate <= 1.0)) {
    throw ConfigError("noise and flip_rate must lie in [0, 1]");
  }
  std::vector<double> values(labels.size() * k);
  for (NodeId v = 0; v < labels.size(); ++v) {
    Stream stream(policy, Purpose::synth, detail::kCorruptKeyBase + v);
    auto center = static_cast<std::size_t>(labels[v]);
    if (stream.next_unit() < flip_rate) {
      const auto j = static_cast<std::size_t>(stream.next_below(k - 1));
      center = j < center ? j : j + 1;
    }
    detail::noisy_row(center, noise, stream, std::span(values).subspan(static_cast<std::size_t>(v) * k, k));
  }
  return {labels.size(), k, std::move(values)};
}

}  // namespace graphcp
