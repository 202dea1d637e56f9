#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"
#include "graphcp/graph.hpp"
#include "graphcp/random.hpp"

namespace graphcp {

enum class ScoreMethod { tps, tps_classwise, aps, aps_randomized, raps, daps, dtps };

inline constexpr std::array<ScoreMethod, 7> kAllScoreMethods{
    ScoreMethod::tps,  ScoreMethod::tps_classwise, ScoreMethod::aps, ScoreMethod::aps_randomized,
    ScoreMethod::raps, ScoreMethod::daps,          ScoreMethod::dtps};

inline std::string_view to_string(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::tps: return "tps";
    case ScoreMethod::tps_classwise: return "tps_classwise";
    case ScoreMethod::aps: return "aps";
    case ScoreMethod::aps_randomized: return "aps_randomized";
    case ScoreMethod::raps: return "raps";
    case ScoreMethod::daps: return "daps";
    case ScoreMethod::dtps: return "dtps";
  }
  return "unknown";
}

inline std::optional<ScoreMethod> parse_score_method(std::string_view s) {
  for (auto m : kAllScoreMethods) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

/// Methods calibrated with one threshold per class.
inline bool uses_classwise_quantiles(ScoreMethod m) {
  return m == ScoreMethod::tps_classwise || m == ScoreMethod::dtps;
}

/// Non-conformity scores s(v, y) for a list of nodes, row-major.
struct ScoreTable {
  std::vector<NodeId> node_ids;
  std::size_t num_classes = 0;
  std::vector<double> values;
  std::string method;
  bool randomized = false;

  [[nodiscard]] std::size_t rows() const noexcept { return node_ids.size(); }
  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {values.data() + i * num_classes, num_classes};
  }
  [[nodiscard]] std::span<double> row(std::size_t i) { return {values.data() + i * num_classes, num_classes}; }
  [[nodiscard]] double at(std::size_t i, std::size_t y) const { return values[i * num_classes + y]; }

  friend bool operator==(const ScoreTable&, const ScoreTable&) = default;
};

struct RapsParams {
  double nu = 0.01;
  double k_reg = 1.0;
  /// Penalize by the rank r_y instead of |{c : p_y >= p_c}|.
  bool rank_penalty = false;
};

struct DiffusionParams {
  double delta = 0.5;
};

/// Score of each row's true label, aligned with `table.node_ids`.
inline std::vector<double> true_label_scores(const ScoreTable& table, const LabelVector& labels) {
  std::vector<double> out;
  out.reserve(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out.push_back(table.at(i, static_cast<std::size_t>(labels[table.node_ids[i]])));
  }
  return out;
}

inline ScoreTable tps_scores(const ProbabilityMatrix& probs, std::span<const NodeId> nodes) {
  ScoreTable t{{nodes.begin(), nodes.end()}, probs.num_classes(), {}, "tps", false};
  t.values.reserve(nodes.size() * probs.num_classes());
  for (NodeId v : nodes) {
    for (double p : probs.row(v)) t.values.push_back(1.0 - p);
  }
  return t;
}

/// Classes ordered by descending probability. Runs of equal probability are
/// ordered by keys from the aps-u stream (counters 1..K), so ranks are always
/// well defined and reproducible.
inline std::vector<std::uint32_t> descending_order(std::span<const double> row, const RandomPolicy& policy,
                                                   NodeId node) {
  std::vector<std::uint32_t> order(row.size());
  std::iota(order.begin(), order.end(), 0U);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return row[a] > row[b]; });
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo + 1;
    while (hi < order.size() && row[order[hi]] == row[order[lo]]) ++hi;
    if (hi - lo > 1) {
      std::sort(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi),
                [&](std::uint32_t a, std::uint32_t b) {
                  return policy.bits(Purpose::aps_u, node, 1 + a) < policy.bits(Purpose::aps_u, node, 1 + b);
                });
    }
    lo = hi;
  }
  return order;
}

namespace detail {

// Fills `out` with cumulative APS mass up to each label's rank, minus
// u * p_y. Also reports each label's 1-based rank.
inline void aps_row(std::span<const double> p, std::span<const std::uint32_t> order, double u,
                    std::span<double> out, std::span<std::size_t> rank) {
  double cumulative = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto c = order[r];
    cumulative += p[c];
    out[c] = cumulative - u * p[c];
    rank[c] = r + 1;
  }
}

}  // namespace detail

/// APS scores. Deterministic: cumulative mass through the label's rank.
/// Randomized: additionally subtracts u * p_y, u drawn per node.
inline ScoreTable aps_scores(const ProbabilityMatrix& probs, std::span<const NodeId> nodes, bool randomized,
                             const RandomPolicy& policy) {
  const std::size_t k = probs.num_classes();
  ScoreTable t{{nodes.begin(), nodes.end()}, k, std::vector<double>(nodes.size() * k), randomized ? "aps_randomized" : "aps",
               randomized};
  std::vector<std::size_t> rank(k);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const NodeId v = nodes[i];
    const auto row = probs.row(v);
    const auto order = descending_order(row, policy, v);
    const double u = randomized ? uniform_unit(policy, Purpose::aps_u, v) : 0.0;
    detail::aps_row(row, order, u, t.row(i), rank);
  }
  return t;
}

/// RAPS: randomized APS plus nu * max(o(x, y) - k_reg, 0), where by default
/// o(x, y) = |{c : p_y >= p_c}|.
inline ScoreTable raps_scores(const ProbabilityMatrix& probs, std::span<const NodeId> nodes, const RapsParams& params,
                              const RandomPolicy& policy) {
  if (params.nu < 0.0 || params.k_reg < 0.0) throw ConfigError("RAPS nu and k_reg must be >= 0");
  const std::size_t k = probs.num_classes();
  ScoreTable t{{nodes.begin(), nodes.end()}, k, std::vector<double>(nodes.size() * k), "raps", true};
  std::vector<std::size_t> rank(k);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const NodeId v = nodes[i];
    const auto p = probs.row(v);
    const auto order = descending_order(p, policy, v);
    const double u = uniform_unit(policy, Purpose::aps_u, v);
    auto out = t.row(i);
    detail::aps_row(p, order, u, out, rank);
    for (std::size_t y = 0; y < k; ++y) {
      double o = 0.0;
      if (params.rank_penalty) {
        o = static_cast<double>(rank[y]);
      } else {
        for (std::size_t c = 0; c < k; ++c) o += p[y] >= p[c] ? 1.0 : 0.0;
      }
      out[y] += params.nu * std::max(o - params.k_reg, 0.0);
    }
  }
  return t;
}

/// One-step neighborhood diffusion of `base` onto `targets`:
/// s'(v) = (1 - delta) s(v) + delta * mean_{u in N(v)} s(u).
/// Isolated targets keep their own score.
inline ScoreTable diffuse_scores(const ScoreTable& base, const Graph& graph, const DiffusionParams& params,
                                 std::span<const NodeId> targets) {
  if (!(params.delta >= 0.0 && params.delta <= 1.0)) throw ConfigError("diffusion delta must lie in [0, 1]");
  constexpr std::size_t kMissing = static_cast<std::size_t>(-1);
  std::vector<std::size_t> row_of(graph.num_nodes(), kMissing);
  for (std::size_t i = 0; i < base.rows(); ++i) {
    if (base.node_ids[i] >= graph.num_nodes()) throw DataError("score row for node outside the graph");
    row_of[base.node_ids[i]] = i;
  }
  const std::size_t k = base.num_classes;
  ScoreTable out{{targets.begin(), targets.end()}, k, std::vector<double>(targets.size() * k), base.method,
                 base.randomized};
  std::vector<double> neighbor_sum(k);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const NodeId v = targets[i];
    if (v >= graph.num_nodes() || row_of[v] == kMissing) {
      throw DataError("missing base score for target node " + std::to_string(v));
    }
    const auto self = base.row(row_of[v]);
    auto dst = out.row(i);
    const auto nbrs = graph.neighbors(v);
    if (nbrs.empty()) {
      std::copy(self.begin(), self.end(), dst.begin());
      continue;
    }
    std::fill(neighbor_sum.begin(), neighbor_sum.end(), 0.0);
    for (NodeId u : nbrs) {
      if (row_of[u] == kMissing) throw DataError("missing base score for neighbor " + std::to_string(u));
      const auto s = base.row(row_of[u]);
      for (std::size_t y = 0; y < k; ++y) neighbor_sum[y] += s[y];
    }
    const double w = params.delta / static_cast<double>(nbrs.size());
    for (std::size_t y = 0; y < k; ++y) dst[y] = (1.0 - params.delta) * self[y] + w * neighbor_sum[y];
  }
  return out;
}

/// Diffuses every row of `base`; all their neighbors must be present too.
inline ScoreTable diffuse_scores(const ScoreTable& base, const Graph& graph, const DiffusionParams& params) {
  return diffuse_scores(base, graph, params, base.node_ids);
}

/// `nodes` plus every 1-hop neighbor, sorted and unique.
inline std::vector<NodeId> closed_neighborhood(const Graph& graph, std::span<const NodeId> nodes) {
  std::vector<NodeId> out(nodes.begin(), nodes.end());
  for (NodeId v : nodes) {
    const auto nbrs = graph.neighbors(v);
    out.insert(out.end(), nbrs.begin(), nbrs.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct ScoreOptions {
  RapsParams raps{};
  DiffusionParams diffusion{};
};

/// Scores for `nodes` under any named method. Diffused methods score the
/// closed neighborhood first and then diffuse onto `nodes`.
inline ScoreTable compute_scores(ScoreMethod method, const ProbabilityMatrix& probs, const Graph* graph,
                                 std::span<const NodeId> nodes, const ScoreOptions& options,
                                 const RandomPolicy& policy) {
  switch (method) {
    case ScoreMethod::tps:
      return tps_scores(probs, nodes);
    case ScoreMethod::tps_classwise: {
      auto t = tps_scores(probs, nodes);
      t.method = "tps_classwise";
      return t;
    }
    case ScoreMethod::aps:
      return aps_scores(probs, nodes, false, policy);
    case ScoreMethod::aps_randomized:
      return aps_scores(probs, nodes, true, policy);
    case ScoreMethod::raps:
      return raps_scores(probs, nodes, options.raps, policy);
    case ScoreMethod::daps:
    case ScoreMethod::dtps: {
      if (graph == nullptr) throw ConfigError(std::string(to_string(method)) + " requires a graph");
      const auto support = closed_neighborhood(*graph, nodes);
      auto base = method == ScoreMethod::daps ? aps_scores(probs, support, true, policy) : tps_scores(probs, support);
      auto out = diffuse_scores(base, *graph, options.diffusion, nodes);
      out.method = std::string(to_string(method));
      return out;
    }
  }
  throw ConfigError("unknown score method");
}

}  // namespace graphcp
