#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graphcp/conformal.hpp"
#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"
#include "graphcp/graph.hpp"
#include "graphcp/scores.hpp"

namespace graphcp {

enum class WeightKind { uniform, hyperbolic, exponential };

inline std::string_view to_string(WeightKind w) {
  switch (w) {
    case WeightKind::uniform: return "uniform";
    case WeightKind::hyperbolic: return "hyperbolic";
    case WeightKind::exponential: return "exponential";
  }
  return "unknown";
}

inline WeightKind parse_weight_kind(std::string_view s) {
  for (auto w : {WeightKind::uniform, WeightKind::hyperbolic, WeightKind::exponential}) {
    if (to_string(w) == s) return w;
  }
  throw ConfigError("unknown NAPS weight kind '" + std::string(s) + "'");
}

struct NapsConfig {
  std::size_t k = 2;
  WeightKind weight_kind = WeightKind::uniform;
  std::size_t batch_size = 1024;
  /// Base APS scores use the u * p_y randomization term.
  bool randomized_aps = true;
};

/// Min hop distances from a batch of test nodes to calibration nodes.
/// 0 means "farther than k or unreachable".
struct HopDistanceMatrix {
  std::vector<NodeId> rows;
  std::vector<NodeId> cols;
  std::vector<std::uint16_t> entries;

  [[nodiscard]] std::uint16_t at(std::size_t r, std::size_t c) const { return entries[r * cols.size() + c]; }
  [[nodiscard]] std::span<const std::uint16_t> row(std::size_t r) const {
    return {entries.data() + r * cols.size(), cols.size()};
  }
};

/// Batched k-hop distances. Hop n keeps the sparse rows of path_n = A[B,:] A^(n-1)
/// and marks calibration columns whose path count turns nonzero for the
/// first time. Path counts are nonnegative, so only their support is kept.
inline HopDistanceMatrix sparse_k_hop(const Graph& graph, std::span<const NodeId> batch, std::span<const NodeId> calib,
                                      std::size_t k) {
  if (k < 1) throw ConfigError("sparse_k_hop requires k >= 1");
  if (k > 0xFFFF) throw ConfigError("sparse_k_hop: k too large");
  if (!graph.is_symmetrized()) throw DataError("sparse_k_hop requires a symmetrized graph");

  HopDistanceMatrix out{{batch.begin(), batch.end()}, {calib.begin(), calib.end()},
                        std::vector<std::uint16_t>(batch.size() * calib.size(), 0)};
  constexpr std::uint32_t kNotCalib = ~std::uint32_t{0};
  std::vector<std::uint32_t> col_of(graph.num_nodes(), kNotCalib);
  for (std::size_t j = 0; j < calib.size(); ++j) col_of[calib[j]] = static_cast<std::uint32_t>(j);

  std::vector<std::uint32_t> stamp(graph.num_nodes(), 0);
  std::uint32_t epoch = 0;
  std::vector<NodeId> path;
  std::vector<NodeId> next;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    auto dist = std::span(out.entries).subspan(r * calib.size(), calib.size());
    const auto first = graph.neighbors(batch[r]);
    path.assign(first.begin(), first.end());
    for (NodeId v : path) {
      if (col_of[v] != kNotCalib) dist[col_of[v]] = 1;
    }
    for (std::size_t hop = 2; hop <= k && !path.empty(); ++hop) {
      ++epoch;
      next.clear();
      for (NodeId u : path) {
        for (NodeId w : graph.neighbors(u)) {
          if (stamp[w] != epoch) {
            stamp[w] = epoch;
            next.push_back(w);
          }
        }
      }
      path.swap(next);
      for (NodeId v : path) {
        const auto j = col_of[v];
        if (j != kNotCalib && dist[j] == 0) dist[j] = static_cast<std::uint16_t>(hop);
      }
    }
  }
  return out;
}

/// Maps a distance to its weight; distance 0 (out of range) maps to 0.
inline double naps_weight(std::uint16_t d, WeightKind kind) {
  if (d == 0) return 0.0;
  switch (kind) {
    case WeightKind::uniform: return 1.0;
    case WeightKind::hyperbolic: return 1.0 / static_cast<double>(d);
    case WeightKind::exponential: return std::ldexp(1.0, -static_cast<int>(d));
  }
  throw ConfigError("unknown NAPS weight kind");
}

/// Row-major weights, same shape as `distances`.
inline std::vector<double> naps_weights(const HopDistanceMatrix& distances, WeightKind kind) {
  std::vector<double> out(distances.entries.size());
  std::transform(distances.entries.begin(), distances.entries.end(), out.begin(),
                 [kind](std::uint16_t d) { return naps_weight(d, kind); });
  return out;
}

namespace detail {

// `order` sorts `scores` ascending. The test point carries raw mass 1 at +inf.
inline double weighted_quantile_sorted(std::span<const double> scores, std::span<const std::uint32_t> order,
                                       std::span<const double> weights, double alpha) {
  double total = 1.0;
  for (double w : weights) total += w;
  const double target = (1.0 - alpha) * total;
  const double slack = kRankSlack * target;
  double cumulative = 0.0;
  for (auto i : order) {
    if (weights[i] == 0.0) continue;
    cumulative += weights[i];
    if (cumulative >= target - slack) return scores[i];
  }
  return kInfinity;
}

inline std::vector<std::uint32_t> ascending_order(std::span<const double> scores) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0U);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace detail

/// Weighted conformal quantile: calibration scores carry `weights`, the test
/// point carries mass 1 at +inf, all normalized to total one. Returns the
/// smallest score whose accumulated mass reaches 1 - alpha, else +inf.
inline double weighted_quantile(std::span<const double> scores, std::span<const double> weights, double alpha) {
  if (scores.size() != weights.size()) throw DataError("weighted_quantile: scores and weights differ in length");
  check_alpha(alpha);
  for (double w : weights) {
    if (!(w >= 0.0)) throw DataError("weighted_quantile: weights must be nonnegative");
  }
  const auto order = detail::ascending_order(scores);
  return detail::weighted_quantile_sorted(scores, order, weights, alpha);
}

/// Per-test-node thresholds over `calib_scores` (aligned with split.calib),
/// computed batch by batch.
inline CalibrationResult naps_thresholds(const Graph& graph, std::span<const NodeId> calib,
                                         std::span<const double> calib_scores, std::span<const NodeId> test,
                                         const NapsConfig& config, double alpha) {
  check_alpha(alpha);
  if (config.batch_size < 1) throw ConfigError("NAPS batch_size must be >= 1");
  if (calib.size() != calib_scores.size()) throw DataError("naps_thresholds: calibration scores misaligned");
  const auto order = detail::ascending_order(calib_scores);

  CalibrationResult result{alpha, CalibrationResult::Kind::per_node, {}, {}, {test.begin(), test.end()}};
  result.thresholds.reserve(test.size());
  result.n_calib.reserve(test.size());
  for (std::size_t start = 0; start < test.size(); start += config.batch_size) {
    const auto batch = test.subspan(start, std::min(config.batch_size, test.size() - start));
    const auto dist = sparse_k_hop(graph, batch, calib, config.k);
    const auto weights = naps_weights(dist, config.weight_kind);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto w = std::span(weights).subspan(r * calib.size(), calib.size());
      result.thresholds.push_back(detail::weighted_quantile_sorted(calib_scores, order, w, alpha));
      result.n_calib.push_back(static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double x) { return x > 0; })));
    }
  }
  return result;
}

struct NapsOutput {
  CalibrationResult calibration;
  PredictionSets sets;
};

/// NAPS end to end: APS scores, per-node weighted quantiles, prediction sets
/// for split.test.
inline NapsOutput naps_predict(const Graph& graph, const ProbabilityMatrix& probs, const LabelVector& labels,
                               const SplitAssignment& split, const NapsConfig& config, double alpha,
                               const RandomPolicy& policy) {
  if (!split.usable_for_conformal()) throw DataError("NAPS needs nonempty calib and test sets");
  const auto calib_table = aps_scores(probs, split.calib, config.randomized_aps, policy);
  const auto calib_scores = true_label_scores(calib_table, labels);
  auto calibration = naps_thresholds(graph, split.calib, calib_scores, split.test, config, alpha);
  const auto test_table = aps_scores(probs, split.test, config.randomized_aps, policy);
  auto sets = build_sets(test_table, calibration);
  return {std::move(calibration), std::move(sets)};
}

}  // namespace graphcp
