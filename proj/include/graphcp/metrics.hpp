#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "graphcp/conformal.hpp"
#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"

namespace graphcp {

/// Fraction of nodes whose true label lies in their set.
inline double coverage(const PredictionSets& sets, const LabelVector& labels) {
  if (sets.size() == 0) throw DataError("coverage of an empty set collection");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const NodeId v = sets.node_ids()[i];
    if (v >= labels.size()) throw DataError("prediction set node has no label");
    hit += sets.contains(i, static_cast<std::size_t>(labels[v])) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(sets.size());
}

/// Mean set size.
inline double efficiency(const PredictionSets& sets) {
  if (sets.size() == 0) throw DataError("efficiency of an empty set collection");
  std::size_t total = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) total += sets.set_size(i);
  return static_cast<double>(total) / static_cast<double>(sets.size());
}

struct StratifiedCoverage {
  /// Unweighted mean over classes that occur among the evaluated nodes.
  double value = 0.0;
  /// Per-class coverage; NaN for classes absent from the evaluated nodes.
  std::vector<double> per_class;
  std::vector<std::size_t> class_counts;
};

inline StratifiedCoverage label_stratified_coverage(const PredictionSets& sets, const LabelVector& labels) {
  if (sets.size() == 0) throw DataError("stratified coverage of an empty set collection");
  const std::size_t k = labels.num_classes();
  std::vector<std::size_t> covered(k, 0);
  StratifiedCoverage out;
  out.class_counts.assign(k, 0);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const NodeId v = sets.node_ids()[i];
    if (v >= labels.size()) throw DataError("prediction set node has no label");
    const auto y = static_cast<std::size_t>(labels[v]);
    ++out.class_counts[y];
    covered[y] += sets.contains(i, y) ? 1 : 0;
  }
  double sum = 0.0;
  std::size_t present = 0;
  out.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < k; ++c) {
    if (out.class_counts[c] == 0) continue;
    out.per_class[c] = static_cast<double>(covered[c]) / static_cast<double>(out.class_counts[c]);
    sum += out.per_class[c];
    ++present;
  }
  out.value = sum / static_cast<double>(present);
  return out;
}

/// The stratified-coverage formula exactly as typeset,
/// (1/n) sum_i (1/K) sum_k 1[y_i in C(x_i), y_i = k], which equals coverage / K.
inline double label_stratified_coverage_literal(const PredictionSets& sets, const LabelVector& labels) {
  return coverage(sets, labels) / static_cast<double>(labels.num_classes());
}

}  // namespace graphcp
