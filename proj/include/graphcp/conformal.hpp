#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"
#include "graphcp/random.hpp"
#include "graphcp/scores.hpp"

namespace graphcp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Relative slack applied before taking ceil((n + 1)(1 - alpha)) so that
/// products such as 10 * 0.9 land on the intended integer.
inline constexpr double kRankSlack = 1e-12;

struct CalibrationResult {
  enum class Kind { scalar, per_class, per_node };

  double alpha = 0.1;
  Kind kind = Kind::scalar;
  /// One entry (scalar), K entries (per_class) or one per node (per_node).
  /// +inf means "always include".
  std::vector<double> thresholds;
  /// Calibration sample count behind each threshold.
  std::vector<std::size_t> n_calib;
  /// Only for per_node: the test nodes the thresholds belong to.
  std::vector<NodeId> node_ids;
};

inline std::string_view to_string(CalibrationResult::Kind k) {
  switch (k) {
    case CalibrationResult::Kind::scalar: return "scalar";
    case CalibrationResult::Kind::per_class: return "per_class";
    case CalibrationResult::Kind::per_node: return "per_node";
  }
  return "unknown";
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1), got " + std::to_string(alpha));
}

/// 1-based rank ceil((n + 1)(1 - alpha)); may exceed n.
inline std::size_t conformal_rank(std::size_t n, double alpha) {
  const double x = static_cast<double>(n + 1) * (1.0 - alpha);
  const double r = std::ceil(x - kRankSlack * x);
  return r < 1.0 ? 1 : static_cast<std::size_t>(r);
}

/// The ceil((n + 1)(1 - alpha))-th smallest score, or +inf when that rank
/// exceeds n.
inline double conformal_quantile_value(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw DataError("conformal quantile of an empty score set");
  check_alpha(alpha);
  const std::size_t rank = conformal_rank(scores.size(), alpha);
  if (rank > scores.size()) return kInfinity;
  std::vector<double> work(scores.begin(), scores.end());
  auto nth = work.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(work.begin(), nth, work.end());
  return *nth;
}

inline CalibrationResult conformal_quantile(std::span<const double> true_scores, double alpha) {
  return {alpha, CalibrationResult::Kind::scalar, {conformal_quantile_value(true_scores, alpha)}, {true_scores.size()}, {}};
}

/// Per-class conformal quantiles; a class without calibration samples gets +inf.
inline CalibrationResult classwise_quantiles(std::span<const double> true_scores, std::span<const Label> labels,
                                             double alpha, std::size_t num_classes) {
  if (true_scores.size() != labels.size()) throw DataError("classwise_quantiles: scores and labels differ in length");
  check_alpha(alpha);
  std::vector<std::vector<double>> per_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) throw DataError("label out of range");
    per_class[static_cast<std::size_t>(labels[i])].push_back(true_scores[i]);
  }
  CalibrationResult r{alpha, CalibrationResult::Kind::per_class, {}, {}, {}};
  for (const auto& s : per_class) {
    r.thresholds.push_back(s.empty() ? kInfinity : conformal_quantile_value(s, alpha));
    r.n_calib.push_back(s.size());
  }
  return r;
}

/// Calibrates a score table: classwise for TPS-classwise style methods,
/// marginal otherwise.
inline CalibrationResult calibrate(const ScoreTable& calib_scores, const LabelVector& labels, double alpha,
                                   bool classwise) {
  const auto scores = true_label_scores(calib_scores, labels);
  if (!classwise) return conformal_quantile(scores, alpha);
  return classwise_quantiles(scores, gather_labels(labels, calib_scores.node_ids), alpha, calib_scores.num_classes);
}

/// Per-node label sets stored as packed bit rows.
class PredictionSets {
 public:
  PredictionSets() = default;
  PredictionSets(std::vector<NodeId> node_ids, std::size_t num_classes)
      : node_ids_(std::move(node_ids)),
        num_classes_(num_classes),
        words_per_row_((num_classes + 63) / 64),
        bits_(node_ids_.size() * words_per_row_, 0) {}

  [[nodiscard]] std::span<const NodeId> node_ids() const noexcept { return node_ids_; }
  [[nodiscard]] std::size_t size() const noexcept { return node_ids_.size(); }
  [[nodiscard]] std::size_t num_classes() const noexcept { return num_classes_; }

  void insert(std::size_t i, std::size_t y) { bits_[i * words_per_row_ + y / 64] |= std::uint64_t{1} << (y % 64); }
  [[nodiscard]] bool contains(std::size_t i, std::size_t y) const {
    return (bits_[i * words_per_row_ + y / 64] >> (y % 64)) & 1U;
  }
  [[nodiscard]] std::size_t set_size(std::size_t i) const {
    std::size_t n = 0;
    for (std::size_t w = 0; w < words_per_row_; ++w) n += static_cast<std::size_t>(std::popcount(bits_[i * words_per_row_ + w]));
    return n;
  }
  [[nodiscard]] std::vector<Label> labels_of(std::size_t i) const {
    std::vector<Label> out;
    for (std::size_t y = 0; y < num_classes_; ++y) {
      if (contains(i, y)) out.push_back(static_cast<Label>(y));
    }
    return out;
  }

  friend bool operator==(const PredictionSets&, const PredictionSets&) = default;

 private:
  std::vector<NodeId> node_ids_;
  std::size_t num_classes_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// Label y joins node v's set iff score(v, y) <= the applicable threshold.
inline PredictionSets build_sets(const ScoreTable& scores, const CalibrationResult& calibration) {
  using Kind = CalibrationResult::Kind;
  const std::size_t k = scores.num_classes;
  switch (calibration.kind) {
    case Kind::scalar:
      if (calibration.thresholds.size() != 1) throw DataError("scalar calibration needs exactly one threshold");
      break;
    case Kind::per_class:
      if (calibration.thresholds.size() != k) throw DataError("per-class calibration size differs from K");
      break;
    case Kind::per_node:
      if (calibration.node_ids != scores.node_ids || calibration.thresholds.size() != scores.rows()) {
        throw DataError("per-node calibration does not match the score table's nodes");
      }
      break;
  }
  PredictionSets sets(scores.node_ids, k);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = scores.row(i);
    for (std::size_t y = 0; y < k; ++y) {
      const double q = calibration.kind == Kind::scalar      ? calibration.thresholds[0]
                       : calibration.kind == Kind::per_class ? calibration.thresholds[y]
                                                             : calibration.thresholds[i];
      if (row[y] <= q) sets.insert(i, y);
    }
  }
  return sets;
}

/// One incorrect label per node, uniform over the K - 1 wrong classes,
/// drawn from the y-random stream keyed by node id.
inline std::vector<Label> sample_incorrect_labels(std::span<const NodeId> nodes, const LabelVector& labels,
                                                  std::size_t num_classes, const RandomPolicy& policy) {
  if (num_classes < 2) throw ConfigError("sample_incorrect_labels requires K >= 2");
  std::vector<Label> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) {
    Stream stream(policy, Purpose::y_random, v);
    const auto j = static_cast<Label>(stream.next_below(num_classes - 1));
    out.push_back(j < labels[v] ? j : j + 1);
  }
  return out;
}

/// Count-based incorrect-label miscoverage: (#{scores > q_hat} + 1) / (n + 1).
inline double alpha_c(std::span<const double> scores_incorrect, double q_hat) {
  if (scores_incorrect.empty()) throw DataError("alpha_c needs at least one score");
  const auto above = std::count_if(scores_incorrect.begin(), scores_incorrect.end(), [&](double s) { return s > q_hat; });
  return (static_cast<double>(above) + 1.0) / static_cast<double>(scores_incorrect.size() + 1);
}

struct MiscoverageBounds {
  double lower;
  double upper;
};

/// Bounds on Pr[y_{n+1} not in C_lambda] from the calibration counts:
/// #{s_i > lambda}/(n + 1) and (#{s_i > lambda} + 1)/(n + 1).
inline MiscoverageBounds miscoverage_bounds(std::span<const double> calib_scores, double lambda) {
  const auto above = std::count_if(calib_scores.begin(), calib_scores.end(), [&](double s) { return s > lambda; });
  const double denom = static_cast<double>(calib_scores.size() + 1);
  return {static_cast<double>(above) / denom, (static_cast<double>(above) + 1.0) / denom};
}

struct EfficiencyComparison {
  double alpha_c_A = 0.0;
  double alpha_c_Atilde = 0.0;
  double q_A = 0.0;
  double q_Atilde = 0.0;
  std::size_t n = 0;
  std::size_t num_classes = 0;
  double alpha = 0.0;
  /// 2 / (n + 1), the margin the alpha_c gap must reach.
  double margin = 0.0;
  bool condition_met = false;
  /// (K - 1)(alpha_c_A - alpha_c_Atilde): large-n expected set-size gain of A over A~.
  double asymptotic_gain = 0.0;
};

/// Pre-deployment efficiency comparison of score A against score A~ on the
/// same calibration nodes. Both methods share one draw of incorrect labels.
inline EfficiencyComparison compare_efficiency(const ScoreTable& table_A, const ScoreTable& table_Atilde,
                                               const LabelVector& labels, double alpha, const RandomPolicy& policy) {
  if (table_A.node_ids != table_Atilde.node_ids || table_A.num_classes != table_Atilde.num_classes) {
    throw DataError("compare_efficiency: score tables cover different calibration nodes");
  }
  EfficiencyComparison r;
  r.n = table_A.rows();
  r.num_classes = table_A.num_classes;
  r.alpha = alpha;
  r.q_A = conformal_quantile_value(true_label_scores(table_A, labels), alpha);
  r.q_Atilde = conformal_quantile_value(true_label_scores(table_Atilde, labels), alpha);

  const auto wrong = sample_incorrect_labels(table_A.node_ids, labels, r.num_classes, policy);
  std::vector<double> inc_A(r.n);
  std::vector<double> inc_At(r.n);
  for (std::size_t i = 0; i < r.n; ++i) {
    inc_A[i] = table_A.at(i, static_cast<std::size_t>(wrong[i]));
    inc_At[i] = table_Atilde.at(i, static_cast<std::size_t>(wrong[i]));
  }
  r.alpha_c_A = alpha_c(inc_A, r.q_A);
  r.alpha_c_Atilde = alpha_c(inc_At, r.q_Atilde);
  r.margin = 2.0 / static_cast<double>(r.n + 1);
  // Both alpha_c share the denominator n + 1, so the condition is decided on counts.
  const auto above = [](std::span<const double> s, double q) {
    return std::count_if(s.begin(), s.end(), [&](double x) { return x > q; });
  };
  const auto count_gap = above(inc_A, r.q_A) - above(inc_At, r.q_Atilde);
  r.condition_met = count_gap >= 2;
  r.asymptotic_gain = static_cast<double>(r.num_classes - 1) * static_cast<double>(count_gap) /
                      static_cast<double>(r.n + 1);
  return r;
}

/// Mean of |C_A~(v)| - |C_A(v)| over the rows of two aligned set collections.
inline double mean_set_size_difference(const PredictionSets& sets_A, const PredictionSets& sets_Atilde) {
  if (sets_A.size() != sets_Atilde.size() || sets_A.size() == 0) throw DataError("set collections differ in size");
  double total = 0.0;
  for (std::size_t i = 0; i < sets_A.size(); ++i) {
    total += static_cast<double>(sets_Atilde.set_size(i)) - static_cast<double>(sets_A.set_size(i));
  }
  return total / static_cast<double>(sets_A.size());
}

}  // namespace graphcp
