#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graphcp/errors.hpp"
#include "graphcp/graph.hpp"

namespace graphcp {

using Label = std::int32_t;

inline constexpr double kRowSumTolerance = 1e-5;

/// Row-stochastic |V| x K matrix of base-model class probabilities.
class ProbabilityMatrix {
 public:
  ProbabilityMatrix() = default;

  ProbabilityMatrix(std::size_t num_nodes, std::size_t num_classes, std::vector<double> values)
      : num_nodes_(num_nodes), num_classes_(num_classes), values_(std::move(values)) {
    if (num_classes_ < 2) throw DataError("probability matrix needs at least 2 classes");
    if (values_.size() != num_nodes_ * num_classes_) {
      throw DataError("probability matrix has " + std::to_string(values_.size()) + " entries, expected " +
                      std::to_string(num_nodes_ * num_classes_));
    }
    for (std::size_t v = 0; v < num_nodes_; ++v) {
      double sum = 0.0;
      for (double p : row(static_cast<NodeId>(v))) {
        if (!(p >= 0.0 && p <= 1.0)) {
          throw DataError("probability out of [0,1] in row " + std::to_string(v));
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        throw DataError("row " + std::to_string(v) + " sums to " + std::to_string(sum));
      }
    }
  }

  [[nodiscard]] std::size_t num_nodes() const noexcept { return num_nodes_; }
  [[nodiscard]] std::size_t num_classes() const noexcept { return num_classes_; }
  [[nodiscard]] std::span<const double> row(NodeId v) const {
    return {values_.data() + static_cast<std::size_t>(v) * num_classes_, num_classes_};
  }
  [[nodiscard]] double at(NodeId v, std::size_t c) const { return values_[v * num_classes_ + c]; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t num_nodes_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<double> values_;
};

/// Per-node ground-truth labels in [0, K).
class LabelVector {
 public:
  LabelVector() = default;
  LabelVector(std::vector<Label> labels, std::size_t num_classes)
      : labels_(std::move(labels)), num_classes_(num_classes) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= num_classes_) {
        throw DataError("label " + std::to_string(labels_[i]) + " at node " + std::to_string(i) +
                        " outside [0, " + std::to_string(num_classes_) + ")");
      }
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
  [[nodiscard]] std::size_t num_classes() const noexcept { return num_classes_; }
  [[nodiscard]] Label operator[](NodeId v) const { return labels_[v]; }
  [[nodiscard]] std::span<const Label> values() const noexcept { return labels_; }

 private:
  std::vector<Label> labels_;
  std::size_t num_classes_ = 0;
};

struct SplitAssignment {
  std::vector<NodeId> train;
  std::vector<NodeId> valid;
  std::vector<NodeId> calib;
  std::vector<NodeId> test;

  [[nodiscard]] bool usable_for_conformal() const noexcept { return !calib.empty() && !test.empty(); }

  /// Throws DataError unless the four sets are disjoint and inside [0, num_nodes).
  void validate(std::size_t num_nodes) const {
    std::vector<std::uint8_t> seen(num_nodes, 0);
    auto mark = [&](const std::vector<NodeId>& part, const char* name) {
      for (NodeId v : part) {
        if (v >= num_nodes) throw DataError(std::string(name) + " contains out-of-range node " + std::to_string(v));
        if (seen[v]) throw DataError("node " + std::to_string(v) + " assigned twice (" + name + ")");
        seen[v] = 1;
      }
    };
    mark(train, "train");
    mark(valid, "valid");
    mark(calib, "calib");
    mark(test, "test");
  }

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

/// Labels restricted to `nodes`, in order.
inline std::vector<Label> gather_labels(const LabelVector& labels, std::span<const NodeId> nodes) {
  std::vector<Label> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) out.push_back(labels[v]);
  return out;
}

}  // namespace graphcp
