#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"
#include "graphcp/random.hpp"

namespace graphcp {

/// train / valid / calib / test fractions.
using SplitFractions = std::array<double, 4>;

namespace detail {

inline constexpr std::uint64_t kFullSplitKey = 0;
inline constexpr std::uint64_t kDevPoolKey = 1;
inline constexpr std::uint64_t kEvalPoolKey = 2;
inline constexpr std::uint64_t kLabelCountKeyBase = 1'000;

inline std::array<std::size_t, 4> split_sizes(std::size_t n, const SplitFractions& f) {
  double sum = 0.0;
  for (double x : f) {
    if (!(x >= 0.0)) throw ConfigError("split fractions must be nonnegative");
    sum += x;
  }
  if (sum > 1.0 + 1e-9) throw ConfigError("split fractions sum to " + std::to_string(sum) + " > 1");
  std::array<std::size_t, 4> sizes{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f[i] + 1e-9));
    assigned += sizes[i];
  }
  if (std::abs(sum - 1.0) <= 1e-9 && assigned < n) sizes[3] += n - assigned;
  return sizes;
}

}  // namespace detail

/// Full-split partition of an explicit node pool. Sizes are floor(n * f)
/// with the rounding remainder going to test when the fractions sum to one.
/// The result depends only on positions within `pool`, so relabeling the
/// pool relabels the split.
inline SplitAssignment full_split(std::span<const NodeId> pool, const SplitFractions& fractions,
                                  const RandomPolicy& policy) {
  const auto sizes = detail::split_sizes(pool.size(), fractions);
  std::vector<NodeId> order(pool.begin(), pool.end());
  Stream(policy, Purpose::split, detail::kFullSplitKey).shuffle(std::span(order));

  SplitAssignment out;
  const std::array<std::vector<NodeId>*, 4> parts{&out.train, &out.valid, &out.calib, &out.test};
  auto it = order.begin();
  for (std::size_t i = 0; i < 4; ++i) {
    const auto len = static_cast<std::ptrdiff_t>(sizes[i]);
    parts[i]->assign(it, it + len);
    it += len;
  }
  return out;
}

/// Full split over nodes 0..n-1. With a predefined source split, train and
/// valid come only from the source train/valid pool and calib/test only from
/// the source test pool.
inline SplitAssignment full_split(std::size_t n, const SplitFractions& fractions,
                                  const std::optional<SplitAssignment>& predefined,
                                  const RandomPolicy& policy) {
  if (!predefined) {
    std::vector<NodeId> pool(n);
    std::iota(pool.begin(), pool.end(), NodeId{0});
    return full_split(pool, fractions, policy);
  }
  predefined->validate(n);
  const auto sizes = detail::split_sizes(n, fractions);

  std::vector<NodeId> dev = predefined->train;
  dev.insert(dev.end(), predefined->valid.begin(), predefined->valid.end());
  std::vector<NodeId> eval = predefined->test;
  if (dev.size() < sizes[0] + sizes[1]) {
    throw DataError("predefined train/valid pool has " + std::to_string(dev.size()) + " nodes, " +
                    std::to_string(sizes[0] + sizes[1]) + " requested");
  }
  if (eval.size() < sizes[2] + sizes[3]) {
    throw DataError("predefined test pool has " + std::to_string(eval.size()) + " nodes, " +
                    std::to_string(sizes[2] + sizes[3]) + " requested");
  }
  Stream(policy, Purpose::split, detail::kDevPoolKey).shuffle(std::span(dev));
  Stream(policy, Purpose::split, detail::kEvalPoolKey).shuffle(std::span(eval));

  SplitAssignment out;
  out.train.assign(dev.begin(), dev.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
  out.valid.assign(dev.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                   dev.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
  out.calib.assign(eval.begin(), eval.begin() + static_cast<std::ptrdiff_t>(sizes[2]));
  out.test.assign(eval.begin() + static_cast<std::ptrdiff_t>(sizes[2]),
                  eval.begin() + static_cast<std::ptrdiff_t>(sizes[2] + sizes[3]));
  return out;
}

struct LabelCountSplit {
  SplitAssignment split;
  /// Classes that ran out of nodes before train, valid and calib were filled.
  std::vector<Label> exhausted_classes;
};

/// Label-count partition: per class, up to `per_class` nodes go to train,
/// then valid, then calib; whatever remains is test.
inline LabelCountSplit label_count_split(const LabelVector& labels, std::size_t per_class,
                                         const RandomPolicy& policy) {
  if (per_class < 1) throw ConfigError("per_class must be >= 1");
  const std::size_t k = labels.num_classes();
  std::vector<std::vector<NodeId>> by_class(k);
  for (NodeId v = 0; v < labels.size(); ++v) by_class[static_cast<std::size_t>(labels[v])].push_back(v);

  LabelCountSplit result;
  auto& s = result.split;
  for (std::size_t c = 0; c < k; ++c) {
    auto& nodes = by_class[c];
    Stream(policy, Purpose::split, detail::kLabelCountKeyBase + c).shuffle(std::span(nodes));
    std::size_t pos = 0;
    for (auto* part : {&s.train, &s.valid, &s.calib}) {
      const std::size_t take = std::min(per_class, nodes.size() - pos);
      part->insert(part->end(), nodes.begin() + static_cast<std::ptrdiff_t>(pos),
                   nodes.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
    }
    if (nodes.size() < 3 * per_class) result.exhausted_classes.push_back(static_cast<Label>(c));
    s.test.insert(s.test.end(), nodes.begin() + static_cast<std::ptrdiff_t>(pos), nodes.end());
  }
  return result;
}

}  // namespace graphcp
