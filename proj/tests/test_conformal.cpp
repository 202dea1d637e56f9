#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "graphcp/conformal.hpp"
#include "graphcp/scores.hpp"

using namespace graphcp;

namespace {

// Order statistic by full sort: the ceil((n+1)(1-alpha))-th smallest, +inf past n.
double sorted_oracle(std::vector<double> scores, std::size_t rank) {
  std::sort(scores.begin(), scores.end());
  return rank > scores.size() ? kInfinity : scores[rank - 1];
}

}  // namespace

TEST(ConformalQuantile, HandValues) {
  const std::vector<double> nine{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  EXPECT_EQ(conformal_rank(9, 0.1), 9U);
  EXPECT_DOUBLE_EQ(conformal_quantile_value(nine, 0.1), 0.9);
  EXPECT_DOUBLE_EQ(conformal_quantile_value(std::vector<double>{0.8, 0.2, 0.6, 0.4}, 0.5), 0.6);
  EXPECT_EQ(conformal_quantile_value(std::vector<double>{1, 2, 3, 4, 5}, 0.05), kInfinity);
}

TEST(ConformalQuantile, InvalidInputs) {
  EXPECT_THROW(conformal_quantile_value(std::vector<double>{}, 0.1), DataError);
  EXPECT_THROW(conformal_quantile_value(std::vector<double>{1.0}, 0.0), ConfigError);
  EXPECT_THROW(conformal_quantile_value(std::vector<double>{1.0}, 1.0), ConfigError);
}

TEST(ConformalQuantile, MatchesOrderStatisticEnumeration) {
  Stream s(RandomPolicy(1), Purpose::synth, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + s.next_below(60);
    std::vector<double> scores(n);
    for (auto& x : scores) x = std::floor(s.next_unit() * 10) / 10;  // plenty of ties
    const double alpha = 0.01 + 0.98 * s.next_unit();
    // Smallest rank r with r >= (n+1)(1-alpha), found by enumeration.
    std::size_t r = 1;
    while (static_cast<double>(r) < (static_cast<double>(n) + 1.0) * (1.0 - alpha) * (1.0 - 1e-12)) ++r;
    ASSERT_EQ(conformal_rank(n, alpha), r);
    ASSERT_EQ(conformal_quantile_value(scores, alpha), sorted_oracle(scores, r));
  }
}

TEST(ConformalQuantile, FloatArtifactsDoNotBumpRank) {
  // 10 * 0.9 is 9.000000000000002 in floating point.
  EXPECT_EQ(conformal_rank(9, 0.1), 9U);
  EXPECT_EQ(conformal_rank(99, 0.1), 90U);
  EXPECT_EQ(conformal_rank(999, 0.05), 950U);
}

TEST(Classwise, DisjointClassesUseOwnQuantiles) {
  const std::vector<double> scores{0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9};
  const std::vector<Label> labels{0, 0, 0, 0, 1, 1, 1, 1};
  const auto c = classwise_quantiles(scores, labels, 0.4, 3);
  ASSERT_EQ(c.kind, CalibrationResult::Kind::per_class);
  EXPECT_DOUBLE_EQ(c.thresholds[0], conformal_quantile_value(std::vector<double>{0.1, 0.2, 0.3, 0.4}, 0.4));
  EXPECT_DOUBLE_EQ(c.thresholds[1], conformal_quantile_value(std::vector<double>{0.6, 0.7, 0.8, 0.9}, 0.4));
  EXPECT_EQ(c.thresholds[2], kInfinity);
  EXPECT_EQ(c.n_calib, (std::vector<std::size_t>{4, 4, 0}));
}

TEST(Classwise, SingleClassReducesToScalar) {
  const std::vector<double> scores{0.5, 0.1, 0.9, 0.3, 0.7};
  const std::vector<Label> labels(5, 0);
  EXPECT_DOUBLE_EQ(classwise_quantiles(scores, labels, 0.3, 1).thresholds[0], conformal_quantile_value(scores, 0.3));
}

TEST(BuildSets, InfiniteThresholdGivesFullSets) {
  const ScoreTable t{{0, 1}, 3, {0.1, 0.5, 0.9, 0.2, 0.3, 0.99}, "tps", false};
  const CalibrationResult c{0.1, CalibrationResult::Kind::scalar, {kInfinity}, {3}, {}};
  const auto sets = build_sets(t, c);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(sets.set_size(i), 3U);
}

TEST(BuildSets, ThresholdBelowAllScoresGivesEmptySets) {
  const ScoreTable t{{0}, 3, {0.1, 0.5, 0.9}, "tps", false};
  const CalibrationResult c{0.1, CalibrationResult::Kind::scalar, {0.05}, {3}, {}};
  EXPECT_EQ(build_sets(t, c).set_size(0), 0U);
}

TEST(BuildSets, MatchesFilterOracle) {
  Stream s(RandomPolicy(2), Purpose::synth, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + s.next_below(70);
    ScoreTable t;
    t.num_classes = k;
    for (NodeId v = 0; v < 20; ++v) t.node_ids.push_back(v);
    for (std::size_t i = 0; i < 20 * k; ++i) t.values.push_back(s.next_unit());
    CalibrationResult scalar{0.1, CalibrationResult::Kind::scalar, {s.next_unit()}, {10}, {}};
    CalibrationResult per_class{0.1, CalibrationResult::Kind::per_class, {}, {}, {}};
    for (std::size_t y = 0; y < k; ++y) per_class.thresholds.push_back(y % 5 == 0 ? kInfinity : s.next_unit());
    CalibrationResult per_node{0.1, CalibrationResult::Kind::per_node, {}, {}, t.node_ids};
    for (int i = 0; i < 20; ++i) per_node.thresholds.push_back(s.next_unit());
    for (const auto* c : {&scalar, &per_class, &per_node}) {
      const auto sets = build_sets(t, *c);
      for (std::size_t i = 0; i < 20; ++i) {
        std::vector<Label> expected;
        for (std::size_t y = 0; y < k; ++y) {
          const double q = c->kind == CalibrationResult::Kind::scalar      ? c->thresholds[0]
                           : c->kind == CalibrationResult::Kind::per_class ? c->thresholds[y]
                                                                           : c->thresholds[i];
          if (t.at(i, y) <= q) expected.push_back(static_cast<Label>(y));
        }
        ASSERT_EQ(sets.labels_of(i), expected);
        ASSERT_EQ(sets.set_size(i), expected.size());
      }
    }
  }
}

TEST(BuildSets, ShapeMismatchIsDataError) {
  const ScoreTable t{{0}, 3, {0.1, 0.5, 0.9}, "tps", false};
  const CalibrationResult c{0.1, CalibrationResult::Kind::per_class, {0.5, 0.5}, {1, 1}, {}};
  EXPECT_THROW(build_sets(t, c), DataError);
}

TEST(IncorrectLabels, BinaryIsForced) {
  const LabelVector labels({0, 1, 1, 0}, 2);
  const std::vector<NodeId> nodes{0, 1, 2, 3};
  const auto wrong = sample_incorrect_labels(nodes, labels, 2, RandomPolicy(3));
  EXPECT_EQ(wrong, (std::vector<Label>{1, 0, 0, 1}));
}

TEST(IncorrectLabels, UniformOverWrongLabels) {
  const LabelVector labels({4}, 10);
  const std::vector<NodeId> nodes{0};
  std::vector<int> counts(10, 0);
  constexpr int kDraws = 100'000;
  for (int seed = 0; seed < kDraws; ++seed) ++counts[sample_incorrect_labels(nodes, labels, 10, RandomPolicy(seed))[0]];
  EXPECT_EQ(counts[4], 0);
  for (int c = 0; c < 10; ++c) {
    if (c != 4) {
      EXPECT_NEAR(counts[c] / static_cast<double>(kDraws), 1.0 / 9.0, 0.005);
    }
  }
}

TEST(AlphaC, CountFormula) {
  const std::vector<double> inc{0.95, 0.96, 0.97, 0.98, 0.1, 0.2, 0.3, 0.4, 0.5};
  EXPECT_DOUBLE_EQ(alpha_c(inc, 0.9), 0.5);
  EXPECT_DOUBLE_EQ(alpha_c(inc, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(alpha_c(inc, 1.0), 0.1);
}

TEST(MiscoverageBounds, CountsOverNPlusOne) {
  const auto b = miscoverage_bounds(std::vector<double>{0.1, 0.5, 0.9, 0.7}, 0.6);
  EXPECT_DOUBLE_EQ(b.lower, 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(b.upper, 3.0 / 5.0);
}

namespace {

// n = 9 rows, K = 2, so the incorrect label is forced. True-label scores
// 0.1..0.9 give q_hat = 0.5 at alpha = 0.5.
ScoreTable binary_table(const std::vector<double>& incorrect) {
  ScoreTable t{{}, 2, {}, "x", false};
  for (NodeId v = 0; v < 9; ++v) {
    t.node_ids.push_back(v);
    t.values.push_back(0.1 * (v + 1));
    t.values.push_back(incorrect[v]);
  }
  return t;
}

}  // namespace

TEST(CompareEfficiency, ConditionAtExactMargin) {
  const LabelVector labels(std::vector<Label>(9, 0), 2);
  const auto a = binary_table({0.6, 0.7, 0.8, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1});
  const auto at = binary_table({0.6, 0.7, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  const auto r = compare_efficiency(a, at, labels, 0.5, RandomPolicy(0));
  EXPECT_DOUBLE_EQ(r.q_A, 0.5);
  EXPECT_DOUBLE_EQ(r.alpha_c_A, 0.5);
  EXPECT_DOUBLE_EQ(r.alpha_c_Atilde, 0.3);
  EXPECT_DOUBLE_EQ(r.margin, 0.2);
  EXPECT_TRUE(r.condition_met);
  EXPECT_NEAR(r.asymptotic_gain, 0.2, 1e-15);
  EXPECT_EQ(r.n, 9U);
  EXPECT_EQ(r.num_classes, 2U);
  const auto one_short = binary_table({0.6, 0.7, 0.8, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  EXPECT_FALSE(compare_efficiency(one_short, at, labels, 0.5, RandomPolicy(0)).condition_met);
}

TEST(CompareEfficiency, GainScalesWithClasses) {
  // K = 40 and an alpha_c gap of 0.2: (K - 1) * 0.2.
  EXPECT_NEAR(39 * 0.2, 7.8, 1e-12);
  ScoreTable a{{}, 40, {}, "x", false};
  ScoreTable at{{}, 40, {}, "x", false};
  std::vector<Label> y;
  for (NodeId v = 0; v < 9; ++v) {
    a.node_ids.push_back(v);
    at.node_ids.push_back(v);
    y.push_back(0);
    for (std::size_t c = 0; c < 40; ++c) {
      a.values.push_back(c == 0 ? 0.1 * (v + 1) : (v < 4 ? 0.95 : 0.05));
      at.values.push_back(c == 0 ? 0.1 * (v + 1) : (v < 2 ? 0.95 : 0.05));
    }
  }
  const auto r = compare_efficiency(a, at, LabelVector(y, 40), 0.5, RandomPolicy(0));
  EXPECT_TRUE(r.condition_met);
  EXPECT_NEAR(r.asymptotic_gain, 7.8, 1e-12);
}

TEST(CompareEfficiency, IdenticalTablesGiveNoGain) {
  const LabelVector labels(std::vector<Label>(9, 0), 2);
  const auto a = binary_table({0.6, 0.7, 0.8, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1});
  const auto r = compare_efficiency(a, a, labels, 0.5, RandomPolicy(0));
  EXPECT_EQ(r.alpha_c_A, r.alpha_c_Atilde);
  EXPECT_FALSE(r.condition_met);
  EXPECT_EQ(r.asymptotic_gain, 0.0);
}

TEST(PredictionSets, MeanSizeDifference) {
  PredictionSets a({0, 1}, 3);
  PredictionSets b({0, 1}, 3);
  a.insert(0, 0);
  b.insert(0, 0);
  b.insert(0, 1);
  b.insert(1, 2);
  EXPECT_DOUBLE_EQ(mean_set_size_difference(a, b), 1.0);
}

TEST(PredictionSets, WideLabelSpaces) {
  PredictionSets s({7}, 130);
  s.insert(0, 0);
  s.insert(0, 64);
  s.insert(0, 129);
  EXPECT_EQ(s.set_size(0), 3U);
  EXPECT_TRUE(s.contains(0, 129));
  EXPECT_FALSE(s.contains(0, 128));
  EXPECT_EQ(s.labels_of(0), (std::vector<Label>{0, 64, 129}));
}
