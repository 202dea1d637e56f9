#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <numeric>
#include <vector>

#include "graphcp/scores.hpp"
#include "graphcp/synth.hpp"

using namespace graphcp;

namespace {

ProbabilityMatrix single_row(std::vector<double> p) { return {1, p.size(), std::move(p)}; }

const std::vector<NodeId> kFirst{0};

ProbabilityMatrix random_probs(std::size_t n, std::size_t k, std::uint64_t seed) {
  const auto centers = LabelVector(std::vector<Label>(n, 0), k);
  return oracle_probabilities(centers, 0.9, RandomPolicy(seed)).probs;
}

Graph random_graph(std::size_t n, std::size_t m, std::uint64_t seed) {
  Stream s(RandomPolicy(seed), Purpose::synth, 1);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < m; ++i) {
    edges.push_back({static_cast<NodeId>(s.next_below(n)), static_cast<NodeId>(s.next_below(n))});
  }
  return Graph::from_edges(n, edges, true);
}

}  // namespace

TEST(Tps, HandValues) {
  const auto t = tps_scores(single_row({0.7, 0.2, 0.1}), kFirst);
  EXPECT_DOUBLE_EQ(t.at(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(t.at(0, 2), 0.9);
}

TEST(Tps, UniformRowsGiveOneMinusOneOverK) {
  const auto t = tps_scores(single_row(std::vector<double>(8, 0.125)), kFirst);
  for (std::size_t y = 0; y < 8; ++y) EXPECT_DOUBLE_EQ(t.at(0, y), 1.0 - 0.125);
}

TEST(Aps, DeterministicAndRandomizedHandValues) {
  const std::vector<double> p{0.5, 0.3, 0.2};
  const std::vector<std::uint32_t> order{0, 1, 2};
  std::vector<double> out(3);
  std::vector<std::size_t> rank(3);
  detail::aps_row(p, order, 0.0, out, rank);
  EXPECT_DOUBLE_EQ(out[1], 0.8);
  EXPECT_EQ(rank[1], 2U);
  detail::aps_row(p, order, 0.5, out, rank);
  EXPECT_DOUBLE_EQ(out[1], 0.8 - 0.5 * 0.3);
}

TEST(Aps, TableMatchesRowHelper) {
  const auto probs = single_row({0.2, 0.5, 0.3});
  const auto t = aps_scores(probs, kFirst, false, RandomPolicy(0));
  EXPECT_DOUBLE_EQ(t.at(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(t.at(0, 2), 0.8);
  EXPECT_DOUBLE_EQ(t.at(0, 0), 1.0);
  const RandomPolicy policy(4);
  const auto r = aps_scores(probs, kFirst, true, policy);
  const double u = uniform_unit(policy, Purpose::aps_u, 0);
  EXPECT_DOUBLE_EQ(r.at(0, 2), 0.8 - u * 0.3);
}

TEST(Aps, UnitURandomizedEqualsPreviousPrefix) {
  const auto probs = random_probs(200, 7, 1);
  const RandomPolicy policy(2);
  std::vector<double> rand_out(7);
  std::vector<double> det_out(7);
  std::vector<std::size_t> rank(7);
  for (NodeId v = 0; v < 200; ++v) {
    const auto row = probs.row(v);
    const auto order = descending_order(row, policy, v);
    detail::aps_row(row, order, 1.0, rand_out, rank);
    detail::aps_row(row, order, 0.0, det_out, rank);
    for (std::size_t y = 0; y < 7; ++y) {
      const double prefix = rank[y] == 1 ? 0.0 : det_out[order[rank[y] - 2]];
      ASSERT_NEAR(rand_out[y], prefix, 1e-12);
    }
  }
}

TEST(Aps, TiesBrokenReproducibly) {
  const auto probs = single_row({0.25, 0.25, 0.25, 0.25});
  const auto a = aps_scores(probs, kFirst, false, RandomPolicy(3));
  const auto b = aps_scores(probs, kFirst, false, RandomPolicy(3));
  EXPECT_EQ(a, b);
  std::vector<double> sorted(a.values);
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<double>{0.25, 0.5, 0.75, 1.0}));
}

TEST(Raps, PenaltyOnLiteralCount) {
  const auto probs = single_row({0.5, 0.3, 0.2});
  const RandomPolicy policy(6);
  const auto raps = raps_scores(probs, kFirst, {0.1, 1.0, false}, policy);
  const auto base = aps_scores(probs, kFirst, true, policy);
  const auto det = aps_scores(probs, kFirst, false, policy);
  // o = |{c : p_0 >= p_c}| = 3, penalty 0.1 * (3 - 1).
  EXPECT_NEAR(raps.at(0, 0) - base.at(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(det.at(0, 0) + 0.2, 0.7, 1e-15);
  // Least likely class: o = 1, no penalty.
  EXPECT_DOUBLE_EQ(raps.at(0, 2), base.at(0, 2));
}

TEST(Raps, RankPenaltyVariant) {
  const auto probs = single_row({0.5, 0.3, 0.2});
  const RandomPolicy policy(6);
  const auto raps = raps_scores(probs, kFirst, {0.1, 1.0, true}, policy);
  const auto base = aps_scores(probs, kFirst, true, policy);
  EXPECT_NEAR(raps.at(0, 2) - base.at(0, 2), 0.2, 1e-15);
  EXPECT_NEAR(raps.at(0, 0) - base.at(0, 0), 0.0, 1e-15);
}

TEST(Raps, ReducesToRandomizedAps) {
  const auto probs = random_probs(50, 5, 8);
  std::vector<NodeId> nodes(50);
  std::iota(nodes.begin(), nodes.end(), 0U);
  const RandomPolicy policy(9);
  const auto base = aps_scores(probs, nodes, true, policy);
  EXPECT_EQ(raps_scores(probs, nodes, {0.0, 1.0, false}, policy).values, base.values);
  EXPECT_EQ(raps_scores(probs, nodes, {0.5, 5.0, false}, policy).values, base.values);
  EXPECT_THROW(raps_scores(probs, nodes, {-1.0, 1.0, false}, policy), ConfigError);
}

TEST(Diffusion, HandValueAndIdentity) {
  const std::vector<Edge> edges{{0, 1}};
  const auto g = Graph::from_edges(2, edges, true);
  ScoreTable base{{0, 1}, 2, {0.4, 0.1, 0.8, 0.3}, "tps", false};
  const auto out = diffuse_scores(base, g, {0.5});
  EXPECT_DOUBLE_EQ(out.at(0, 0), 0.6);
  EXPECT_EQ(diffuse_scores(base, g, {0.0}).values, base.values);
  EXPECT_THROW(diffuse_scores(base, g, {1.5}), ConfigError);
}

TEST(Diffusion, IsolatedNodeKeepsScore) {
  const auto g = Graph::from_edges(3, std::vector<Edge>{{0, 1}}, true);
  ScoreTable base{{0, 1, 2}, 2, {0.1, 0.9, 0.3, 0.7, 0.42, 0.58}, "tps", false};
  const auto out = diffuse_scores(base, g, {0.7});
  EXPECT_DOUBLE_EQ(out.at(2, 0), 0.42);
}

TEST(Diffusion, MissingNeighborScoreIsDataError) {
  const auto g = Graph::from_edges(2, std::vector<Edge>{{0, 1}}, true);
  ScoreTable base{{0}, 2, {0.1, 0.9}, "tps", false};
  EXPECT_THROW(diffuse_scores(base, g, {0.5}), DataError);
}

// Dense oracle: ((1 - delta) I + delta D^-1 A) S, isolated rows left as identity.
TEST(Diffusion, MatchesDenseOperator) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Stream s(RandomPolicy(seed), Purpose::synth, 0);
    const std::size_t n = 2 + s.next_below(49);
    const std::size_t k = 2 + s.next_below(5);
    const double delta = s.next_unit();
    Graph g = seed == 0 ? Graph::from_edges(n, [&] {
      std::vector<Edge> star;
      for (NodeId v = 1; v < n; ++v) star.push_back({0, v});
      return star;
    }(), true)
                        : random_graph(n, s.next_below(3 * n), seed);
    const auto probs = random_probs(n, k, seed + 100);
    std::vector<NodeId> nodes(n);
    std::iota(nodes.begin(), nodes.end(), 0U);
    const auto base = tps_scores(probs, nodes);
    const auto out = diffuse_scores(base, g, {delta});

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (NodeId u = 0; u < n; ++u) {
      for (NodeId v : g.neighbors(u)) a(u, v) = 1.0;
    }
    Eigen::MatrixXd op = (1.0 - delta) * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    for (Eigen::Index u = 0; u < a.rows(); ++u) {
      const double d = a.row(u).sum();
      if (d == 0.0) op(u, u) = 1.0;
      else op.row(u) += delta * a.row(u) / d;
    }
    Eigen::MatrixXd sm(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t y = 0; y < k; ++y) sm(i, y) = base.at(i, y);
    }
    const Eigen::MatrixXd expected = op * sm;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t y = 0; y < k; ++y) ASSERT_NEAR(out.at(i, y), expected(i, y), 1e-12);
    }
  }
}

TEST(ComputeScores, DiffusedMethodsMatchFullDiffusion) {
  const auto g = random_graph(40, 80, 3);
  const auto probs = random_probs(40, 4, 4);
  std::vector<NodeId> all(40);
  std::iota(all.begin(), all.end(), 0U);
  const std::vector<NodeId> targets{3, 17, 25};
  const RandomPolicy policy(5);
  const auto daps = compute_scores(ScoreMethod::daps, probs, &g, targets, {}, policy);
  const auto full = diffuse_scores(aps_scores(probs, all, true, policy), g, {0.5}, targets);
  EXPECT_EQ(daps.values, full.values);
  const auto dtps = compute_scores(ScoreMethod::dtps, probs, &g, targets, {}, policy);
  EXPECT_EQ(dtps.values, diffuse_scores(tps_scores(probs, all), g, {0.5}, targets).values);
  EXPECT_THROW(compute_scores(ScoreMethod::daps, probs, nullptr, targets, {}, policy), ConfigError);
}

TEST(ScoreMethodNames, RoundTrip) {
  for (auto m : kAllScoreMethods) EXPECT_EQ(parse_score_method(to_string(m)), m);
  EXPECT_FALSE(parse_score_method("lac").has_value());
  EXPECT_TRUE(uses_classwise_quantiles(ScoreMethod::tps_classwise));
  EXPECT_TRUE(uses_classwise_quantiles(ScoreMethod::dtps));
  EXPECT_FALSE(uses_classwise_quantiles(ScoreMethod::aps));
}
