#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "graphcp/cfgnn.hpp"
#include "graphcp/io.hpp"
#include "graphcp/metrics.hpp"
#include "graphcp/partition.hpp"
#include "graphcp/synth.hpp"
#include "support/gradient_check.hpp"

using namespace graphcp;
using namespace graphcp::cfgnn;

namespace {

struct Fixture {
  SbmGraph sbm;
  ProbabilityMatrix probs;
  SplitAssignment split;
};

Fixture make_fixture(std::size_t n, std::size_t k, std::uint64_t seed) {
  const RandomPolicy policy(seed);
  auto sbm = generate_sbm(n, k, 0.1, 0.01, policy);
  auto probs = corrupted_probabilities(sbm.labels, 0.7, 0.3, policy);
  auto split = full_split(n, {0.2, 0.1, 0.35, 0.35}, std::nullopt, policy);
  return {std::move(sbm), std::move(probs), std::move(split)};
}

}  // namespace

TEST(Forward, IdentityArchitectureIsSoftmaxOfInputs) {
  const auto g = Graph::from_edges(3, std::vector<Edge>{}, true);
  const ProbabilityMatrix probs(3, 3, {0.7, 0.2, 0.1, 0.1, 0.1, 0.8, 1.0 / 3, 1.0 / 3, 1.0 / 3});
  CfgnnModel model{{Matrix::Identity(3, 3)}, Activation::relu, 1.0};
  const auto out = forward(model, normalize_adjacency(g), probs);
  for (NodeId v = 0; v < 3; ++v) {
    double z = 0.0;
    for (double p : probs.row(v)) z += std::exp(p);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(v, c), std::exp(probs.at(v, c)) / z, 1e-15);
  }
}

TEST(Forward, RowsSumToOne) {
  const auto f = make_fixture(80, 4, 1);
  for (auto act : {Activation::relu, Activation::elu}) {
    const auto model = init_model(4, {16, 3, act, 1.0}, RandomPolicy(2));
    const auto out = forward(model, normalize_adjacency(f.sbm.graph), f.probs);
    for (NodeId v = 0; v < 80; ++v) {
      double s = 0.0;
      for (double p : out.row(v)) s += p;
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Forward, PermutationEquivariant) {
  const auto f = make_fixture(60, 3, 3);
  const std::size_t n = 60;
  std::vector<NodeId> sigma(n);
  std::iota(sigma.begin(), sigma.end(), 0U);
  Stream(RandomPolicy(4), Purpose::split, 0).shuffle(std::span(sigma));
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v : f.sbm.graph.neighbors(u)) edges.push_back({sigma[u], sigma[v]});
  }
  const auto g2 = Graph::from_edges(n, edges, true);
  std::vector<double> values(n * 3);
  for (NodeId v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < 3; ++c) values[sigma[v] * 3 + c] = f.probs.at(v, c);
  }
  const ProbabilityMatrix p2(n, 3, values);
  const auto model = init_model(3, {8, 2, Activation::relu, 1.0}, RandomPolicy(5));
  const auto a = forward(model, normalize_adjacency(f.sbm.graph), f.probs);
  const auto b = forward(model, normalize_adjacency(g2), p2);
  for (NodeId v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(b.at(sigma[v], c), a.at(v, c), 1e-12);
  }
}

TEST(SmoothQuantile, OrderStatisticAndGradient) {
  const std::vector<double> s{0.1, 0.5, 0.9};
  const auto q = smooth_quantile(s, 2.0 / 3.0);
  EXPECT_EQ(q.value, 0.5);
  EXPECT_EQ(q.gradient(3), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(smooth_quantile(s, 1.0).value, 0.9);
  EXPECT_EQ(smooth_quantile(s, 1.3).value, 0.9);
  EXPECT_THROW(smooth_quantile(s, 0.0), ConfigError);
}

TEST(SmoothQuantile, TiesResolveToLowestIndex) {
  const std::vector<double> s{0.4, 0.2, 0.4, 0.4};
  EXPECT_EQ(smooth_quantile(s, 0.75).index, 0U);
}

TEST(SmoothQuantile, GradientMatchesFiniteDifferences) {
  Stream st(RandomPolicy(6), Purpose::synth, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + st.next_below(30);
    std::vector<double> s(n);
    for (auto& x : s) x = st.next_unit();
    const double level = 0.05 + 0.95 * st.next_unit();
    const auto g = smooth_quantile(s, level).gradient(n);
    constexpr double h = 1e-9;
    for (std::size_t i = 0; i < n; ++i) {
      auto up = s;
      auto down = s;
      up[i] += h;
      down[i] -= h;
      const double fd = (smooth_quantile(up, level).value - smooth_quantile(down, level).value) / (2 * h);
      ASSERT_NEAR(fd, g[i], 1e-6);
    }
  }
}

TEST(InefficiencyLoss, EqualScoresGiveHalfK) {
  const Matrix uniform = Matrix::Constant(5, 4, 0.25);
  const std::vector<Label> y{0, 1, 2, 3, 0};
  const std::vector<double> u(5, 0.3);
  const auto r = inefficiency_loss(uniform, y, 0.1, 0.7, LossScore::tps, u);
  EXPECT_NEAR(r.loss, 2.0, 1e-12);
}

TEST(InefficiencyLoss, SharpTemperatureApproachesHardSetSize) {
  Stream st(RandomPolicy(7), Purpose::synth, 0);
  for (auto score : {LossScore::tps, LossScore::aps, LossScore::aps_randomized}) {
    const std::size_t b = 40;
    const std::size_t k = 6;
    Matrix p(b, k);
    std::vector<Label> y(b);
    std::vector<double> u(b);
    for (std::size_t i = 0; i < b; ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) total += p(i, c) = -std::log1p(-st.next_unit());
      p.row(i) /= total;
      y[i] = static_cast<Label>(st.next_below(k));
      u[i] = st.next_unit();
    }
    const auto r = inefficiency_loss(p, y, 0.1, 1e-9, score, u);
    // Hard set size under the same scores and threshold.
    double hard = 0.0;
    std::size_t at_eta = 0;
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<std::size_t> order(k);
      std::iota(order.begin(), order.end(), 0U);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto c) { return p(i, a) > p(i, c); });
      double cum = 0.0;
      for (auto c : order) {
        cum += p(i, c);
        double s = score == LossScore::tps ? 1.0 - p(i, c)
                                           : cum - (score == LossScore::aps_randomized ? u[i] : 0.0) * p(i, c);
        if (s <= r.eta) hard += 1.0;
        if (std::abs(s - r.eta) <= 1e-12) ++at_eta;  // ties up to rounding
      }
    }
    hard /= static_cast<double>(b);
    EXPECT_NEAR(r.loss, hard, 0.5 * static_cast<double>(at_eta) / static_cast<double>(b) + 1e-6);
  }
}

TEST(LossGradients, MatchFiniteDifferences) {
  const auto f = make_fixture(40, 4, 8);
  const auto adj = normalize_adjacency(f.sbm.graph);
  const Matrix inputs = to_matrix(f.probs);
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40 && checked < 10; ++seed) {
    for (auto score : {LossScore::tps, LossScore::aps, LossScore::aps_randomized}) {
      const auto model = init_model(4, {6, 2, seed % 2 ? Activation::elu : Activation::relu, 0.5}, RandomPolicy(seed));
      std::vector<NodeId> batch(f.split.calib.begin(), f.split.calib.begin() + 10);
      const auto u = loss_u(batch, RandomPolicy(seed), 1);
      const auto check = gradcheck::check_gradient(model, adj, inputs, batch, f.sbm.labels, 0.2, score, u);
      if (check.degenerate) continue;
      EXPECT_LT(check.relative_error, 1e-4);
      ++checked;
    }
  }
  EXPECT_GE(checked, 10);
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
  const auto f = make_fixture(100, 3, 9);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.architecture = {8, 2, Activation::relu, 1.0};
  const auto r = train(f.sbm.graph, f.probs, f.sbm.labels, f.split.calib, cfg, RandomPolicy(9));
  EXPECT_EQ(r.model, init_model(3, cfg.architecture, RandomPolicy(9)));
  ASSERT_EQ(r.log.size(), 1U);
  EXPECT_EQ(r.log[0].epoch, 0U);
}

TEST(Train, FullBatchMatchesOneBigMiniBatch) {
  const auto f = make_fixture(200, 4, 10);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 0.05;
  cfg.architecture = {8, 2, Activation::relu, 0.5};
  const auto halves = split_calibration(f.split.calib, cfg.cor_cal_fraction, RandomPolicy(10));
  cfg.batch_size = halves.cor_cal.size();
  const auto mini = train(f.sbm.graph, f.probs, f.sbm.labels, f.split.calib, cfg, RandomPolicy(10));
  cfg.full_batch = true;
  const auto full = train(f.sbm.graph, f.probs, f.sbm.labels, f.split.calib, cfg, RandomPolicy(10));
  ASSERT_EQ(mini.log.size(), full.log.size());
  for (std::size_t e = 0; e < mini.log.size(); ++e) EXPECT_NEAR(mini.log[e].loss, full.log[e].loss, 1e-6);
}

TEST(Train, CachedProbabilitiesGiveIdenticalModels) {
  const auto f = make_fixture(120, 3, 11);
  std::stringstream buf;
  write_probabilities_csv(buf, f.probs);
  const auto reloaded = read_probabilities_csv(buf);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.architecture = {8, 2, Activation::relu, 1.0};
  const auto a = train(f.sbm.graph, f.probs, f.sbm.labels, f.split.calib, cfg, RandomPolicy(11));
  const auto b = train(f.sbm.graph, reloaded, f.sbm.labels, f.split.calib, cfg, RandomPolicy(11));
  EXPECT_EQ(a.model, b.model);
}

TEST(Train, RejectsTinyCalibration) {
  const auto f = make_fixture(50, 2, 12);
  const std::vector<NodeId> calib{0, 1, 2};
  EXPECT_THROW(train(f.sbm.graph, f.probs, f.sbm.labels, calib, {}, RandomPolicy(0)), DataError);
  EXPECT_THROW(split_calibration(std::vector<NodeId>{0, 1, 2, 3}, 0.2, RandomPolicy(0)), DataError);
  EXPECT_THROW(split_calibration(std::vector<NodeId>{0, 1, 2, 3}, 1.0, RandomPolicy(0)), ConfigError);
}

TEST(Model, SaveLoadRoundTrip) {
  const auto model = init_model(5, {7, 3, Activation::elu, 0.3}, RandomPolicy(13));
  std::stringstream buf;
  save_model(buf, model);
  EXPECT_EQ(load_model(buf), model);
  std::istringstream cut(buf.str().substr(0, 20));
  EXPECT_THROW(load_model(cut), DataError);
}

TEST(Predict, BinaryInstanceSetsAndCoverage) {
  const RandomPolicy policy(14);
  const auto sbm = generate_sbm(600, 2, 0.05, 0.01, policy);
  const auto data = oracle_probabilities(sbm.labels, 0.6, policy);
  const auto split = full_split(600, {0.0, 0.0, 0.5, 0.5}, std::nullopt, policy);
  const auto model = init_model(2, {8, 2, Activation::relu, 1.0}, policy);
  const auto r = cfgnn_predict(model, sbm.graph, data.probs, data.labels, split, LossScore::aps_randomized, 0.1, policy);
  EXPECT_EQ(r.sets.size(), split.test.size());
  for (std::size_t i = 0; i < r.sets.size(); ++i) EXPECT_LE(r.sets.set_size(i), 2U);
  EXPECT_GE(coverage(r.sets, data.labels), 0.85);
}

TEST(Predict, CoverageOverRepeatedSplits) {
  const RandomPolicy base(15);
  const auto sbm = generate_sbm(1000, 4, 0.03, 0.005, base);
  const auto data = oracle_probabilities(sbm.labels, 0.7, base);
  const auto model = init_model(4, {8, 2, Activation::relu, 1.0}, base);
  double total = 0.0;
  constexpr int kSplits = 40;
  for (int s = 0; s < kSplits; ++s) {
    const RandomPolicy policy(100 + s);
    const auto split = full_split(1000, {0.0, 0.0, 0.4, 0.6}, std::nullopt, policy);
    const auto r = cfgnn_predict(model, sbm.graph, data.probs, data.labels, split, LossScore::tps, 0.1, policy);
    total += coverage(r.sets, data.labels);
  }
  const double mean = total / kSplits;
  EXPECT_GE(mean, 0.9 - 0.02);
  EXPECT_LE(mean, 0.9 + 1.0 / 201 + 0.02);
}
