#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "graphcp/conformal.hpp"
#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"
#include "graphcp/graph.hpp"
#include "graphcp/io.hpp"
#include "graphcp/random.hpp"
#include "graphcp/scores.hpp"

namespace graphcp::cfgnn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Activation : std::uint32_t { relu = 0, elu = 1 };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "elu"; }
inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "elu") return Activation::elu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

/// Score used inside the training loss.
enum class LossScore { tps, aps, aps_randomized };

inline std::string_view to_string(LossScore s) {
  switch (s) {
    case LossScore::tps: return "tps";
    case LossScore::aps: return "aps";
    case LossScore::aps_randomized: return "aps_randomized";
  }
  return "unknown";
}
inline LossScore parse_loss_score(std::string_view s) {
  for (auto x : {LossScore::tps, LossScore::aps, LossScore::aps_randomized}) {
    if (to_string(x) == s) return x;
  }
  throw ConfigError("unsupported CFGNN score '" + std::string(s) + "'");
}
inline ScoreMethod to_score_method(LossScore s) {
  switch (s) {
    case LossScore::tps: return ScoreMethod::tps;
    case LossScore::aps: return ScoreMethod::aps;
    case LossScore::aps_randomized: return ScoreMethod::aps_randomized;
  }
  return ScoreMethod::aps_randomized;
}

/// D^-1/2 (A + I) D^-1/2 with D the degree of A + I.
struct NormalizedAdjacency {
  SparseOperator op;
};

inline NormalizedAdjacency normalize_adjacency(const Graph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  std::vector<double> inv_sqrt(graph.num_nodes());
  for (NodeId v = 0; v < graph.num_nodes(); ++v) inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(graph.degree(v) + 1));
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(graph.num_arcs() + graph.num_nodes());
  for (NodeId u = 0; u < graph.num_nodes(); ++u) {
    triplets.emplace_back(u, u, inv_sqrt[u] * inv_sqrt[u]);
    for (NodeId v : graph.neighbors(u)) triplets.emplace_back(u, v, inv_sqrt[u] * inv_sqrt[v]);
  }
  NormalizedAdjacency adj{SparseOperator(n, n)};
  adj.op.setFromTriplets(triplets.begin(), triplets.end());
  return adj;
}

struct CfgnnModel {
  std::vector<Matrix> weights;
  Activation activation = Activation::relu;
  double tau = 1.0;

  [[nodiscard]] std::size_t num_layers() const noexcept { return weights.size(); }
  [[nodiscard]] std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    return n;
  }
  friend bool operator==(const CfgnnModel& a, const CfgnnModel& b) {
    if (a.activation != b.activation || a.tau != b.tau || a.weights.size() != b.weights.size()) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l].rows() != b.weights[l].rows() || a.weights[l].cols() != b.weights[l].cols() ||
          a.weights[l] != b.weights[l]) {
        return false;
      }
    }
    return true;
  }
};

struct Architecture {
  std::size_t hidden = 64;
  std::size_t layers = 2;
  Activation activation = Activation::relu;
  double tau = 1.0;
};

/// Glorot-uniform weights from the cfgnn-init stream. Input and output width are K.
inline CfgnnModel init_model(std::size_t num_classes, const Architecture& arch, const RandomPolicy& policy) {
  if (arch.layers < 1) throw ConfigError("CFGNN needs at least one layer");
  if (arch.layers > 1 && arch.hidden < 1) throw ConfigError("CFGNN hidden width must be >= 1");
  if (!(arch.tau > 0.0)) throw ConfigError("CFGNN temperature must be positive");
  CfgnnModel model{{}, arch.activation, arch.tau};
  for (std::size_t l = 0; l < arch.layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? num_classes : arch.hidden);
    const auto out = static_cast<Eigen::Index>(l + 1 == arch.layers ? num_classes : arch.hidden);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = limit * (2.0 * uniform_unit(policy, Purpose::cfgnn_init, l, static_cast<std::uint64_t>(i)) - 1.0);
    }
    model.weights.push_back(std::move(w));
  }
  return model;
}

inline Matrix to_matrix(const ProbabilityMatrix& p) {
  Matrix m(static_cast<Eigen::Index>(p.num_nodes()), static_cast<Eigen::Index>(p.num_classes()));
  std::copy(p.values().begin(), p.values().end(), m.data());
  return m;
}

inline ProbabilityMatrix to_probabilities(const Matrix& m) {
  return {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
          std::vector<double>(m.data(), m.data() + m.size())};
}

/// Intermediate values kept for backpropagation.
struct ForwardCache {
  std::vector<Matrix> propagated;      // A_hat * H_l
  std::vector<Matrix> preactivations;  // A_hat * H_l * W_l
  Matrix probabilities;                // row softmax of the last preactivation
};

inline void softmax_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

inline ForwardCache forward_cached(const CfgnnModel& model, const NormalizedAdjacency& adj, const Matrix& inputs) {
  if (model.weights.empty() || model.weights.front().rows() != inputs.cols() ||
      model.weights.back().cols() != inputs.cols() || adj.op.rows() != inputs.rows()) {
    throw DataError("CFGNN forward: shape mismatch");
  }
  ForwardCache cache;
  Matrix hidden = inputs;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    cache.propagated.push_back(adj.op * hidden);
    cache.preactivations.push_back(cache.propagated.back() * model.weights[l]);
    if (l + 1 < model.weights.size()) {
      hidden = cache.preactivations.back();
      if (model.activation == Activation::relu) {
        hidden = hidden.cwiseMax(0.0);
      } else {
        hidden = hidden.unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
      }
    }
  }
  cache.probabilities = cache.preactivations.back();
  softmax_rows(cache.probabilities);
  return cache;
}

/// Corrected probabilities softmax(GCN(cached base probabilities)).
inline ProbabilityMatrix forward(const CfgnnModel& model, const NormalizedAdjacency& adj,
                                 const ProbabilityMatrix& cached_probs) {
  return to_probabilities(forward_cached(model, adj, to_matrix(cached_probs)).probabilities);
}

struct QuantileSelection {
  double value = 0.0;
  /// Position of the selected element; the (sub)gradient is one-hot here.
  std::size_t index = 0;

  [[nodiscard]] std::vector<double> gradient(std::size_t n) const {
    std::vector<double> g(n, 0.0);
    g[index] = 1.0;
    return g;
  }
};

/// The ceil(level * n)-th order statistic with its selecting index. Levels
/// above 1 clamp to 1; ties resolve to the lowest index holding the value.
inline QuantileSelection smooth_quantile(std::span<const double> scores, double level) {
  if (scores.empty()) throw DataError("smooth_quantile of an empty score set");
  level = std::min(level, 1.0);
  if (!(level > 0.0)) throw ConfigError("smooth_quantile level must lie in (0, 1]");
  const double x = level * static_cast<double>(scores.size());
  auto rank = static_cast<std::size_t>(std::ceil(x - kRankSlack * x));
  rank = std::clamp<std::size_t>(rank, 1, scores.size());
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  const double value = sorted[rank - 1];
  const auto it = std::find(scores.begin(), scores.end(), value);
  return {value, static_cast<std::size_t>(it - scores.begin())};
}

struct BatchLoss {
  double loss = 0.0;
  /// dL / d(corrected probability), one row per batch row.
  Matrix grad_probs;
  double eta = 0.0;
  /// Batch row whose true-label score is eta.
  std::size_t quantile_index = 0;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Smooth inefficiency over a batch of corrected rows:
/// (1/|B|) sum_i sum_k sigmoid((eta - s(i, k)) / tau), eta the conformal
/// order statistic of the true-label scores at level (1 - alpha)(1 + 1/|B|).
/// Sort permutations and the quantile index are held fixed for the gradient.
inline BatchLoss inefficiency_loss(const Matrix& corrected, std::span<const Label> batch_labels, double alpha,
                                   double tau, LossScore score, std::span<const double> u) {
  const auto b = static_cast<std::size_t>(corrected.rows());
  const auto k = static_cast<std::size_t>(corrected.cols());
  if (b < 2) throw DataError("inefficiency loss needs a batch of at least 2");
  if (batch_labels.size() != b || u.size() != b) throw DataError("inefficiency loss: batch inputs misaligned");

  Matrix scores(corrected.rows(), corrected.cols());
  std::vector<std::vector<std::uint32_t>> orders(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (score == LossScore::tps) {
      scores.row(ii) = (1.0 - corrected.row(ii).array()).matrix();
      continue;
    }
    auto& order = orders[i];
    order.resize(k);
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t c) { return corrected(ii, a) > corrected(ii, c); });
    const double ui = score == LossScore::aps_randomized ? u[i] : 0.0;
    double cumulative = 0.0;
    for (auto c : order) {
      cumulative += corrected(ii, c);
      scores(ii, c) = cumulative - ui * corrected(ii, c);
    }
  }

  std::vector<double> true_scores(b);
  for (std::size_t i = 0; i < b; ++i) true_scores[i] = scores(static_cast<Eigen::Index>(i), batch_labels[i]);
  const double level = (1.0 - alpha) * (1.0 + 1.0 / static_cast<double>(b));
  const auto q = smooth_quantile(true_scores, level);

  BatchLoss out;
  out.eta = q.value;
  out.quantile_index = q.index;
  Matrix grad_scores(corrected.rows(), corrected.cols());
  const double inv_b = 1.0 / static_cast<double>(b);
  double grad_eta = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      const double s = sigmoid((q.value - scores(i, c)) / tau);
      out.loss += inv_b * s;
      const double d = inv_b * s * (1.0 - s) / tau;
      grad_scores(i, c) = -d;
      grad_eta += d;
    }
  }
  grad_scores(static_cast<Eigen::Index>(q.index), batch_labels[q.index]) += grad_eta;

  out.grad_probs = Matrix::Zero(corrected.rows(), corrected.cols());
  for (std::size_t i = 0; i < b; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (score == LossScore::tps) {
      out.grad_probs.row(ii) = -grad_scores.row(ii);
      continue;
    }
    // d s(k) / d p(j) = 1[rank(j) <= rank(k)] - u 1[j == k]
    const double ui = score == LossScore::aps_randomized ? u[i] : 0.0;
    double suffix = 0.0;
    for (std::size_t r = k; r-- > 0;) {
      const auto c = static_cast<Eigen::Index>(orders[i][r]);
      suffix += grad_scores(ii, c);
      out.grad_probs(ii, c) = suffix - ui * grad_scores(ii, c);
    }
  }
  return out;
}

struct ModelLoss {
  double loss = 0.0;
  std::vector<Matrix> gradients;
};

/// Loss on `batch` and its gradient with respect to every weight matrix.
/// `inputs` is the cached base probability matrix.
inline ModelLoss loss_and_gradients(const CfgnnModel& model, const NormalizedAdjacency& adj, const Matrix& inputs,
                                    std::span<const NodeId> batch, const LabelVector& labels, double alpha,
                                    LossScore score, std::span<const double> u) {
  const auto cache = forward_cached(model, adj, inputs);
  const auto& probs = cache.probabilities;
  Matrix batch_probs(static_cast<Eigen::Index>(batch.size()), probs.cols());
  std::vector<Label> batch_labels(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch_probs.row(static_cast<Eigen::Index>(i)) = probs.row(batch[i]);
    batch_labels[i] = labels[batch[i]];
  }
  const auto batch_loss = inefficiency_loss(batch_probs, batch_labels, alpha, model.tau, score, u);

  // Softmax backward, scattered to full-graph rows.
  Matrix grad = Matrix::Zero(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto gi = batch_loss.grad_probs.row(static_cast<Eigen::Index>(i));
    const auto pi = probs.row(batch[i]);
    const double dot = gi.dot(pi);
    grad.row(batch[i]) += (pi.array() * (gi.array() - dot)).matrix();
  }

  ModelLoss out{batch_loss.loss, std::vector<Matrix>(model.weights.size())};
  for (std::size_t l = model.weights.size(); l-- > 0;) {
    out.gradients[l] = cache.propagated[l].transpose() * grad;
    if (l == 0) break;
    Matrix grad_hidden = adj.op.transpose() * (grad * model.weights[l].transpose());
    const auto& z = cache.preactivations[l - 1];
    if (model.activation == Activation::relu) {
      grad = grad_hidden.cwiseProduct(z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; }));
    } else {
      grad = grad_hidden.cwiseProduct(z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); }));
    }
  }
  return out;
}

struct TrainConfig {
  double alpha = 0.1;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  double cor_cal_fraction = 0.5;
  LossScore train_score = LossScore::aps_randomized;
  LossScore eval_score = LossScore::aps_randomized;
  Architecture architecture{};
  /// One unshuffled batch holding all of V_cor-cal per epoch.
  bool full_batch = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double validation_efficiency = 0.0;
};

struct CalibrationHalves {
  std::vector<NodeId> cor_cal;
  std::vector<NodeId> cor_test;
};

inline constexpr std::uint64_t kCorrectionSplitKey = 3;

/// Shuffles the calibration nodes with the split stream and cuts them into
/// a training half (V_cor-cal) and a held-out half (V_cor-test).
inline CalibrationHalves split_calibration(std::span<const NodeId> calib, double fraction, const RandomPolicy& policy) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("cor_cal_fraction must lie in (0, 1)");
  std::vector<NodeId> order(calib.begin(), calib.end());
  Stream(policy, Purpose::split, kCorrectionSplitKey).shuffle(std::span(order));
  const auto n_cal = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(order.size())));
  if (n_cal < 2 || order.size() - n_cal < 2) {
    throw DataError("calibration set of " + std::to_string(calib.size()) + " nodes is too small to split");
  }
  return {{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_cal)},
          {order.begin() + static_cast<std::ptrdiff_t>(n_cal), order.end()}};
}

/// Conformal sets for `targets`, calibrated on `calib_nodes`, from a
/// corrected probability matrix.
inline std::pair<CalibrationResult, PredictionSets> conformal_sets(const ProbabilityMatrix& corrected,
                                                                   const LabelVector& labels,
                                                                   std::span<const NodeId> calib_nodes,
                                                                   std::span<const NodeId> targets, LossScore score,
                                                                   double alpha, const RandomPolicy& policy) {
  const auto method = to_score_method(score);
  const auto calib_table = compute_scores(method, corrected, nullptr, calib_nodes, {}, policy);
  auto calibration = calibrate(calib_table, labels, alpha, false);
  const auto target_table = compute_scores(method, corrected, nullptr, targets, {}, policy);
  auto sets = build_sets(target_table, calibration);
  return {std::move(calibration), std::move(sets)};
}

/// Hard inefficiency on V_cor-test: threshold and mean set size both on V_cor-test.
inline double validation_efficiency(const CfgnnModel& model, const NormalizedAdjacency& adj, const Matrix& inputs,
                                    const LabelVector& labels, std::span<const NodeId> cor_test, LossScore score,
                                    double alpha, const RandomPolicy& policy) {
  const auto corrected = to_probabilities(forward_cached(model, adj, inputs).probabilities);
  const auto [calibration, sets] = conformal_sets(corrected, labels, cor_test, cor_test, score, alpha, policy);
  std::size_t total = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) total += sets.set_size(i);
  return static_cast<double>(total) / static_cast<double>(sets.size());
}

struct TrainResult {
  CfgnnModel model;
  std::vector<EpochLog> log;
  CalibrationHalves halves;
  std::size_t best_epoch = 0;
};

inline std::vector<double> loss_u(std::span<const NodeId> batch, const RandomPolicy& policy, std::size_t epoch) {
  std::vector<double> u(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) u[i] = uniform_unit(policy, Purpose::cfgnn_batch, batch[i], epoch);
  return u;
}

/// Mini-batch gradient descent on V_cor-cal. Returns the weights with the
/// best V_cor-test efficiency seen after any epoch (epoch 0 included).
inline TrainResult train(const Graph& graph, const ProbabilityMatrix& cached_probs, const LabelVector& labels,
                         std::span<const NodeId> calib_nodes, const TrainConfig& config, const RandomPolicy& policy) {
  check_alpha(config.alpha);
  if (config.batch_size < 2) throw ConfigError("CFGNN batch_size must be >= 2");
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (calib_nodes.size() < 4) throw DataError("CFGNN needs at least 4 calibration nodes");

  TrainResult result;
  result.halves = split_calibration(calib_nodes, config.cor_cal_fraction, policy);
  const auto& cor_cal = result.halves.cor_cal;
  const auto& cor_test = result.halves.cor_test;
  const auto adj = normalize_adjacency(graph);
  const Matrix inputs = to_matrix(cached_probs);

  CfgnnModel model = init_model(cached_probs.num_classes(), config.architecture, policy);
  double best = validation_efficiency(model, adj, inputs, labels, cor_test, config.eval_score, config.alpha, policy);
  {
    const auto u0 = loss_u(cor_cal, policy, 0);
    const auto initial = loss_and_gradients(model, adj, inputs, cor_cal, labels, config.alpha, config.train_score, u0);
    result.log.push_back({0, initial.loss, best});
  }
  result.model = model;

  std::vector<NodeId> order(cor_cal.begin(), cor_cal.end());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::size_t batch_size = config.batch_size;
    if (config.full_batch) {
      batch_size = order.size();
    } else {
      std::copy(cor_cal.begin(), cor_cal.end(), order.begin());
      Stream(policy, Purpose::cfgnn_batch, (std::uint64_t{1} << 40) + epoch).shuffle(std::span(order));
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();) {
      std::size_t end = std::min(order.size(), start + batch_size);
      if (order.size() - end == 1) end = order.size();  // no trailing singleton batch
      const auto batch = std::span<const NodeId>(order).subspan(start, end - start);
      const auto u = loss_u(batch, policy, epoch);
      const auto step = loss_and_gradients(model, adj, inputs, batch, labels, config.alpha, config.train_score, u);
      for (std::size_t l = 0; l < model.weights.size(); ++l) model.weights[l] -= config.learning_rate * step.gradients[l];
      loss_sum += step.loss;
      ++batches;
      start = end;
    }
    const double eff = validation_efficiency(model, adj, inputs, labels, cor_test, config.eval_score, config.alpha, policy);
    result.log.push_back({epoch, loss_sum / static_cast<double>(batches), eff});
    for (const auto& w : model.weights) {
      if (!w.allFinite()) throw NumericError("CFGNN weights diverged at epoch " + std::to_string(epoch));
    }
    if (eff < best) {
      best = eff;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

struct CfgnnPrediction {
  ProbabilityMatrix corrected;
  CalibrationResult calibration;
  PredictionSets sets;
};

/// Corrected probabilities, eval-score quantile on V_cor-test, sets on split.test.
inline CfgnnPrediction cfgnn_predict(const CfgnnModel& model, const Graph& graph, const ProbabilityMatrix& cached_probs,
                                     const LabelVector& labels, const SplitAssignment& split, LossScore eval_score,
                                     double alpha, const RandomPolicy& policy, double cor_cal_fraction = 0.5) {
  if (!split.usable_for_conformal()) throw DataError("CFGNN prediction needs nonempty calib and test sets");
  const auto halves = split_calibration(split.calib, cor_cal_fraction, policy);
  auto corrected = forward(model, normalize_adjacency(graph), cached_probs);
  auto [calibration, sets] = conformal_sets(corrected, labels, halves.cor_test, split.test, eval_score, alpha, policy);
  return {std::move(corrected), std::move(calibration), std::move(sets)};
}

// ---------------------------------------------------------------------------
// Model file: u32 layers, u32 activation, f64 tau, then per layer u32 rows,
// u32 cols and rows*cols f64 weights in row-major order. Little-endian.

inline void save_model(std::ostream& out, const CfgnnModel& model) {
  auto put64 = [&](std::uint64_t x) {
    detail::write_u32_le(out, static_cast<std::uint32_t>(x & 0xFFFFFFFFU));
    detail::write_u32_le(out, static_cast<std::uint32_t>(x >> 32));
  };
  detail::write_u32_le(out, static_cast<std::uint32_t>(model.weights.size()));
  detail::write_u32_le(out, static_cast<std::uint32_t>(model.activation));
  put64(std::bit_cast<std::uint64_t>(model.tau));
  for (const auto& w : model.weights) {
    detail::write_u32_le(out, static_cast<std::uint32_t>(w.rows()));
    detail::write_u32_le(out, static_cast<std::uint32_t>(w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) put64(std::bit_cast<std::uint64_t>(w.data()[i]));
  }
}

inline CfgnnModel load_model(std::istream& in) {
  auto get64 = [&] {
    const std::uint64_t lo = detail::read_u32_le(in);
    const std::uint64_t hi = detail::read_u32_le(in);
    return lo | (hi << 32);
  };
  CfgnnModel model;
  const auto layers = detail::read_u32_le(in);
  const auto act = detail::read_u32_le(in);
  if (act > 1) throw DataError("model file: unknown activation");
  model.activation = static_cast<Activation>(act);
  model.tau = std::bit_cast<double>(get64());
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto rows = detail::read_u32_le(in);
    const auto cols = detail::read_u32_le(in);
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std::bit_cast<double>(get64());
    model.weights.push_back(std::move(w));
  }
  for (std::size_t l = 1; l < model.weights.size(); ++l) {
    if (model.weights[l].rows() != model.weights[l - 1].cols()) throw DataError("model file: inconsistent layer shapes");
  }
  return model;
}

inline void save_model_file(const std::string& path, const CfgnnModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model '" + path + "'");
  save_model(out, model);
}

inline CfgnnModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path + "'");
  return load_model(in);
}

inline void write_training_log(std::ostream& out, std::span<const EpochLog> log) {
  out << "epoch,loss,validation_efficiency\n" << std::setprecision(10);
  for (const auto& e : log) out << e.epoch << ',' << e.loss << ',' << e.validation_efficiency << '\n';
}

}  // namespace graphcp::cfgnn
