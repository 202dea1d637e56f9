#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "graphcp/conformal.hpp"
#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"
#include "graphcp/graph.hpp"
#include "graphcp/io.hpp"
#include "graphcp/metrics.hpp"
#include "graphcp/naps.hpp"
#include "graphcp/partition.hpp"
#include "graphcp/random.hpp"
#include "graphcp/scores.hpp"

namespace graphcp {

namespace detail {

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline nlohmann::json threshold_to_json(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline double threshold_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    throw DataError("threshold '" + s + "' is not a number");
  }
  return j.get<double>();
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace detail

/// Labels with K taken as max label + 1.
inline LabelVector load_labels_inferred(const std::string& path) {
  const auto raw = load_labels(path, std::numeric_limits<Label>::max());
  Label max_label = 0;
  for (Label y : raw.values()) max_label = std::max(max_label, y);
  return {{raw.values().begin(), raw.values().end()}, static_cast<std::size_t>(max_label) + 1};
}

// ---------------------------------------------------------------------------
// Score tables: CSV with header node,c0..c{K-1}.

inline void write_scores_csv(std::ostream& out, const ScoreTable& t) {
  out << "node";
  for (std::size_t c = 0; c < t.num_classes; ++c) out << ",c" << c;
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    out << t.node_ids[i];
    for (double s : t.row(i)) out << ',' << s;
    out << '\n';
  }
}

inline ScoreTable read_scores_csv(std::istream& in, std::string method = {}) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("score CSV is empty");
  ScoreTable t;
  t.method = std::move(method);
  {
    std::stringstream header(line);
    std::string cell;
    std::getline(header, cell, ',');
    if (detail::trim(cell) != "node") throw DataError("score CSV header must start with 'node'");
    while (std::getline(header, cell, ',')) {
      if (detail::trim(cell) != "c" + std::to_string(t.num_classes)) throw DataError("bad score CSV header '" + cell + "'");
      ++t.num_classes;
    }
  }
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::int64_t node = 0;
    if (!detail::parse_int(cell, node) || node < 0) throw DataError("bad node id '" + cell + "' in score CSV");
    t.node_ids.push_back(static_cast<NodeId>(node));
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        t.values.push_back(std::stod(std::string(detail::trim(cell))));
      } catch (const std::exception&) {
        throw DataError("bad score value '" + cell + "'");
      }
      ++cols;
    }
    if (cols != t.num_classes) throw DataError("score row for node " + std::to_string(node) + " has wrong width");
  }
  t.randomized = t.method == "aps_randomized" || t.method == "raps" || t.method == "daps";
  return t;
}

// ---------------------------------------------------------------------------
// Calibration results: JSON; infinite thresholds are the string "inf".

inline nlohmann::json to_json(const CalibrationResult& c) {
  nlohmann::json thresholds = nlohmann::json::array();
  for (double x : c.thresholds) thresholds.push_back(detail::threshold_to_json(x));
  nlohmann::json j{{"alpha", c.alpha},
                   {"kind", std::string(to_string(c.kind))},
                   {"thresholds", thresholds},
                   {"n_calib", c.n_calib}};
  if (c.kind == CalibrationResult::Kind::per_node) j["node_ids"] = c.node_ids;
  return j;
}

inline CalibrationResult calibration_from_json(const nlohmann::json& j) {
  CalibrationResult c;
  try {
    c.alpha = j.at("alpha").get<double>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "scalar") c.kind = CalibrationResult::Kind::scalar;
    else if (kind == "per_class") c.kind = CalibrationResult::Kind::per_class;
    else if (kind == "per_node") c.kind = CalibrationResult::Kind::per_node;
    else throw DataError("unknown calibration kind '" + kind + "'");
    for (const auto& t : j.at("thresholds")) c.thresholds.push_back(detail::threshold_from_json(t));
    if (j.contains("n_calib")) j.at("n_calib").get_to(c.n_calib);
    if (j.contains("node_ids")) j.at("node_ids").get_to(c.node_ids);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed calibration JSON: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Prediction sets: CSV node,labels with labels joined by ';'.

inline void write_sets_csv(std::ostream& out, const PredictionSets& sets) {
  out << "node,labels\n";
  for (std::size_t i = 0; i < sets.size(); ++i) {
    out << sets.node_ids()[i] << ',';
    const auto labels = sets.labels_of(i);
    for (std::size_t j = 0; j < labels.size(); ++j) out << (j ? ";" : "") << labels[j];
    out << '\n';
  }
}

inline PredictionSets read_sets_csv(std::istream& in, std::size_t num_classes) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "node,labels") throw DataError("sets CSV header must be node,labels");
  std::vector<NodeId> nodes;
  std::vector<std::vector<std::int64_t>> members;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("malformed sets row '" + line + "'");
    std::int64_t node = 0;
    if (!detail::parse_int(line.substr(0, comma), node) || node < 0) throw DataError("bad node in sets CSV");
    nodes.push_back(static_cast<NodeId>(node));
    members.emplace_back();
    std::stringstream ss(line.substr(comma + 1));
    std::string cell;
    while (std::getline(ss, cell, ';')) {
      if (detail::trim(cell).empty()) continue;
      std::int64_t y = 0;
      if (!detail::parse_int(cell, y) || y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw DataError("bad label '" + cell + "' in sets CSV");
      }
      members.back().push_back(y);
    }
  }
  PredictionSets sets(nodes, num_classes);
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (auto y : members[i]) sets.insert(i, static_cast<std::size_t>(y));
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Reports.

struct CellReport {
  std::string method;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double coverage = 0.0;
  double efficiency = 0.0;
  double lsc = 0.0;
  std::vector<double> per_class_coverage;
};

inline CellReport evaluate_sets(const PredictionSets& sets, const LabelVector& labels, std::string method, double alpha,
                                std::uint64_t seed) {
  const auto strat = label_stratified_coverage(sets, labels);
  return {std::move(method), alpha, seed, coverage(sets, labels), efficiency(sets), strat.value, strat.per_class};
}

inline nlohmann::json to_json(const CellReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (double x : r.per_class_coverage) per_class.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
  return {{"coverage", r.coverage}, {"efficiency", r.efficiency}, {"lsc", r.lsc},
          {"per_class_coverage", per_class}, {"alpha", r.alpha}, {"method", r.method},
          {"seed", r.seed}};
}

inline nlohmann::json to_json(const EfficiencyComparison& c, std::string_view method_A, std::string_view method_Atilde) {
  return {{"method_A", method_A},
          {"method_Atilde", method_Atilde},
          {"alpha", c.alpha},
          {"n", c.n},
          {"num_classes", c.num_classes},
          {"q_A", detail::threshold_to_json(c.q_A)},
          {"q_Atilde", detail::threshold_to_json(c.q_Atilde)},
          {"alpha_c_A", c.alpha_c_A},
          {"alpha_c_Atilde", c.alpha_c_Atilde},
          {"margin", c.margin},
          {"condition_met", c.condition_met},
          {"asymptotic_gain", c.asymptotic_gain}};
}

struct MeanInterval {
  double mean = 0.0;
  /// Half-width of the two-sided 95% Student-t interval; NaN for one sample.
  double half_width = 0.0;
};

inline MeanInterval mean_ci95(std::span<const double> xs) {
  if (xs.empty()) throw DataError("confidence interval of no samples");
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  return {mean, boost::math::quantile(boost::math::complement(dist, 0.025)) * sd / std::sqrt(n)};
}

/// One row per (method, alpha) in first-seen order: mean and CI half-width
/// of coverage, efficiency and lsc over seeds.
inline void write_aggregate_csv(std::ostream& out, std::span<const CellReport> reports) {
  struct Group {
    std::string method;
    double alpha;
    std::vector<double> cov, eff, lsc;
  };
  std::vector<Group> groups;
  for (const auto& r : reports) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.method == r.method && g.alpha == r.alpha; });
    if (it == groups.end()) {
      groups.push_back({r.method, r.alpha, {}, {}, {}});
      it = groups.end() - 1;
    }
    it->cov.push_back(r.coverage);
    it->eff.push_back(r.efficiency);
    it->lsc.push_back(r.lsc);
  }
  out << "method,alpha,n_seeds,coverage_mean,coverage_ci95,efficiency_mean,efficiency_ci95,lsc_mean,lsc_ci95\n";
  for (const auto& g : groups) {
    out << g.method << ',' << detail::format_double(g.alpha) << ',' << g.cov.size();
    for (const auto* xs : {&g.cov, &g.eff, &g.lsc}) {
      const auto ci = mean_ci95(*xs);
      out << ',' << detail::format_double(ci.mean) << ',' << detail::format_double(ci.half_width);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Experiment configuration.

struct MethodSpec {
  /// Name used in reports and file names.
  std::string label;
  /// Empty for NAPS.
  std::optional<ScoreMethod> score;
  ScoreOptions options{};
  NapsConfig naps{};
};

struct SplitSpec {
  enum class Style { full, label_count };
  Style style = Style::full;
  SplitFractions fractions{0.2, 0.1, 0.35, 0.35};
  std::size_t per_class = 20;
};

struct ExperimentConfig {
  std::string graph_path;
  bool symmetrize = true;
  std::string probabilities_path;
  std::string labels_path;
  std::optional<std::string> predefined_split_path;
  SplitSpec split{};
  std::vector<MethodSpec> methods;
  std::vector<double> alphas{0.1};
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "out";
  /// 0 picks the hardware concurrency.
  std::size_t threads = 0;
};

inline MethodSpec parse_method(const nlohmann::json& j) {
  MethodSpec m;
  const auto name = j.is_string() ? j.get<std::string>() : j.at("name").get<std::string>();
  m.label = name;
  if (name != "naps") {
    m.score = parse_score_method(name);
    if (!m.score) throw ConfigError("unknown method '" + name + "'");
  }
  if (!j.is_object()) return m;
  if (j.contains("label")) m.label = j.at("label").get<std::string>();
  if (j.contains("nu")) m.options.raps.nu = j.at("nu").get<double>();
  if (j.contains("k_reg")) m.options.raps.k_reg = j.at("k_reg").get<double>();
  if (j.contains("rank_penalty")) m.options.raps.rank_penalty = j.at("rank_penalty").get<bool>();
  if (j.contains("delta")) m.options.diffusion.delta = j.at("delta").get<double>();
  if (j.contains("k")) m.naps.k = j.at("k").get<std::size_t>();
  if (j.contains("weight")) m.naps.weight_kind = parse_weight_kind(j.at("weight").get<std::string>());
  if (j.contains("batch_size")) m.naps.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("randomized")) m.naps.randomized_aps = j.at("randomized").get<bool>();
  return m;
}

/// Relative paths resolve against `base_dir`.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
  };
  ExperimentConfig c;
  try {
    c.graph_path = resolve(j.at("graph").get<std::string>());
    c.probabilities_path = resolve(j.at("probabilities").get<std::string>());
    c.labels_path = resolve(j.at("labels").get<std::string>());
    if (j.contains("symmetrize")) c.symmetrize = j.at("symmetrize").get<bool>();
    if (j.contains("predefined_split")) c.predefined_split_path = resolve(j.at("predefined_split").get<std::string>());
    if (j.contains("split")) {
      const auto& s = j.at("split");
      const auto style = s.value("style", std::string("fs"));
      if (style == "fs") {
        c.split.style = SplitSpec::Style::full;
        if (s.contains("fractions")) {
          const auto f = s.at("fractions").get<std::vector<double>>();
          if (f.size() != 4) throw ConfigError("split.fractions needs 4 entries");
          std::copy(f.begin(), f.end(), c.split.fractions.begin());
        }
      } else if (style == "lc") {
        c.split.style = SplitSpec::Style::label_count;
        c.split.per_class = s.value("per_class", std::size_t{20});
      } else {
        throw ConfigError("split.style must be 'fs' or 'lc'");
      }
    }
    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m));
    if (j.contains("alphas")) c.alphas = j.at("alphas").get<std::vector<double>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("out_dir")) c.out_dir = resolve(j.at("out_dir").get<std::string>());
    if (j.contains("threads")) c.threads = j.at("threads").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
  if (c.methods.empty() || c.alphas.empty() || c.seeds.empty()) throw ConfigError("methods, alphas and seeds must be nonempty");
  for (double a : c.alphas) check_alpha(a);
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(detail::read_json_file(path), std::filesystem::path(path).parent_path());
}

struct Dataset {
  Graph graph;
  ProbabilityMatrix probs;
  LabelVector labels;
  std::optional<SplitAssignment> predefined;
};

inline Dataset load_dataset(const ExperimentConfig& c) {
  auto probs = load_probabilities(c.probabilities_path);
  auto labels = load_labels(c.labels_path, probs.num_classes());
  if (labels.size() != probs.num_nodes()) throw DataError("labels and probabilities disagree on the node count");
  auto graph = load_graph_file(c.graph_path, c.symmetrize, probs.num_nodes());
  std::optional<SplitAssignment> predefined;
  if (c.predefined_split_path) predefined = load_split(*c.predefined_split_path);
  return {std::move(graph), std::move(probs), std::move(labels), std::move(predefined)};
}

inline SplitAssignment make_split(const SplitSpec& spec, const Dataset& data, const RandomPolicy& policy) {
  if (spec.style == SplitSpec::Style::label_count) return label_count_split(data.labels, spec.per_class, policy).split;
  return full_split(data.probs.num_nodes(), spec.fractions, data.predefined, policy);
}

/// Prediction sets for split.test under one method.
inline PredictionSets predict_sets(const MethodSpec& method, const Dataset& data, const SplitAssignment& split,
                                   double alpha, const RandomPolicy& policy) {
  if (!split.usable_for_conformal()) throw DataError("split has an empty calib or test set");
  if (!method.score) return naps_predict(data.graph, data.probs, data.labels, split, method.naps, alpha, policy).sets;
  const auto calib = compute_scores(*method.score, data.probs, &data.graph, split.calib, method.options, policy);
  const auto calibration = calibrate(calib, data.labels, alpha, uses_classwise_quantiles(*method.score));
  const auto test = compute_scores(*method.score, data.probs, &data.graph, split.test, method.options, policy);
  return build_sets(test, calibration);
}

inline CellReport run_cell(const MethodSpec& method, const Dataset& data, const SplitSpec& split_spec, double alpha,
                           std::uint64_t seed) {
  const RandomPolicy policy(seed);
  const auto split = make_split(split_spec, data, policy);
  const auto sets = predict_sets(method, data, split, alpha, policy);
  return evaluate_sets(sets, data.labels, method.label, alpha, seed);
}

inline std::string report_file_name(const CellReport& r) {
  return r.method + "_a" + detail::format_double(r.alpha) + "_s" + std::to_string(r.seed) + ".json";
}

/// Runs every (method, alpha, seed) cell on a thread pool, then writes one
/// JSON report per cell under out_dir/reports and out_dir/aggregate.csv.
/// Output files depend only on the config.
inline std::vector<CellReport> run_experiment(const ExperimentConfig& config, const Dataset& data) {
  struct Cell {
    const MethodSpec* method;
    double alpha;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& m : config.methods) {
    for (double a : config.alphas) {
      for (auto s : config.seeds) cells.push_back({&m, a, s});
    }
  }
  std::vector<CellReport> reports(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        reports[i] = run_cell(*cells[i].method, data, config.split, cells[i].alpha, cells[i].seed);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = config.threads ? config.threads : std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, cells.size());
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const std::filesystem::path out(config.out_dir);
  for (const auto& r : reports) detail::open_output(out / "reports" / report_file_name(r)) << to_json(r).dump(2) << '\n';
  auto agg = detail::open_output(out / "aggregate.csv");
  write_aggregate_csv(agg, reports);
  return reports;
}

inline std::vector<CellReport> run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, load_dataset(config));
}

/// Efficiency comparison of two score methods on the calibration split of `seed`.
inline EfficiencyComparison compare_command(const MethodSpec& method_A, const MethodSpec& method_Atilde,
                                            const Dataset& data, const SplitSpec& split_spec, double alpha,
                                            std::uint64_t seed) {
  if (!method_A.score || !method_Atilde.score) throw ConfigError("compare needs two score methods");
  const RandomPolicy policy(seed);
  const auto split = make_split(split_spec, data, policy);
  if (split.calib.empty()) throw DataError("compare needs a nonempty calibration set");
  const auto a = compute_scores(*method_A.score, data.probs, &data.graph, split.calib, method_A.options, policy);
  const auto at = compute_scores(*method_Atilde.score, data.probs, &data.graph, split.calib, method_Atilde.options, policy);
  return compare_efficiency(a, at, data.labels, alpha, policy);
}

}  // namespace graphcp
