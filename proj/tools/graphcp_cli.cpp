// Command-line front end for the graphcp library.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "graphcp/graphcp.hpp"

namespace fs = std::filesystem;
using namespace graphcp;

namespace {

struct Common {
  std::uint64_t seed = 0;
  double alpha = 0.1;
  std::string out_dir = ".";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--alpha", c.alpha, "target miscoverage");
  app->add_option("--out-dir", c.out_dir, "output directory");
}

struct DataPaths {
  std::string graph;
  std::string probs;
  std::string labels;
  std::string split;
  bool no_symmetrize = false;
};

void add_data(CLI::App* app, DataPaths& d, bool need_graph, bool need_split) {
  auto* g = app->add_option("--graph", d.graph, "edge list (u<TAB>v)");
  if (need_graph) g->required();
  app->add_option("--probs", d.probs, "probabilities (.csv or binary)")->required();
  app->add_option("--labels", d.labels, "labels, one per line")->required();
  auto* s = app->add_option("--split", d.split, "split JSON");
  if (need_split) s->required();
  app->add_flag("--no-symmetrize", d.no_symmetrize, "keep the edge list directed");
}

Dataset load(const DataPaths& d) {
  auto probs = load_probabilities(d.probs);
  auto labels = load_labels(d.labels, probs.num_classes());
  if (labels.size() != probs.num_nodes()) throw DataError("labels and probabilities disagree on the node count");
  Graph graph = d.graph.empty() ? Graph::from_edges(probs.num_nodes(), {}, true)
                                : load_graph_file(d.graph, !d.no_symmetrize, probs.num_nodes());
  std::optional<SplitAssignment> split;
  if (!d.split.empty()) {
    split = load_split(d.split);
    split->validate(probs.num_nodes());
  }
  return {std::move(graph), std::move(probs), std::move(labels), std::move(split)};
}

struct MethodArgs {
  std::string name = "aps_randomized";
  double nu = 0.01;
  double k_reg = 1.0;
  bool rank_penalty = false;
  double delta = 0.5;
};

void add_method(CLI::App* app, MethodArgs& m, const std::string& flag = "--method") {
  app->add_option(flag, m.name, "score method");
  app->add_option("--nu", m.nu, "RAPS penalty weight");
  app->add_option("--k-reg", m.k_reg, "RAPS rank offset");
  app->add_flag("--rank-penalty", m.rank_penalty, "RAPS penalty on the true-label rank");
  app->add_option("--delta", m.delta, "diffusion weight");
}

MethodSpec to_spec(const MethodArgs& m, const std::string& name) {
  MethodSpec spec;
  spec.label = name;
  spec.score = parse_score_method(name);
  if (!spec.score) throw ConfigError("unknown score method '" + name + "'");
  spec.options.raps = {m.nu, m.k_reg, m.rank_penalty};
  spec.options.diffusion.delta = m.delta;
  return spec;
}

std::ofstream output(const Common& c, const std::string& name) {
  return detail::open_output(fs::path(c.out_dir) / name);
}

void write_report(const Common& c, const CellReport& r) {
  output(c, "report.json") << to_json(r).dump(2) << '\n';
  std::cout << "coverage " << r.coverage << "  efficiency " << r.efficiency << "  lsc " << r.lsc << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction for graph node classification"};
  app.require_subcommand(1);
  Common common;

  // split
  auto* split_cmd = app.add_subcommand("split", "partition nodes into train/valid/calib/test");
  std::string split_labels;
  std::string split_style = "fs";
  std::vector<double> fractions{0.2, 0.1, 0.35, 0.35};
  std::size_t per_class = 20;
  std::string predefined;
  add_common(split_cmd, common);
  split_cmd->add_option("--labels", split_labels, "labels, one per line")->required();
  split_cmd->add_option("--style", split_style, "fs (fractions) or lc (per-class counts)")
      ->check(CLI::IsMember({"fs", "lc"}));
  split_cmd->add_option("--fractions", fractions, "train,valid,calib,test fractions")->delimiter(',')->expected(4);
  split_cmd->add_option("--per-class", per_class, "nodes per class for lc");
  split_cmd->add_option("--predefined", predefined, "source split JSON for fs");

  // score
  auto* score_cmd = app.add_subcommand("score", "score calibration and test nodes");
  DataPaths score_data;
  MethodArgs score_method;
  add_common(score_cmd, common);
  add_data(score_cmd, score_data, false, true);
  add_method(score_cmd, score_method);

  // calibrate
  auto* calibrate_cmd = app.add_subcommand("calibrate", "conformal thresholds from calibration scores");
  std::string calib_scores;
  std::string calib_labels;
  std::string calib_method = "aps_randomized";
  add_common(calibrate_cmd, common);
  calibrate_cmd->add_option("--scores", calib_scores, "calibration score CSV")->required();
  calibrate_cmd->add_option("--labels", calib_labels, "labels, one per line")->required();
  calibrate_cmd->add_option("--method", calib_method, "score method the table came from");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "prediction sets from test scores and thresholds");
  std::string predict_scores;
  std::string predict_calibration;
  add_common(predict_cmd, common);
  predict_cmd->add_option("--scores", predict_scores, "test score CSV")->required();
  predict_cmd->add_option("--calibration", predict_calibration, "calibration JSON")->required();

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "coverage, efficiency and stratified coverage");
  std::string eval_sets;
  std::string eval_labels;
  std::string eval_method = "unknown";
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--sets", eval_sets, "prediction sets CSV")->required();
  evaluate_cmd->add_option("--labels", eval_labels, "labels, one per line")->required();
  evaluate_cmd->add_option("--method", eval_method, "method name for the report");
  std::size_t eval_classes = 0;
  evaluate_cmd->add_option("--num-classes", eval_classes, "K when the largest class is absent from the labels");

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "efficiency comparison of two scores on calibration data");
  DataPaths compare_data;
  MethodArgs compare_a;
  std::string compare_b = "aps";
  add_common(compare_cmd, common);
  add_data(compare_cmd, compare_data, false, true);
  add_method(compare_cmd, compare_a, "--method-a");
  compare_cmd->add_option("--method-b", compare_b, "second score method");

  // naps
  auto* naps_cmd = app.add_subcommand("naps", "neighborhood-weighted prediction sets");
  DataPaths naps_data;
  NapsConfig naps_config;
  std::string naps_weight = "uniform";
  bool naps_deterministic = false;
  add_common(naps_cmd, common);
  add_data(naps_cmd, naps_data, true, true);
  naps_cmd->add_option("--k", naps_config.k, "hop radius");
  naps_cmd->add_option("--weight", naps_weight, "uniform, hyperbolic or exponential");
  naps_cmd->add_option("--batch-size", naps_config.batch_size, "test nodes per k-hop batch");
  naps_cmd->add_flag("--deterministic-aps", naps_deterministic, "drop the APS randomization term");

  // cfgnn-train / cfgnn-predict
  cfgnn::TrainConfig train_config;
  std::string train_score = "aps_randomized";
  std::string eval_score = "aps_randomized";
  std::string activation = "relu";
  auto add_cfgnn = [&](CLI::App* cmd) {
    cmd->add_option("--eval-score", eval_score, "score used for sets: tps, aps, aps_randomized");
    cmd->add_option("--cor-cal-fraction", train_config.cor_cal_fraction, "share of calib used for training");
  };
  auto* train_cmd = app.add_subcommand("cfgnn-train", "train the score-correction model");
  DataPaths train_data;
  add_common(train_cmd, common);
  add_data(train_cmd, train_data, true, true);
  add_cfgnn(train_cmd);
  train_cmd->add_option("--epochs", train_config.epochs);
  train_cmd->add_option("--batch-size", train_config.batch_size);
  train_cmd->add_option("--lr", train_config.learning_rate);
  train_cmd->add_option("--hidden", train_config.architecture.hidden);
  train_cmd->add_option("--layers", train_config.architecture.layers);
  train_cmd->add_option("--tau", train_config.architecture.tau);
  train_cmd->add_option("--activation", activation, "relu or elu");
  train_cmd->add_option("--train-score", train_score, "score inside the loss");
  train_cmd->add_flag("--full-batch", train_config.full_batch, "one unshuffled batch per epoch");

  auto* cfgnn_predict_cmd = app.add_subcommand("cfgnn-predict", "prediction sets from a trained model");
  DataPaths cfgnn_data;
  std::string model_path;
  add_common(cfgnn_predict_cmd, common);
  add_data(cfgnn_predict_cmd, cfgnn_data, true, true);
  add_cfgnn(cfgnn_predict_cmd);
  cfgnn_predict_cmd->add_option("--model", model_path, "model file")->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "stochastic block model with synthetic probabilities");
  std::size_t synth_nodes = 1000;
  std::size_t synth_classes = 5;
  double intra_p = 0.05;
  double inter_p = 0.005;
  double noise = 0.5;
  double flip_rate = 0.0;
  std::string synth_mode = "oracle";
  add_common(synth_cmd, common);
  synth_cmd->add_option("--nodes", synth_nodes);
  synth_cmd->add_option("--classes", synth_classes);
  synth_cmd->add_option("--intra", intra_p, "within-block edge probability");
  synth_cmd->add_option("--inter", inter_p, "between-block edge probability");
  synth_cmd->add_option("--noise", noise, "probability noise level");
  synth_cmd->add_option("--flip-rate", flip_rate, "share of rows centered on a wrong class (corrupted mode)");
  synth_cmd->add_option("--mode", synth_mode, "oracle (labels drawn from rows) or corrupted")
      ->check(CLI::IsMember({"oracle", "corrupted"}));

  // run
  auto* run_cmd = app.add_subcommand("run", "method x alpha x seed grid from a JSON config");
  std::string config_path;
  add_common(run_cmd, common);
  run_cmd->add_option("--config", config_path, "experiment JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const RandomPolicy policy(common.seed);
    if (split_cmd->parsed()) {
      const auto labels = load_labels_inferred(split_labels);
      SplitAssignment split;
      if (split_style == "lc") {
        const auto result = label_count_split(labels, per_class, policy);
        for (Label c : result.exhausted_classes) std::cerr << "warning: class " << c << " exhausted\n";
        split = result.split;
      } else {
        std::optional<SplitAssignment> source;
        if (!predefined.empty()) source = load_split(predefined);
        split = full_split(labels.size(), {fractions[0], fractions[1], fractions[2], fractions[3]}, source, policy);
      }
      output(common, "split.json") << to_json(split).dump() << '\n';
    } else if (score_cmd->parsed()) {
      const auto data = load(score_data);
      const auto spec = to_spec(score_method, score_method.name);
      const Graph* graph = score_data.graph.empty() ? nullptr : &data.graph;
      auto calib_out = output(common, "scores_calib.csv");
      write_scores_csv(calib_out, compute_scores(*spec.score, data.probs, graph, data.predefined->calib, spec.options, policy));
      auto test_out = output(common, "scores_test.csv");
      write_scores_csv(test_out, compute_scores(*spec.score, data.probs, graph, data.predefined->test, spec.options, policy));
    } else if (calibrate_cmd->parsed()) {
      const auto method = parse_score_method(calib_method);
      if (!method) throw ConfigError("unknown score method '" + calib_method + "'");
      std::ifstream in(calib_scores);
      if (!in) throw DataError("cannot open '" + calib_scores + "'");
      const auto table = read_scores_csv(in, calib_method);
      const auto labels = load_labels(calib_labels, table.num_classes);
      const auto calibration = calibrate(table, labels, common.alpha, uses_classwise_quantiles(*method));
      output(common, "calibration.json") << to_json(calibration).dump(2) << '\n';
    } else if (predict_cmd->parsed()) {
      std::ifstream in(predict_scores);
      if (!in) throw DataError("cannot open '" + predict_scores + "'");
      const auto table = read_scores_csv(in);
      const auto calibration = calibration_from_json(detail::read_json_file(predict_calibration));
      auto out = output(common, "sets.csv");
      write_sets_csv(out, build_sets(table, calibration));
    } else if (evaluate_cmd->parsed()) {
      const auto labels = load_labels_inferred(eval_labels);
      std::ifstream in(eval_sets);
      if (!in) throw DataError("cannot open '" + eval_sets + "'");
      const std::size_t k = std::max(eval_classes, labels.num_classes());
      const auto sets = read_sets_csv(in, k);
      const LabelVector wide({labels.values().begin(), labels.values().end()}, k);
      write_report(common, evaluate_sets(sets, wide, eval_method, common.alpha, common.seed));
    } else if (compare_cmd->parsed()) {
      const auto data = load(compare_data);
      const auto a = to_spec(compare_a, compare_a.name);
      const auto b = to_spec(compare_a, compare_b);
      const Graph* graph = compare_data.graph.empty() ? nullptr : &data.graph;
      const auto& calib = data.predefined->calib;
      const auto ta = compute_scores(*a.score, data.probs, graph, calib, a.options, policy);
      const auto tb = compute_scores(*b.score, data.probs, graph, calib, b.options, policy);
      const auto result = compare_efficiency(ta, tb, data.labels, common.alpha, policy);
      const auto j = to_json(result, a.label, b.label);
      output(common, "compare.json") << j.dump(2) << '\n';
      std::cout << j.dump(2) << '\n';
    } else if (naps_cmd->parsed()) {
      const auto data = load(naps_data);
      naps_config.weight_kind = parse_weight_kind(naps_weight);
      naps_config.randomized_aps = !naps_deterministic;
      const auto result = naps_predict(data.graph, data.probs, data.labels, *data.predefined, naps_config, common.alpha, policy);
      output(common, "calibration.json") << to_json(result.calibration).dump(2) << '\n';
      auto out = output(common, "sets.csv");
      write_sets_csv(out, result.sets);
      write_report(common, evaluate_sets(result.sets, data.labels, "naps", common.alpha, common.seed));
    } else if (train_cmd->parsed()) {
      const auto data = load(train_data);
      train_config.alpha = common.alpha;
      train_config.train_score = cfgnn::parse_loss_score(train_score);
      train_config.eval_score = cfgnn::parse_loss_score(eval_score);
      train_config.architecture.activation = cfgnn::parse_activation(activation);
      const auto result = cfgnn::train(data.graph, data.probs, data.labels, data.predefined->calib, train_config, policy);
      const fs::path dir(common.out_dir);
      fs::create_directories(dir);
      cfgnn::save_model_file((dir / "model.bin").string(), result.model);
      auto log = output(common, "training_log.csv");
      cfgnn::write_training_log(log, result.log);
      std::cout << "best epoch " << result.best_epoch << "  validation efficiency "
                << result.log[result.best_epoch].validation_efficiency << '\n';
    } else if (cfgnn_predict_cmd->parsed()) {
      const auto data = load(cfgnn_data);
      const auto model = cfgnn::load_model_file(model_path);
      const auto result = cfgnn::cfgnn_predict(model, data.graph, data.probs, data.labels, *data.predefined,
                                               cfgnn::parse_loss_score(eval_score), common.alpha, policy,
                                               train_config.cor_cal_fraction);
      output(common, "calibration.json") << to_json(result.calibration).dump(2) << '\n';
      auto out = output(common, "sets.csv");
      write_sets_csv(out, result.sets);
      write_report(common, evaluate_sets(result.sets, data.labels, "cfgnn", common.alpha, common.seed));
    } else if (synth_cmd->parsed()) {
      const auto sbm = generate_sbm(synth_nodes, synth_classes, intra_p, inter_p, policy);
      auto graph_out = output(common, "graph.tsv");
      save_graph(graph_out, sbm.graph);
      LabelVector labels = sbm.labels;
      ProbabilityMatrix probs;
      if (synth_mode == "oracle") {
        auto oracle = oracle_probabilities(sbm.labels, noise, policy);
        probs = std::move(oracle.probs);
        labels = std::move(oracle.labels);
      } else {
        probs = corrupted_probabilities(sbm.labels, noise, flip_rate, policy);
      }
      auto labels_out = output(common, "labels.txt");
      write_labels(labels_out, labels);
      auto probs_out = output(common, "probs.csv");
      write_probabilities_csv(probs_out, probs);
      std::cout << "nodes " << sbm.graph.num_nodes() << "  arcs " << sbm.graph.num_arcs() << "  homophily "
                << edge_homophily(sbm.graph, labels) << '\n';
    } else if (run_cmd->parsed()) {
      auto config = load_experiment_config(config_path);
      if (run_cmd->count("--seed")) config.seeds = {common.seed};
      if (run_cmd->count("--alpha")) config.alphas = {common.alpha};
      if (run_cmd->count("--out-dir")) config.out_dir = common.out_dir;
      const auto reports = run_experiment(config);
      std::cout << reports.size() << " cells written to " << config.out_dir << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
