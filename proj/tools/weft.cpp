#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "weft/config.hpp"
#include "weft/corpus.hpp"
#include "weft/error.hpp"
#include "weft/harness.hpp"

namespace {

nlohmann::json stats_json(const weft::DatasetStats& s) {
  nlohmann::json j;
  j["per_label"] = s.per_label;
  j["total"] = s.total;
  j["train"] = s.train;
  j["validation"] = s.validation;
  j["test"] = s.test;
  return j;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"training framework for low-resource text classification with "
               "reinforcement-learned neighbor-example selection"};
  app.require_subcommand(1);

  std::string raw_path, out_path, dataset_path, config_path;
  std::string phase, checkpoint, checkpoint_a, checkpoint_b, task_id, split, study;
  bool no_mtl_init = false;
  bool literal_eq3 = false;

  auto* prepare = app.add_subcommand(
      "prepare-data", "aggregate raw annotations into a gold dataset file");
  prepare->add_option("raw", raw_path, "raw annotation file (JSONL)")->required();
  prepare->add_option("out", out_path, "output dataset file (JSONL)")->required();

  auto* stats = app.add_subcommand("stats", "per-label counts of a dataset file");
  stats->add_option("dataset", dataset_path, "dataset file (JSONL)")->required();

  auto* synth = app.add_subcommand(
      "synth", "generate the synthetic suite and a runnable experiment config");
  synth->add_option("config", config_path, "config file with a [synth] section")
      ->required();

  auto* train = app.add_subcommand("train", "run one experiment phase");
  train->add_option("--phase", phase, "baseline, mtl, or rlmtl")
      ->required()
      ->check(CLI::IsMember({"baseline", "mtl", "rlmtl"}));
  train->add_option("--config", config_path, "experiment config file")->required();
  train->add_flag("--no-mtl-init", no_mtl_init,
                  "start the rlmtl phase from scratch instead of the mtl checkpoint");
  train->add_flag("--literal-eq3", literal_eq3,
                  "use the literal value loss against the constant 1 (audit mode)");

  auto* evaluate = app.add_subcommand("evaluate", "macro-F1 of a checkpoint");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evaluate->add_option("--task", task_id, "task id")->required();
  evaluate->add_option("--split", split, "validation or test")
      ->required()
      ->check(CLI::IsMember({"validation", "test"}));
  evaluate->add_option("--config", config_path, "experiment config file (data access)")
      ->required();

  auto* ablate = app.add_subcommand("ablate", "run an ablation study");
  ablate->add_option("--study", study, "mtl-init or neighbor-tasks")
      ->required()
      ->check(CLI::IsMember({"mtl-init", "neighbor-tasks"}));
  ablate->add_option("--config", config_path, "experiment config file")->required();

  auto* compare = app.add_subcommand(
      "compare", "McNemar test between two checkpoints on one split");
  compare->add_option("--checkpoint-a", checkpoint_a, "first checkpoint")->required();
  compare->add_option("--checkpoint-b", checkpoint_b, "second checkpoint")->required();
  compare->add_option("--task", task_id, "task id")->required();
  compare->add_option("--split", split, "validation or test")
      ->required()
      ->check(CLI::IsMember({"validation", "test"}));
  compare->add_option("--config", config_path, "experiment config file (data access)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2; // bad invocation is a configuration error
  }

  try {
    if (prepare->parsed()) {
      print_json(stats_json(weft::prepare_fine_stereotype(raw_path, out_path)));
    } else if (stats->parsed()) {
      print_json(stats_json(weft::dataset_stats(weft::load_dataset_any(dataset_path))));
    } else if (synth->parsed()) {
      const auto cfg = weft::parse_experiment_config(config_path,
                                                     /*require_tasks=*/false);
      nlohmann::json j;
      j["generated_config"] = weft::run_synth(cfg);
      print_json(j);
    } else if (train->parsed()) {
      auto cfg = weft::parse_experiment_config(config_path);
      if (no_mtl_init) cfg.mtl_init = false;
      if (literal_eq3) cfg.training.literal_value_loss = true;
      print_json(weft::run_single_phase(cfg, phase));
    } else if (evaluate->parsed()) {
      const auto cfg = weft::parse_experiment_config(config_path);
      print_json(weft::evaluate_checkpoint(cfg, checkpoint, task_id, split));
    } else if (ablate->parsed()) {
      const auto cfg = weft::parse_experiment_config(config_path);
      print_json(weft::run_ablation(cfg, study));
    } else if (compare->parsed()) {
      const auto cfg = weft::parse_experiment_config(config_path);
      print_json(weft::compare_checkpoints(cfg, checkpoint_a, checkpoint_b,
                                           task_id, split));
    }
  } catch (const weft::config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const weft::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const weft::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    // unexpected I/O or library failure: closest bucket is the data code
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
