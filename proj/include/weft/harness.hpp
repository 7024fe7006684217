#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weft/config.hpp"
#include "weft/corpus.hpp"
#include "weft/encoder.hpp"
#include "weft/error.hpp"
#include "weft/eval.hpp"
#include "weft/mtl.hpp"
#include "weft/rl.hpp"
#include "weft/rng.hpp"

namespace weft {

// Orchestrates the three-phase protocol (baseline, mtl, rlmtl), the two
// ablation studies, and all file persistence. Reports contain no clocks,
// hostnames, or other run-varying state: identical config plus seed gives
// byte-identical output files.

struct ZeroShotData {
  const TaskEntry* entry = nullptr;
  DatasetSplit split;
};

struct LoadedExperiment {
  ExperimentConfig cfg;
  std::vector<TaskSpec> registry; // trainable tasks, file order, target included
  TaskData target;
  std::vector<TaskData> neighbors; // file order
  std::vector<ZeroShotData> zero_shot;
  FeatureMap features;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return v.empty() ? 0.0 : m / static_cast<double>(v.size());
}

// Population standard deviation, matching the score normalization used in
// training.
inline double std_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return std::sqrt(var / static_cast<double>(v.size()));
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write file: " + path);
  out << content;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline std::string checkpoint_path(const std::string& dir, const std::string& tag,
                                   std::uint64_t seed) {
  return dir + "/checkpoint_" + tag + "_seed" + std::to_string(seed) + ".json";
}

inline std::string episode_log_path(const std::string& dir, const std::string& tag,
                                    std::uint64_t seed) {
  return dir + "/episodes_" + tag + "_seed" + std::to_string(seed) + ".jsonl";
}

} // namespace detail

inline LoadedExperiment load_experiment(const ExperimentConfig& cfg) {
  LoadedExperiment loaded;
  loaded.cfg = cfg;

  bool target_found = false;
  std::set<std::string> all_ids;
  auto claim_ids = [&](const DatasetSplit& ds, const std::string& task_id) {
    for (const auto* part : {&ds.train, &ds.validation, &ds.test})
      for (const auto& ex : *part)
        if (!all_ids.insert(ex.example_id).second)
          throw integrity_error("example_id '" + ex.example_id + "' in task '" +
                                task_id + "' collides with another task");
  };

  for (const auto& entry : cfg.tasks) {
    DatasetSplit split = load_dataset(entry.data_path, entry.spec);
    claim_ids(split, entry.spec.task_id);
    if (entry.zero_shot) {
      loaded.zero_shot.push_back(ZeroShotData{&entry, std::move(split)});
      continue;
    }
    loaded.registry.push_back(entry.spec);
    if (entry.spec.role == TaskRole::target) {
      target_found = true;
      if (split.validation.empty() || split.test.empty())
        throw config_error("target task '" + entry.spec.task_id +
                           "' needs non-empty validation and test splits");
      loaded.target = TaskData{entry.spec, std::move(split)};
    } else {
      loaded.neighbors.push_back(TaskData{entry.spec, std::move(split)});
    }
  }
  if (!target_found) throw config_error("no task with role = target");

  if (cfg.encoder.kind == "precomputed") {
    loaded.features = FeatureMap(
        load_precomputed(cfg.encoder.embeddings_path, cfg.encoder.hashing.dim),
        cfg.encoder.hashing.dim);
  } else {
    HashingEncoder enc(cfg.encoder.hashing);
    auto encode_all = [&](const DatasetSplit& ds) {
      for (const auto* part : {&ds.train, &ds.validation, &ds.test})
        for (const auto& ex : *part)
          loaded.features.insert(ex.example_id, enc.encode(ex.text));
    };
    encode_all(loaded.target.split);
    for (const auto& n : loaded.neighbors) encode_all(n.split);
    for (const auto& z : loaded.zero_shot) encode_all(z.split);
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// single phase
// ---------------------------------------------------------------------------

struct PhaseRun {
  std::string phase;
  ModelParams model;
  double validation_macro_f1 = 0.0;
  double test_macro_f1 = 0.0;
  std::vector<LabelAssignment> test_preds; // aligned with target test split
  nlohmann::json zero_shot = nlohmann::json::object();
  bool has_episodes = false;
  RlMtlResult rl;
};

namespace detail {

// Zero-shot block: the task's full example set, gold labels coarsened into
// the target label space, scored by the target head.
inline nlohmann::json zero_shot_eval(const ModelParams& model,
                                     const LoadedExperiment& loaded) {
  nlohmann::json out = nlohmann::json::object();
  const TaskSpec& target_spec = loaded.target.spec;
  for (const auto& z : loaded.zero_shot) {
    std::vector<LabelAssignment> golds, preds;
    for (const auto* part : {&z.split.train, &z.split.validation, &z.split.test}) {
      for (const auto& ex : *part) {
        LabelAssignment mapped;
        for (const auto& l : ex.gold_labels)
          mapped.insert(z.entry->label_map.at(l));
        golds.push_back(std::move(mapped));
        preds.push_back(predict_one(model, loaded.features.at(ex.example_id),
                                    target_spec));
      }
    }
    out[z.entry->spec.task_id] = {
        {"examples", golds.size()},
        {"macro_f1", macro_f1(golds, preds, target_spec.labels)},
        {"scored_against", target_spec.task_id}};
  }
  return out;
}

inline void finish_phase(PhaseRun& run, const LoadedExperiment& loaded) {
  const auto& target = loaded.target;
  run.validation_macro_f1 = evaluate_macro_f1(run.model, target.split.validation,
                                              target.spec, loaded.features);
  // The test split is touched exactly once per phase, right here.
  run.test_preds = predict(run.model, target.split.test, target.spec,
                           loaded.features);
  std::vector<LabelAssignment> golds;
  golds.reserve(target.split.test.size());
  for (const auto& ex : target.split.test) golds.push_back(ex.gold_labels);
  run.test_macro_f1 = macro_f1(golds, run.test_preds, target.spec.labels);
  run.zero_shot = zero_shot_eval(run.model, loaded);
}

} // namespace detail

// Runs one phase for one seed. `prior_mtl` carries phase 2's parameters when
// this invocation already ran them; otherwise the rlmtl phase falls back to
// the mtl checkpoint on disk.
inline PhaseRun run_phase(const LoadedExperiment& loaded, const std::string& phase,
                          const TrainingConfig& tc,
                          const ModelParams* prior_mtl = nullptr) {
  const ExperimentConfig& cfg = loaded.cfg;
  PhaseRun run;
  run.phase = phase;

  if (phase == "baseline") {
    run.model = train_baseline(loaded.registry, loaded.target, loaded.features,
                               cfg.model, tc);
  } else if (phase == "mtl") {
    run.model = train_mtl(loaded.registry, loaded.neighbors, loaded.target,
                          loaded.features, cfg.model, tc);
  } else if (phase == "rlmtl") {
    ModelParams init;
    if (cfg.mtl_init) {
      if (prior_mtl) {
        init = *prior_mtl; // copied, never mutated in place
      } else {
        const std::string path =
            detail::checkpoint_path(cfg.output_dir, "mtl", tc.seed);
        if (!std::filesystem::exists(path))
          throw config_error(
              "rlmtl starts from the mtl checkpoint, but '" + path +
              "' does not exist; run the mtl phase first or disable mtl_init");
        init = load_checkpoint(path);
        if (init.config.feature_dim != cfg.model.feature_dim)
          throw config_error("mtl checkpoint feature_dim " +
                             std::to_string(init.config.feature_dim) +
                             " does not match configured " +
                             std::to_string(cfg.model.feature_dim));
      }
    } else {
      Rng rng(tc.seed);
      init = init_model(loaded.registry, cfg.model, rng);
    }
    run.rl = run_rl_mtl(loaded.neighbors, loaded.target, init, loaded.features, tc);
    run.model = run.rl.model;
    run.has_episodes = true;
  } else {
    throw config_error("unknown phase '" + phase + "'");
  }

  detail::finish_phase(run, loaded);
  return run;
}

// ---------------------------------------------------------------------------
// experiment runner
// ---------------------------------------------------------------------------

// Executes `phases` for every seed, persists checkpoints and episode logs,
// aggregates mean and population-std macro-F1 over seeds, and emits McNemar
// comparisons between consecutive phases on the target test split. Writes
// <output_dir>/<report_name> and returns the report.
inline nlohmann::json run_phases(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& phases,
                                 const std::string& report_name) {
  const LoadedExperiment loaded = load_experiment(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  nlohmann::json report;
  report["artifact"] = "weft-report-v1";
  report["config"] = resolved_config_json(cfg);
  report["phases"] = phases;

  std::map<std::string, std::vector<double>> val_f1s, test_f1s;
  nlohmann::json results = nlohmann::json::object();
  for (const auto& phase : phases) results[phase]["per_seed"] = nlohmann::json::array();
  nlohmann::json comparisons = nlohmann::json::array();

  std::vector<LabelAssignment> test_golds;
  for (const auto& ex : loaded.target.split.test) test_golds.push_back(ex.gold_labels);

  for (const std::uint64_t seed : cfg.seeds) {
    TrainingConfig tc = cfg.training;
    tc.seed = seed;

    std::map<std::string, PhaseRun> done;
    const ModelParams* prior_mtl = nullptr;
    for (const auto& phase : phases) {
      PhaseRun run = run_phase(loaded, phase, tc, prior_mtl);

      const std::string ckpt = detail::checkpoint_path(cfg.output_dir, phase, seed);
      save_checkpoint(ckpt, run.model);

      nlohmann::json rec;
      rec["seed"] = seed;
      rec["validation_macro_f1"] = run.validation_macro_f1;
      rec["test_macro_f1"] = run.test_macro_f1;
      rec["checkpoint"] = ckpt;
      if (!run.zero_shot.empty()) rec["zero_shot"] = run.zero_shot;
      if (run.has_episodes) {
        const std::string log = detail::episode_log_path(cfg.output_dir, "rlmtl", seed);
        write_episode_log(log, run.rl);
        rec["episode_log"] = log;
      }
      results[phase]["per_seed"].push_back(std::move(rec));
      val_f1s[phase].push_back(run.validation_macro_f1);
      test_f1s[phase].push_back(run.test_macro_f1);

      done.emplace(phase, std::move(run));
      if (phase == "mtl") prior_mtl = &done.at("mtl").model;
    }

    for (std::size_t i = 1; i < phases.size(); ++i) {
      const auto& first = done.at(phases[i - 1]);
      const auto& second = done.at(phases[i]);
      const McNemarResult r =
          mcnemar_test(first.test_preds, second.test_preds, test_golds);
      comparisons.push_back({{"seed", seed},
                             {"first", first.phase},
                             {"second", second.phase},
                             {"task", loaded.target.spec.task_id},
                             {"split", "test"},
                             {"statistic", r.statistic},
                             {"p_value", r.p_value},
                             {"n01", r.n01},
                             {"n10", r.n10},
                             {"exact", r.exact}});
    }
  }

  for (const auto& phase : phases) {
    results[phase]["mean_validation_macro_f1"] = detail::mean_of(val_f1s[phase]);
    results[phase]["std_validation_macro_f1"] = detail::std_of(val_f1s[phase]);
    results[phase]["mean_test_macro_f1"] = detail::mean_of(test_f1s[phase]);
    results[phase]["std_test_macro_f1"] = detail::std_of(test_f1s[phase]);
  }
  report["results"] = results;
  report["comparisons"] = comparisons;

  detail::write_json_file(cfg.output_dir + "/" + report_name, report);
  return report;
}

inline nlohmann::json run_experiment(const ExperimentConfig& cfg) {
  return run_phases(cfg, cfg.phases, "report.json");
}

inline nlohmann::json run_single_phase(const ExperimentConfig& cfg,
                                       const std::string& phase) {
  if (!detail::phase_names().count(phase))
    throw config_error("unknown phase '" + phase + "'");
  return run_phases(cfg, {phase}, "report_" + phase + ".json");
}

// ---------------------------------------------------------------------------
// checkpoint evaluation and comparison
// ---------------------------------------------------------------------------

namespace detail {

inline const TaskData* find_trainable(const LoadedExperiment& loaded,
                                      const std::string& task_id) {
  if (loaded.target.spec.task_id == task_id) return &loaded.target;
  for (const auto& n : loaded.neighbors)
    if (n.spec.task_id == task_id) return &n;
  return nullptr;
}

inline const std::vector<Example>& pick_split(const TaskData& task,
                                              const std::string& split) {
  if (split == "validation") return task.split.validation;
  if (split == "test") return task.split.test;
  throw config_error("split must be 'validation' or 'test', got '" + split + "'");
}

} // namespace detail

inline nlohmann::json evaluate_checkpoint(const ExperimentConfig& cfg,
                                          const std::string& checkpoint,
                                          const std::string& task_id,
                                          const std::string& split) {
  const LoadedExperiment loaded = load_experiment(cfg);
  const TaskData* task = detail::find_trainable(loaded, task_id);
  if (!task)
    throw config_error("task '" + task_id + "' is not a trainable task here");
  const auto& examples = detail::pick_split(*task, split);
  if (examples.empty())
    throw data_error("task '" + task_id + "' has an empty " + split + " split");

  const ModelParams model = load_checkpoint(checkpoint);
  nlohmann::json out;
  out["artifact"] = "weft-evaluation-v1";
  out["checkpoint"] = checkpoint;
  out["task"] = task_id;
  out["split"] = split;
  out["examples"] = examples.size();
  out["macro_f1"] = evaluate_macro_f1(model, examples, task->spec, loaded.features);
  return out;
}

inline nlohmann::json compare_checkpoints(const ExperimentConfig& cfg,
                                          const std::string& checkpoint_a,
                                          const std::string& checkpoint_b,
                                          const std::string& task_id,
                                          const std::string& split) {
  const LoadedExperiment loaded = load_experiment(cfg);
  const TaskData* task = detail::find_trainable(loaded, task_id);
  if (!task)
    throw config_error("task '" + task_id + "' is not a trainable task here");
  const auto& examples = detail::pick_split(*task, split);
  if (examples.empty())
    throw data_error("task '" + task_id + "' has an empty " + split + " split");

  const ModelParams a = load_checkpoint(checkpoint_a);
  const ModelParams b = load_checkpoint(checkpoint_b);
  std::vector<LabelAssignment> golds;
  for (const auto& ex : examples) golds.push_back(ex.gold_labels);
  const auto preds_a = predict(a, examples, task->spec, loaded.features);
  const auto preds_b = predict(b, examples, task->spec, loaded.features);
  const McNemarResult r = mcnemar_test(preds_a, preds_b, golds);

  nlohmann::json out;
  out["artifact"] = "weft-comparison-v1";
  out["checkpoint_a"] = checkpoint_a;
  out["checkpoint_b"] = checkpoint_b;
  out["task"] = task_id;
  out["split"] = split;
  out["examples"] = examples.size();
  out["statistic"] = r.statistic;
  out["p_value"] = r.p_value;
  out["n01"] = r.n01;
  out["n10"] = r.n10;
  out["exact"] = r.exact;
  return out;
}

// ---------------------------------------------------------------------------
// ablations
// ---------------------------------------------------------------------------

// mtl-init: runs the rlmtl phase twice per seed, once initialized from a
// freshly trained mtl model and once from scratch, and reports both rows.
// neighbor-tasks: runs mtl then rlmtl once per single neighbor and reports
// the target-by-neighbor matrix.
inline nlohmann::json run_ablation(const ExperimentConfig& cfg,
                                   const std::string& study) {
  const LoadedExperiment loaded = load_experiment(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  nlohmann::json report;
  report["artifact"] = "weft-ablation-v1";
  report["study"] = study;
  report["config"] = resolved_config_json(cfg);

  auto test_f1_of = [&](const ModelParams& model,
                        std::vector<LabelAssignment>* preds_out = nullptr) {
    std::vector<LabelAssignment> golds;
    for (const auto& ex : loaded.target.split.test) golds.push_back(ex.gold_labels);
    auto preds = predict(model, loaded.target.split.test, loaded.target.spec,
                         loaded.features);
    const double f1 = macro_f1(golds, preds, loaded.target.spec.labels);
    if (preds_out) *preds_out = std::move(preds);
    return f1;
  };

  if (study == "mtl-init") {
    nlohmann::json rows = nlohmann::json::array();
    for (const bool with_init : {true, false}) {
      nlohmann::json per_seed = nlohmann::json::array();
      std::vector<double> f1s;
      for (const std::uint64_t seed : cfg.seeds) {
        TrainingConfig tc = cfg.training;
        tc.seed = seed;
        ModelParams init;
        if (with_init) {
          init = train_mtl(loaded.registry, loaded.neighbors, loaded.target,
                           loaded.features, cfg.model, tc);
        } else {
          Rng rng(tc.seed);
          init = init_model(loaded.registry, cfg.model, rng);
        }
        RlMtlResult rl = run_rl_mtl(loaded.neighbors, loaded.target, init,
                                    loaded.features, tc);
        const std::string tag = std::string("ablation_mtl_init_") +
                                (with_init ? "with" : "without");
        const std::string ckpt = detail::checkpoint_path(cfg.output_dir, tag, seed);
        save_checkpoint(ckpt, rl.model);
        const std::string log = detail::episode_log_path(cfg.output_dir, tag, seed);
        write_episode_log(log, rl);

        const double f1 = test_f1_of(rl.model);
        f1s.push_back(f1);
        per_seed.push_back({{"seed", seed},
                            {"test_macro_f1", f1},
                            {"checkpoint", ckpt},
                            {"episode_log", log}});
      }
      rows.push_back({{"mtl_init", with_init},
                      {"per_seed", per_seed},
                      {"mean_test_macro_f1", detail::mean_of(f1s)},
                      {"std_test_macro_f1", detail::std_of(f1s)}});
    }
    report["rows"] = rows;
    detail::write_json_file(cfg.output_dir + "/ablation_mtl_init.json", report);
    return report;
  }

  if (study == "neighbor-tasks") {
    if (loaded.neighbors.size() < 2)
      throw config_error("the neighbor-tasks study needs at least 2 neighbors, found " +
                         std::to_string(loaded.neighbors.size()));
    nlohmann::json columns = nlohmann::json::array();
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& n : loaded.neighbors) {
      columns.push_back(n.spec.task_id);
      nlohmann::json per_seed = nlohmann::json::array();
      std::vector<double> f1s;
      for (const std::uint64_t seed : cfg.seeds) {
        TrainingConfig tc = cfg.training;
        tc.seed = seed;
        tc.neighbor_order = {n.spec.task_id};
        const std::vector<TaskData> solo = {n};
        ModelParams init = cfg.mtl_init
                               ? train_mtl(loaded.registry, solo, loaded.target,
                                           loaded.features, cfg.model, tc)
                               : [&] {
                                   Rng rng(tc.seed);
                                   return init_model(loaded.registry, cfg.model, rng);
                                 }();
        RlMtlResult rl = run_rl_mtl(solo, loaded.target, init, loaded.features, tc);
        const std::string tag = "ablation_neighbor_" + n.spec.task_id;
        const std::string ckpt = detail::checkpoint_path(cfg.output_dir, tag, seed);
        save_checkpoint(ckpt, rl.model);
        const std::string log = detail::episode_log_path(cfg.output_dir, tag, seed);
        write_episode_log(log, rl);

        const double f1 = test_f1_of(rl.model);
        f1s.push_back(f1);
        per_seed.push_back({{"seed", seed},
                            {"test_macro_f1", f1},
                            {"checkpoint", ckpt},
                            {"episode_log", log}});
      }
      cells[n.spec.task_id] = {{"per_seed", per_seed},
                               {"mean_test_macro_f1", detail::mean_of(f1s)},
                               {"std_test_macro_f1", detail::std_of(f1s)}};
    }
    report["columns"] = columns;
    report["rows"] = nlohmann::json::array();
    report["rows"].push_back(
        {{"target", loaded.target.spec.task_id}, {"cells", cells}});
    detail::write_json_file(cfg.output_dir + "/ablation_neighbor_tasks.json", report);
    return report;
  }

  throw config_error("unknown ablation study '" + study +
                     "'; expected mtl-init or neighbor-tasks");
}

// ---------------------------------------------------------------------------
// synthetic workspace generation
// ---------------------------------------------------------------------------

// Materializes the synthetic suite as dataset files plus a precomputed
// embedding table and writes a ready-to-run experiment config beside them.
// Returns the path of the generated config.
inline std::string run_synth(const ExperimentConfig& cfg) {
  if (!cfg.synth.present)
    throw config_error("configuration has no [synth] section");
  const SyntheticSuite suite = make_synthetic_suite(cfg.synth.generator);
  const std::string& dir = cfg.synth.output_dir;
  std::filesystem::create_directories(dir);

  for (const auto& task : suite.tasks)
    write_dataset(dir + "/" + task.spec.task_id + ".jsonl", task.split);
  write_precomputed(dir + "/embeddings.tsv", suite.features);

  std::ostringstream ini;
  ini << "[experiment]\n";
  ini << "name = " << cfg.name << "\n";
  ini << "output_dir = .\n";
  ini << "phases =";
  for (const auto& p : cfg.phases) ini << ' ' << p;
  ini << "\nseeds =";
  for (const auto s : cfg.seeds) ini << ' ' << s;
  ini << "\nmtl_init = " << (cfg.mtl_init ? "true" : "false") << "\n\n";

  ini << "[encoder]\n";
  ini << "kind = precomputed\n";
  ini << "dim = " << cfg.synth.generator.feature_dim << "\n";
  ini << "embeddings = embeddings.tsv\n\n";

  ini << "[model]\n";
  ini << "hidden_dim = " << cfg.model.hidden_dim << "\n";
  ini << "depth = " << cfg.model.depth << "\n";
  ini << "actor_hidden = " << cfg.model.actor_hidden << "\n";
  ini << "critic_hidden = " << cfg.model.critic_hidden << "\n\n";

  const auto& tc = cfg.training;
  ini << "[training]\n";
  ini << "learning_rate = " << tc.learning_rate << "\n";
  ini << "agent_learning_rate = " << tc.agent_learning_rate << "\n";
  ini << "epochs_per_phase = " << tc.epochs_per_phase << "\n";
  ini << "batch_size = " << tc.batch_size << "\n";
  ini << "episodes = " << tc.episodes << "\n";
  ini << "epsilon = " << tc.epsilon << "\n";
  ini << "eval_subsample = " << tc.eval_subsample << "\n";
  ini << "final_finetune = " << (tc.final_finetune ? "true" : "false") << "\n";
  ini << "literal_value_loss = " << (tc.literal_value_loss ? "true" : "false")
      << "\n";

  for (const auto& task : suite.tasks) {
    ini << "\n[task " << task.spec.task_id << "]\n";
    ini << "role = " << to_string(task.spec.role) << "\n";
    ini << "head = " << to_string(task.spec.head_kind) << "\n";
    ini << "labels =";
    for (const auto& l : task.spec.labels) ini << ' ' << l;
    ini << "\ndata = " << task.spec.task_id << ".jsonl\n";
  }

  const std::string config_path = dir + "/experiment.ini";
  detail::write_text_file(config_path, ini.str());
  return config_path;
}

// ---------------------------------------------------------------------------
// annotation pipeline (prepare-data) and episode-log auditing
// ---------------------------------------------------------------------------

// Raw annotation file -> gold dataset file: per-question 2-of-3 majority,
// precedence mapping to the category, unnaturalness kept as metadata.
// Records must carry texts; gold labels cannot be attached to nothing.
inline DatasetStats prepare_fine_stereotype(const std::string& raw_path,
                                            const std::string& out_path,
                                            const std::string& task_id = "stereotype-fine") {
  std::map<std::string, std::string> texts;
  const auto records = load_annotations(raw_path, &texts);
  const auto gold = aggregate_annotations(records);

  DatasetSplit ds;
  for (const auto& [id, label] : gold) {
    auto t = texts.find(id);
    if (t == texts.end() || t->second.empty())
      throw data_error("annotation record '" + id +
                       "' carries no text; cannot emit a dataset record");
    Example ex;
    ex.example_id = id;
    ex.text = t->second;
    ex.task_id = task_id;
    ex.gold_labels = {to_string(label.category)};
    ex.metadata["unnatural"] = label.unnatural ? "true" : "false";
    ds.train.push_back(std::move(ex));
  }
  ds.check_unique_ids();
  write_dataset(out_path, ds);
  return dataset_stats(ds);
}

// First line of an episode log: the reward-evaluation subset.
inline std::vector<std::string>
read_reward_eval_ids(const std::string& log_path) {
  std::ifstream in(log_path);
  if (!in) throw data_error("cannot open episode log: " + log_path);
  std::string line;
  if (!std::getline(in, line))
    throw data_error("episode log is empty: " + log_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw parse_error("episode log header: " + std::string(e.what()));
  }
  if (!j.contains("reward_eval_example_ids"))
    throw data_error("episode log lacks a reward-evaluation header: " + log_path);
  return j["reward_eval_example_ids"].get<std::vector<std::string>>();
}

// Leakage audit: no test-split id may appear in the reward-evaluation
// record of any episode log. Returns offending ids.
inline std::vector<std::string>
audit_episode_log(const std::string& log_path,
                  const std::set<std::string>& test_ids) {
  std::vector<std::string> violations;
  for (const auto& id : read_reward_eval_ids(log_path))
    if (test_ids.count(id)) violations.push_back(id);
  return violations;
}

} // namespace weft
