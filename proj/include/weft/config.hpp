#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weft/corpus.hpp"
#include "weft/encoder.hpp"
#include "weft/error.hpp"
#include "weft/mtl.hpp"

namespace weft {

// Experiment configuration: a flat key-value text file with one section per
// module. Unknown sections, unknown keys, and malformed values are all
// configuration errors; silence never changes an experiment.
//
//   [experiment]  name, output_dir, phases, seeds, mtl_init, target_task
//   [encoder]     kind, dim, ngram_min, ngram_max, embeddings
//   [model]       hidden_dim, depth, actor_hidden, critic_hidden
//   [training]    learning_rate, agent_learning_rate, epochs_per_phase,
//                 batch_size, episodes, epsilon, eval_subsample,
//                 neighbor_order, final_finetune, literal_value_loss
//   [task <id>]   role, head, labels, data, map (zero-shot only)
//   [synth]       n_tasks, overlap, noise_fraction, feature_dim, seed,
//                 target_train/validation/test, neighbor_train/validation/test,
//                 output_dir
//
// Relative paths are resolved against the directory containing the file.

struct EncoderSettings {
  std::string kind = "hashing"; // "hashing" or "precomputed"
  EncoderConfig hashing;
  std::string embeddings_path; // required when kind == "precomputed"
};

// A task entry as configured. Zero-shot entries are never trained; their
// examples are scored against the target head through label_map.
struct TaskEntry {
  TaskSpec spec;
  std::string data_path;
  bool zero_shot = false;
  std::map<std::string, std::string> label_map; // this task's label -> target label
};

struct SynthSettings {
  SyntheticConfig generator;
  std::string output_dir = "synth-out";
  bool present = false;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string output_dir = ".";
  std::vector<std::string> phases = {"baseline", "mtl", "rlmtl"};
  std::vector<std::uint64_t> seeds = {1};
  bool mtl_init = true; // phase 3 starts from phase 2's parameters
  EncoderSettings encoder;
  ModelConfig model;
  TrainingConfig training;
  std::vector<TaskEntry> tasks; // file order; defines default neighbor_order
  SynthSettings synth;

  const TaskEntry& target() const {
    for (const auto& t : tasks)
      if (!t.zero_shot && t.spec.role == TaskRole::target) return t;
    throw config_error("no task with role = target");
  }

  // Tasks that participate in training phases, in file order.
  std::vector<const TaskEntry*> training_neighbors() const {
    std::vector<const TaskEntry*> out;
    for (const auto& t : tasks)
      if (!t.zero_shot && t.spec.role != TaskRole::target) out.push_back(&t);
    return out;
  }

  std::vector<const TaskEntry*> zero_shot_tasks() const {
    std::vector<const TaskEntry*> out;
    for (const auto& t : tasks)
      if (t.zero_shot) out.push_back(&t);
    return out;
  }
};

namespace detail {

struct IniEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct IniSection {
  std::string name;
  std::string arg;
  int line = 0;
  std::vector<IniEntry> entries;
};

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<IniSection> parse_ini(const std::string& text) {
  std::vector<IniSection> sections;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw config_error("config line " + std::to_string(line_no) +
                           ": unterminated section header");
      const std::string inner = trim(t.substr(1, t.size() - 2));
      IniSection sec;
      sec.line = line_no;
      const std::size_t sp = inner.find_first_of(" \t");
      if (sp == std::string::npos) {
        sec.name = inner;
      } else {
        sec.name = inner.substr(0, sp);
        sec.arg = trim(inner.substr(sp));
      }
      if (sec.name.empty())
        throw config_error("config line " + std::to_string(line_no) +
                           ": empty section name");
      sections.push_back(std::move(sec));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) +
                         ": expected 'key = value'");
    if (sections.empty())
      throw config_error("config line " + std::to_string(line_no) +
                         ": key outside any section");
    IniEntry e;
    e.key = trim(t.substr(0, eq));
    e.value = trim(t.substr(eq + 1));
    e.line = line_no;
    if (e.key.empty())
      throw config_error("config line " + std::to_string(line_no) + ": empty key");
    sections.back().entries.push_back(std::move(e));
  }
  return sections;
}

inline config_error bad_value(const IniEntry& e, const std::string& want) {
  return config_error("config line " + std::to_string(e.line) + ": key '" + e.key +
                      "' needs " + want + ", got '" + e.value + "'");
}

inline long long to_int(const IniEntry& e) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw bad_value(e, "an integer");
  }
}

inline double to_double(const IniEntry& e) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw bad_value(e, "a number");
  }
}

inline bool to_bool(const IniEntry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw bad_value(e, "'true' or 'false'");
}

// Lists are whitespace- or comma-separated.
inline std::vector<std::string> to_list(const IniEntry& e) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : e.value) {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<std::uint64_t> to_seed_list(const IniEntry& e) {
  std::vector<std::uint64_t> out;
  for (const auto& tok : to_list(e)) {
    // stoull accepts and wraps a leading minus sign; reject it up front
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
      throw bad_value(e, "a list of non-negative integers");
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw bad_value(e, "a list of non-negative integers");
    }
  }
  return out;
}

inline std::string join_path(const std::string& base, const std::string& rel) {
  if (rel.empty() || rel.front() == '/' || base.empty()) return rel;
  if (base.back() == '/') return base + rel;
  return base + "/" + rel;
}

inline const std::set<std::string>& phase_names() {
  static const std::set<std::string> names = {"baseline", "mtl", "rlmtl"};
  return names;
}

} // namespace detail

// Parses and cross-validates a configuration. `base_dir` anchors relative
// paths; `require_tasks` is dropped by the synth command, whose configs may
// describe only a generator.
inline ExperimentConfig parse_experiment_config_text(const std::string& text,
                                                     const std::string& base_dir,
                                                     bool require_tasks = true) {
  using detail::bad_value;
  ExperimentConfig cfg;
  bool phases_set = false;
  std::set<std::string> seen_plain;
  std::set<std::string> seen_task_ids;
  std::string target_task_key; // [experiment] target_task, checked at the end

  for (const auto& sec : detail::parse_ini(text)) {
    if (sec.name == "task") {
      if (sec.arg.empty())
        throw config_error("config line " + std::to_string(sec.line) +
                           ": [task] needs an id, e.g. [task coarse]");
      if (!seen_task_ids.insert(sec.arg).second)
        throw config_error("duplicate section [task " + sec.arg + "]");
      TaskEntry entry;
      entry.spec.task_id = sec.arg;
      bool role_set = false, head_set = false, labels_set = false, data_set = false;
      for (const auto& e : sec.entries) {
        if (e.key == "role") {
          role_set = true;
          if (e.value == "zero-shot") {
            entry.zero_shot = true;
            entry.spec.role = TaskRole::train_only; // placeholder, never trained
          } else {
            try {
              entry.spec.role = task_role_from_string(e.value);
            } catch (const config_error&) {
              throw bad_value(e, "one of target|neighbor|train-only|zero-shot");
            }
          }
        } else if (e.key == "head") {
          head_set = true;
          entry.spec.head_kind = head_kind_from_string(e.value);
        } else if (e.key == "labels") {
          labels_set = true;
          entry.spec.labels = detail::to_list(e);
        } else if (e.key == "data") {
          data_set = true;
          entry.data_path = detail::join_path(base_dir, e.value);
        } else if (e.key == "map") {
          for (const auto& pair : detail::to_list(e)) {
            const std::size_t c = pair.find(':');
            if (c == std::string::npos || c == 0 || c + 1 == pair.size())
              throw bad_value(e, "from:to pairs");
            entry.label_map[pair.substr(0, c)] = pair.substr(c + 1);
          }
        } else {
          throw config_error("config line " + std::to_string(e.line) +
                             ": unknown key '" + e.key + "' in [task " + sec.arg + "]");
        }
      }
      if (!role_set || !head_set || !labels_set || !data_set)
        throw config_error("[task " + sec.arg +
                           "] needs role, head, labels, and data");
      entry.spec.validate();
      cfg.tasks.push_back(std::move(entry));
      continue;
    }

    if (!sec.arg.empty())
      throw config_error("config line " + std::to_string(sec.line) + ": section [" +
                         sec.name + "] takes no argument");
    if (!seen_plain.insert(sec.name).second)
      throw config_error("duplicate section [" + sec.name + "]");

    if (sec.name == "experiment") {
      for (const auto& e : sec.entries) {
        if (e.key == "name") cfg.name = e.value;
        else if (e.key == "output_dir") cfg.output_dir = detail::join_path(base_dir, e.value);
        else if (e.key == "phases") {
          cfg.phases = detail::to_list(e);
          phases_set = true;
        } else if (e.key == "seeds") cfg.seeds = detail::to_seed_list(e);
        else if (e.key == "mtl_init") cfg.mtl_init = detail::to_bool(e);
        else if (e.key == "target_task") target_task_key = e.value;
        else
          throw config_error("config line " + std::to_string(e.line) +
                             ": unknown key '" + e.key + "' in [experiment]");
      }
    } else if (sec.name == "encoder") {
      for (const auto& e : sec.entries) {
        if (e.key == "kind") {
          if (e.value != "hashing" && e.value != "precomputed")
            throw bad_value(e, "'hashing' or 'precomputed'");
          cfg.encoder.kind = e.value;
        } else if (e.key == "dim") cfg.encoder.hashing.dim = static_cast<int>(detail::to_int(e));
        else if (e.key == "ngram_min") cfg.encoder.hashing.ngram_min = static_cast<int>(detail::to_int(e));
        else if (e.key == "ngram_max") cfg.encoder.hashing.ngram_max = static_cast<int>(detail::to_int(e));
        else if (e.key == "embeddings") cfg.encoder.embeddings_path = detail::join_path(base_dir, e.value);
        else
          throw config_error("config line " + std::to_string(e.line) +
                             ": unknown key '" + e.key + "' in [encoder]");
      }
    } else if (sec.name == "model") {
      for (const auto& e : sec.entries) {
        if (e.key == "hidden_dim") cfg.model.hidden_dim = static_cast<int>(detail::to_int(e));
        else if (e.key == "depth") cfg.model.depth = static_cast<int>(detail::to_int(e));
        else if (e.key == "actor_hidden") cfg.model.actor_hidden = static_cast<int>(detail::to_int(e));
        else if (e.key == "critic_hidden") cfg.model.critic_hidden = static_cast<int>(detail::to_int(e));
        else
          throw config_error("config line " + std::to_string(e.line) +
                             ": unknown key '" + e.key + "' in [model]");
      }
    } else if (sec.name == "training") {
      for (const auto& e : sec.entries) {
        if (e.key == "learning_rate") cfg.training.learning_rate = detail::to_double(e);
        else if (e.key == "agent_learning_rate") cfg.training.agent_learning_rate = detail::to_double(e);
        else if (e.key == "epochs_per_phase") cfg.training.epochs_per_phase = static_cast<int>(detail::to_int(e));
        else if (e.key == "batch_size") cfg.training.batch_size = static_cast<int>(detail::to_int(e));
        else if (e.key == "episodes") cfg.training.episodes = static_cast<int>(detail::to_int(e));
        else if (e.key == "epsilon") cfg.training.epsilon = detail::to_double(e);
        else if (e.key == "eval_subsample") cfg.training.eval_subsample = static_cast<int>(detail::to_int(e));
        else if (e.key == "neighbor_order") cfg.training.neighbor_order = detail::to_list(e);
        else if (e.key == "final_finetune") cfg.training.final_finetune = detail::to_bool(e);
        else if (e.key == "literal_value_loss") cfg.training.literal_value_loss = detail::to_bool(e);
        else
          throw config_error("config line " + std::to_string(e.line) +
                             ": unknown key '" + e.key + "' in [training]");
      }
    } else if (sec.name == "synth") {
      cfg.synth.present = true;
      auto& g = cfg.synth.generator;
      for (const auto& e : sec.entries) {
        if (e.key == "n_tasks") g.n_tasks = static_cast<int>(detail::to_int(e));
        else if (e.key == "overlap") g.overlap = detail::to_double(e);
        else if (e.key == "noise_fraction") g.noise_fraction = detail::to_double(e);
        else if (e.key == "feature_dim") g.feature_dim = static_cast<int>(detail::to_int(e));
        else if (e.key == "seed") g.seed = static_cast<std::uint64_t>(detail::to_int(e));
        else if (e.key == "target_train") g.target_sizes.train = static_cast<int>(detail::to_int(e));
        else if (e.key == "target_validation") g.target_sizes.validation = static_cast<int>(detail::to_int(e));
        else if (e.key == "target_test") g.target_sizes.test = static_cast<int>(detail::to_int(e));
        else if (e.key == "neighbor_train") g.neighbor_sizes.train = static_cast<int>(detail::to_int(e));
        else if (e.key == "neighbor_validation") g.neighbor_sizes.validation = static_cast<int>(detail::to_int(e));
        else if (e.key == "neighbor_test") g.neighbor_sizes.test = static_cast<int>(detail::to_int(e));
        else if (e.key == "output_dir") cfg.synth.output_dir = detail::join_path(base_dir, e.value);
        else
          throw config_error("config line " + std::to_string(e.line) +
                             ": unknown key '" + e.key + "' in [synth]");
      }
    } else {
      throw config_error("config line " + std::to_string(sec.line) +
                         ": unknown section [" + sec.name + "]");
    }
  }

  // Cross-section checks and default materialization.
  if (cfg.phases.empty()) throw config_error("phases must not be empty");
  {
    std::set<std::string> seen;
    for (const auto& p : cfg.phases) {
      if (!detail::phase_names().count(p))
        throw config_error("unknown phase '" + p + "'");
      if (!seen.insert(p).second)
        throw config_error("phase '" + p + "' listed twice");
    }
  }
  (void)phases_set;
  if (cfg.seeds.empty()) throw config_error("seeds must not be empty");
  cfg.encoder.hashing.validate();
  if (cfg.encoder.kind == "precomputed" && cfg.encoder.embeddings_path.empty())
    throw config_error("encoder kind 'precomputed' needs an embeddings path");
  cfg.model.feature_dim = cfg.encoder.hashing.dim;
  cfg.model.validate();
  cfg.training.validate();

  if (cfg.tasks.empty()) {
    if (require_tasks)
      throw config_error("configuration defines no [task] sections");
    return cfg;
  }

  int n_targets = 0;
  for (const auto& t : cfg.tasks)
    if (!t.zero_shot && t.spec.role == TaskRole::target) ++n_targets;
  if (n_targets != 1)
    throw config_error("exactly one task must have role = target, found " +
                       std::to_string(n_targets));
  const TaskEntry& target = cfg.target();
  if (!target_task_key.empty() && target_task_key != target.spec.task_id)
    throw config_error("target_task = '" + target_task_key +
                       "' does not name the role = target task '" +
                       target.spec.task_id + "'");

  // Zero-shot label maps: default to the stereotype coarsening when it
  // applies; otherwise an explicit map is mandatory.
  const std::set<std::string> target_labels(target.spec.labels.begin(),
                                            target.spec.labels.end());
  for (auto& t : cfg.tasks) {
    if (!t.zero_shot) continue;
    if (t.label_map.empty() && target_labels.count("stereotype") &&
        target_labels.count("non-stereotype")) {
      for (const auto& l : t.spec.labels) {
        if (l == "explicit-stereotype" || l == "implicit-stereotype" ||
            l == "stereotype")
          t.label_map[l] = "stereotype";
        else if (l == "non-stereotype")
          t.label_map[l] = "non-stereotype";
      }
    }
    for (const auto& l : t.spec.labels) {
      auto it = t.label_map.find(l);
      if (it == t.label_map.end())
        throw config_error("zero-shot task '" + t.spec.task_id +
                           "': no mapping for label '" + l + "'");
      if (!target_labels.count(it->second))
        throw config_error("zero-shot task '" + t.spec.task_id + "': label '" + l +
                           "' maps to '" + it->second +
                           "', which is not a target label");
    }
  }

  // Resolved neighbor order defaults to file order over trainable
  // non-target tasks; train_mtl re-validates against the actual task set.
  if (cfg.training.neighbor_order.empty())
    for (const auto* n : cfg.training_neighbors())
      cfg.training.neighbor_order.push_back(n->spec.task_id);

  return cfg;
}

inline ExperimentConfig parse_experiment_config(const std::string& path,
                                                bool require_tasks = true) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string base_dir = ".";
  const std::size_t slash = path.find_last_of('/');
  if (slash != std::string::npos) base_dir = path.substr(0, slash);
  return parse_experiment_config_text(buf.str(), base_dir, require_tasks);
}

// Full resolved configuration (all defaults materialized) as recorded in
// every report. Tasks stay an array so file order survives.
inline nlohmann::json resolved_config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["output_dir"] = cfg.output_dir;
  j["phases"] = cfg.phases;
  j["seeds"] = cfg.seeds;
  j["mtl_init"] = cfg.mtl_init;
  j["encoder"] = {{"kind", cfg.encoder.kind},
                  {"dim", cfg.encoder.hashing.dim},
                  {"ngram_min", cfg.encoder.hashing.ngram_min},
                  {"ngram_max", cfg.encoder.hashing.ngram_max},
                  {"embeddings", cfg.encoder.embeddings_path}};
  j["model"] = {{"feature_dim", cfg.model.feature_dim},
                {"hidden_dim", cfg.model.hidden_dim},
                {"depth", cfg.model.depth},
                {"actor_hidden", cfg.model.actor_hidden},
                {"critic_hidden", cfg.model.critic_hidden}};
  j["training"] = {{"learning_rate", cfg.training.learning_rate},
                   {"agent_learning_rate", cfg.training.agent_learning_rate},
                   {"epochs_per_phase", cfg.training.epochs_per_phase},
                   {"batch_size", cfg.training.batch_size},
                   {"episodes", cfg.training.episodes},
                   {"epsilon", cfg.training.epsilon},
                   {"eval_subsample", cfg.training.eval_subsample},
                   {"neighbor_order", cfg.training.neighbor_order},
                   {"final_finetune", cfg.training.final_finetune},
                   {"literal_value_loss", cfg.training.literal_value_loss}};
  j["tasks"] = nlohmann::json::array();
  for (const auto& t : cfg.tasks) {
    nlohmann::json tj;
    tj["task_id"] = t.spec.task_id;
    tj["role"] = t.zero_shot ? "zero-shot" : to_string(t.spec.role);
    tj["head"] = to_string(t.spec.head_kind);
    tj["labels"] = t.spec.labels;
    tj["data"] = t.data_path;
    if (t.zero_shot) tj["map"] = t.label_map;
    j["tasks"].push_back(std::move(tj));
  }
  return j;
}

} // namespace weft
