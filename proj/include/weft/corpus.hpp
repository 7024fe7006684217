#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weft/error.hpp"
#include "weft/rng.hpp"

namespace weft {

enum class HeadKind { single_class, multi_label };
enum class TaskRole { target, neighbor, train_only };

inline std::string to_string(HeadKind k) {
  return k == HeadKind::single_class ? "single-class" : "multi-label";
}

inline std::string to_string(TaskRole r) {
  switch (r) {
    case TaskRole::target: return "target";
    case TaskRole::neighbor: return "neighbor";
    default: return "train-only";
  }
}

inline HeadKind head_kind_from_string(const std::string& s) {
  if (s == "single-class") return HeadKind::single_class;
  if (s == "multi-label") return HeadKind::multi_label;
  throw config_error("unknown head kind: " + s);
}

inline TaskRole task_role_from_string(const std::string& s) {
  if (s == "target") return TaskRole::target;
  if (s == "neighbor") return TaskRole::neighbor;
  if (s == "train-only") return TaskRole::train_only;
  throw config_error("unknown task role: " + s);
}

struct TaskSpec {
  std::string task_id;
  HeadKind head_kind = HeadKind::single_class;
  std::vector<std::string> labels; // ordered; index order breaks prediction ties
  TaskRole role = TaskRole::neighbor;

  int label_index(const std::string& name) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == name) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    if (task_id.empty()) throw config_error("task with empty task_id");
    if (labels.empty())
      throw config_error("task '" + task_id + "' has no labels");
    std::set<std::string> seen;
    for (const auto& l : labels)
      if (!seen.insert(l).second)
        throw config_error("task '" + task_id + "' has duplicate label '" + l + "'");
    if (head_kind == HeadKind::single_class && labels.size() < 2)
      throw config_error("single-class task '" + task_id + "' needs at least 2 labels");
  }
};

struct Example {
  std::string example_id;
  std::string text;
  std::string task_id;
  std::set<std::string> gold_labels;
  std::map<std::string, std::string> metadata;

  void validate_against(const TaskSpec& spec) const {
    if (example_id.empty())
      throw schema_error("example with empty example_id");
    if (text.empty())
      throw schema_error("example '" + example_id + "' has empty text");
    for (const auto& l : gold_labels)
      if (spec.label_index(l) < 0)
        throw schema_error("example '" + example_id + "' carries label '" + l +
                           "' outside task '" + spec.task_id + "'");
    if (spec.head_kind == HeadKind::single_class && gold_labels.size() != 1)
      throw schema_error("example '" + example_id + "' has " +
                         std::to_string(gold_labels.size()) +
                         " gold labels under single-class task '" +
                         spec.task_id + "'");
  }
};

struct DatasetSplit {
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;

  std::size_t size() const {
    return train.size() + validation.size() + test.size();
  }

  void check_unique_ids() const {
    std::set<std::string> seen;
    for (const auto* part : {&train, &validation, &test})
      for (const auto& ex : *part)
        if (!seen.insert(ex.example_id).second)
          throw integrity_error("duplicate example_id '" + ex.example_id + "'");
  }
};

struct AnnotatorAnswers {
  bool q1 = false; // over-simplified belief expressed intentionally
  bool q2 = false; // unintentional widely-known stereotypical association
  bool q3 = false; // unlikely to occur in regular discourse
};

struct AnnotationRecord {
  std::string example_id;
  std::array<AnnotatorAnswers, 3> answers;
};

enum class StereotypeCategory {
  explicit_stereotype,
  implicit_stereotype,
  non_stereotype
};

inline std::string to_string(StereotypeCategory c) {
  switch (c) {
    case StereotypeCategory::explicit_stereotype: return "explicit-stereotype";
    case StereotypeCategory::implicit_stereotype: return "implicit-stereotype";
    default: return "non-stereotype";
  }
}

struct StereotypeLabel {
  StereotypeCategory category = StereotypeCategory::non_stereotype;
  bool unnatural = false;
};

// ---------------------------------------------------------------------------
// dataset files: one JSON object per line
// required: example_id, text, task_id (strings), labels (array of strings)
// optional: split in {train, validation, test} (default train), metadata
// ---------------------------------------------------------------------------

namespace detail {

inline std::string require_string(const nlohmann::json& j, const char* key,
                                  std::size_t line_no) {
  if (!j.contains(key) || !j[key].is_string())
    throw parse_error("line " + std::to_string(line_no) +
                      ": missing or non-string field '" + key + "'");
  return j[key].get<std::string>();
}

inline std::string scalar_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) {
    std::ostringstream os;
    os << v.get<double>();
    return os.str();
  }
  return v.dump();
}

} // namespace detail

inline Example parse_dataset_record(const std::string& line,
                                    std::size_t line_no,
                                    std::string* split_out = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw parse_error("line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!j.is_object())
    throw parse_error("line " + std::to_string(line_no) + ": record is not an object");

  Example ex;
  ex.example_id = detail::require_string(j, "example_id", line_no);
  ex.text = detail::require_string(j, "text", line_no);
  ex.task_id = detail::require_string(j, "task_id", line_no);

  if (!j.contains("labels") || !j["labels"].is_array())
    throw parse_error("line " + std::to_string(line_no) +
                      ": missing or non-array field 'labels'");
  for (const auto& l : j["labels"]) {
    if (!l.is_string())
      throw parse_error("line " + std::to_string(line_no) +
                        ": non-string entry in 'labels'");
    ex.gold_labels.insert(l.get<std::string>());
  }

  std::string split = "train";
  if (j.contains("split")) {
    if (!j["split"].is_string())
      throw parse_error("line " + std::to_string(line_no) + ": non-string 'split'");
    split = j["split"].get<std::string>();
    if (split != "train" && split != "validation" && split != "test")
      throw parse_error("line " + std::to_string(line_no) + ": unknown split '" +
                        split + "'");
  }
  if (split_out) *split_out = split;

  if (j.contains("metadata")) {
    if (!j["metadata"].is_object())
      throw parse_error("line " + std::to_string(line_no) + ": non-object 'metadata'");
    for (auto it = j["metadata"].begin(); it != j["metadata"].end(); ++it)
      ex.metadata[it.key()] = detail::scalar_to_string(it.value());
  }

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "example_id" && k != "text" && k != "task_id" && k != "labels" &&
        k != "split" && k != "metadata")
      throw parse_error("line " + std::to_string(line_no) + ": unknown field '" +
                        k + "'");
  }
  return ex;
}

inline DatasetSplit load_dataset(const std::string& path, const TaskSpec& spec) {
  spec.validate();
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset file: " + path);

  DatasetSplit ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string split;
    Example ex = parse_dataset_record(line, line_no, &split);
    if (ex.task_id != spec.task_id)
      throw schema_error("line " + std::to_string(line_no) + ": task_id '" +
                         ex.task_id + "' does not match task '" + spec.task_id + "'");
    ex.validate_against(spec);
    if (split == "train") ds.train.push_back(std::move(ex));
    else if (split == "validation") ds.validation.push_back(std::move(ex));
    else ds.test.push_back(std::move(ex));
  }
  ds.check_unique_ids();
  return ds;
}

// Loader for inspection commands that have no task spec at hand: record
// shape and id uniqueness are still enforced, label sets are not.
inline DatasetSplit load_dataset_any(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset file: " + path);
  DatasetSplit ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string split;
    Example ex = parse_dataset_record(line, line_no, &split);
    if (split == "train") ds.train.push_back(std::move(ex));
    else if (split == "validation") ds.validation.push_back(std::move(ex));
    else ds.test.push_back(std::move(ex));
  }
  ds.check_unique_ids();
  return ds;
}

inline void write_dataset(const std::string& path, const DatasetSplit& ds) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write dataset file: " + path);
  auto dump_part = [&](const std::vector<Example>& part, const char* split) {
    for (const auto& ex : part) {
      nlohmann::json j;
      j["example_id"] = ex.example_id;
      j["text"] = ex.text;
      j["task_id"] = ex.task_id;
      j["labels"] = std::vector<std::string>(ex.gold_labels.begin(),
                                             ex.gold_labels.end());
      j["split"] = split;
      if (!ex.metadata.empty()) j["metadata"] = ex.metadata;
      out << j.dump() << '\n';
    }
  };
  dump_part(ds.train, "train");
  dump_part(ds.validation, "validation");
  dump_part(ds.test, "test");
}

// ---------------------------------------------------------------------------
// annotation files: one JSON object per line
// {"example_id": ..., "answers": [{"q1":bool,"q2":bool,"q3":bool} x3]}
// extra "text" is tolerated and captured for prepare-data.
// ---------------------------------------------------------------------------

inline std::vector<AnnotationRecord>
load_annotations(const std::string& path,
                 std::map<std::string, std::string>* texts = nullptr) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open annotation file: " + path);
  std::vector<AnnotationRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    AnnotationRecord rec;
    rec.example_id = detail::require_string(j, "example_id", line_no);
    if (!j.contains("answers") || !j["answers"].is_array())
      throw parse_error("line " + std::to_string(line_no) +
                        ": missing or non-array field 'answers'");
    if (j["answers"].size() != 3)
      throw integrity_error("line " + std::to_string(line_no) + ": record '" +
                            rec.example_id + "' has " +
                            std::to_string(j["answers"].size()) +
                            " annotator tuples, expected 3");
    for (std::size_t a = 0; a < 3; ++a) {
      const auto& t = j["answers"][a];
      for (const char* q : {"q1", "q2", "q3"})
        if (!t.contains(q) || !t[q].is_boolean())
          throw parse_error("line " + std::to_string(line_no) +
                            ": annotator tuple missing boolean '" + std::string(q) + "'");
      rec.answers[a] = {t["q1"].get<bool>(), t["q2"].get<bool>(), t["q3"].get<bool>()};
    }
    if (texts && j.contains("text") && j["text"].is_string())
      (*texts)[rec.example_id] = j["text"].get<std::string>();
    records.push_back(std::move(rec));
  }
  return records;
}

// Precedence: an intentional over-simplified belief wins, then an
// unintentional association, else non-stereotype. q3 is the orthogonal
// unnaturalness flag.
inline StereotypeLabel map_questions_to_label(bool q1, bool q2, bool q3) {
  StereotypeLabel label;
  if (q1) label.category = StereotypeCategory::explicit_stereotype;
  else if (q2) label.category = StereotypeCategory::implicit_stereotype;
  else label.category = StereotypeCategory::non_stereotype;
  label.unnatural = q3;
  return label;
}

// Per question, the answer held by at least 2 of the 3 annotators.
inline std::map<std::string, StereotypeLabel>
aggregate_annotations(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, StereotypeLabel> out;
  for (const auto& rec : records) {
    int y1 = 0, y2 = 0, y3 = 0;
    for (const auto& a : rec.answers) {
      y1 += a.q1 ? 1 : 0;
      y2 += a.q2 ? 1 : 0;
      y3 += a.q3 ? 1 : 0;
    }
    out[rec.example_id] = map_questions_to_label(y1 >= 2, y2 >= 2, y3 >= 2);
  }
  return out;
}

struct DatasetStats {
  std::map<std::string, std::size_t> per_label;
  std::size_t total = 0;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

inline DatasetStats dataset_stats(const DatasetSplit& ds) {
  DatasetStats s;
  s.train = ds.train.size();
  s.validation = ds.validation.size();
  s.test = ds.test.size();
  for (const auto* part : {&ds.train, &ds.validation, &ds.test}) {
    for (const auto& ex : *part) {
      ++s.total;
      for (const auto& l : ex.gold_labels) ++s.per_label[l];
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// coarse stereotype set: merge positive diagnostic sources with negatives,
// dedup by example_id, seeded shuffle, ratio split
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;

  void validate() const {
    if (train < 0 || validation < 0 || test < 0 ||
        std::abs(train + validation + test - 1.0) > 1e-9)
      throw config_error("split ratios must be non-negative and sum to 1");
  }
};

inline DatasetSplit
build_coarse_stereotype(const std::vector<std::vector<Example>>& positive_sources,
                        const std::vector<Example>& negative_source,
                        const std::string& task_id,
                        const SplitRatios& ratios, std::uint64_t seed,
                        std::vector<std::string>* warnings = nullptr) {
  ratios.validate();
  static const std::string kPositive = "stereotype";
  static const std::string kNegative = "non-stereotype";

  std::map<std::string, bool> polarity; // id -> is_positive
  std::vector<Example> merged;
  auto add = [&](const Example& ex, bool positive) {
    const std::string& want = positive ? kPositive : kNegative;
    if (ex.gold_labels != std::set<std::string>{want})
      throw schema_error("example '" + ex.example_id + "' in a " +
                         (positive ? std::string("positive") : std::string("negative")) +
                         " source must carry exactly the label '" + want + "'");
    auto it = polarity.find(ex.example_id);
    if (it != polarity.end()) {
      if (it->second != positive)
        throw integrity_error("example_id '" + ex.example_id +
                              "' appears in both positive and negative sources");
      return; // duplicate of an already merged record
    }
    polarity[ex.example_id] = positive;
    Example copy = ex;
    copy.task_id = task_id;
    merged.push_back(std::move(copy));
  };

  for (const auto& source : positive_sources)
    for (const auto& ex : source) add(ex, true);
  for (const auto& ex : negative_source) add(ex, false);

  if (warnings) {
    bool has_pos = false, has_neg = false;
    for (const auto& [id, pos] : polarity) (pos ? has_pos : has_neg) = true;
    if (!merged.empty() && (!has_pos || !has_neg))
      warnings->push_back("class imbalance: only the '" +
                          (has_pos ? kPositive : kNegative) +
                          "' label is present in the merged coarse set");
  }

  Rng rng(seed);
  rng.shuffle(merged);

  const std::size_t n = merged.size();
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.validation * static_cast<double>(n)));

  DatasetSplit ds;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) ds.train.push_back(std::move(merged[i]));
    else if (i < n_train + n_val) ds.validation.push_back(std::move(merged[i]));
    else ds.test.push_back(std::move(merged[i]));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic multi-task suite
// ---------------------------------------------------------------------------

struct SplitSizes {
  int train = 0;
  int validation = 0;
  int test = 0;
};

struct SyntheticConfig {
  int n_tasks = 3; // one target plus n_tasks - 1 neighbors
  double overlap = 0.8;
  double noise_fraction = 0.4;
  SplitSizes target_sizes{500, 200, 200};
  SplitSizes neighbor_sizes{2000, 0, 0};
  int feature_dim = 32;
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  TaskSpec spec;
  DatasetSplit split;
};

// Tasks are binary linear-threshold concepts over dense features. Neighbor
// weight vectors agree with the target on the first round(overlap * dim)
// dimensions and are independent elsewhere. A noise_fraction of every
// neighbor's train split gets a uniformly re-sampled label plus a feature
// shift along a suite-wide artifact direction; those examples are tagged
// metadata["corrupted"] = "true". The tag never feeds the learners.
struct SyntheticSuite {
  std::vector<SyntheticTask> tasks;
  std::map<std::string, std::vector<double>> features; // example_id -> vector
};

namespace detail {

// Magnitude of the feature shift applied to corrupted neighbor examples.
// Large enough to put corrupted points clearly off the clean manifold, so
// their harm to transfer is attributable and not washed out by label noise.
constexpr double kCorruptedShift = 2.0;

inline std::vector<double> random_point(int dim, Rng& rng) {
  std::vector<double> x(dim);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

} // namespace detail

inline SyntheticSuite make_synthetic_suite(const SyntheticConfig& cfg) {
  if (cfg.n_tasks < 2)
    throw config_error("synthetic suite needs n_tasks >= 2 (one target plus neighbors)");
  if (cfg.feature_dim < 1) throw config_error("synthetic feature_dim must be >= 1");
  if (cfg.overlap < 0.0 || cfg.overlap > 1.0)
    throw config_error("synthetic overlap must lie in [0, 1]");
  if (cfg.noise_fraction < 0.0 || cfg.noise_fraction > 1.0)
    throw config_error("synthetic noise_fraction must lie in [0, 1]");
  if (cfg.target_sizes.train < 1 || cfg.target_sizes.validation < 1 ||
      cfg.target_sizes.test < 1)
    throw config_error("synthetic target task needs at least one example per split");
  if (cfg.neighbor_sizes.train < 0 || cfg.neighbor_sizes.validation < 0 ||
      cfg.neighbor_sizes.test < 0)
    throw config_error("synthetic neighbor sizes must be non-negative");

  const int dim = cfg.feature_dim;
  const int shared = static_cast<int>(std::lround(cfg.overlap * dim));
  const std::vector<std::string> binary_labels{"neg", "pos"};

  Rng rng(cfg.seed);

  // target concept, then the artifact direction for corrupted examples;
  // the artifact points along the target concept so that re-sampled labels
  // contradict exactly the structure the target relies on, keeping corrupted
  // examples persistently harmful to transfer rather than merely off-manifold
  std::vector<double> w_target(dim);
  for (auto& v : w_target) v = rng.uniform(-1.0, 1.0);

  std::vector<double> artifact = w_target;
  double norm = std::sqrt(detail::dot(artifact, artifact));
  if (norm == 0.0) norm = 1.0;
  for (auto& v : artifact) v /= norm;

  SyntheticSuite suite;

  for (int t = 0; t < cfg.n_tasks; ++t) {
    const bool is_target = t == 0;
    std::vector<double> w = w_target;
    if (!is_target)
      for (int d = shared; d < dim; ++d) w[d] = rng.uniform(-1.0, 1.0);

    TaskSpec spec;
    spec.task_id = is_target ? "target" : "neighbor" + std::to_string(t);
    spec.head_kind = HeadKind::single_class;
    spec.labels = binary_labels;
    spec.role = is_target ? TaskRole::target : TaskRole::neighbor;

    const SplitSizes& sizes = is_target ? cfg.target_sizes : cfg.neighbor_sizes;
    DatasetSplit split;

    auto gen_part = [&](std::vector<Example>& part, const char* part_name,
                        int count) {
      for (int i = 0; i < count; ++i) {
        Example ex;
        ex.example_id = spec.task_id + "-" + part_name + "-" + std::to_string(i);
        ex.text = ex.example_id;
        ex.task_id = spec.task_id;
        std::vector<double> x = detail::random_point(dim, rng);
        ex.gold_labels = {detail::dot(w, x) >= 0.0 ? binary_labels[1]
                                                   : binary_labels[0]};
        suite.features[ex.example_id] = std::move(x);
        part.push_back(std::move(ex));
      }
    };

    gen_part(split.train, "train", sizes.train);
    gen_part(split.validation, "validation", sizes.validation);
    gen_part(split.test, "test", sizes.test);

    if (!is_target && !split.train.empty()) {
      const auto n_train = split.train.size();
      const auto n_corrupt = static_cast<std::size_t>(
          std::lround(cfg.noise_fraction * static_cast<double>(n_train)));
      auto picked = rng.sample_indices(n_train, n_corrupt);
      for (std::size_t idx : picked) {
        Example& ex = split.train[idx];
        ex.gold_labels = {binary_labels[rng.below(binary_labels.size())]};
        ex.metadata["corrupted"] = "true";
        auto& x = suite.features[ex.example_id];
        for (int d = 0; d < dim; ++d) x[d] += detail::kCorruptedShift * artifact[d];
      }
    }

    suite.tasks.push_back(SyntheticTask{std::move(spec), std::move(split)});
  }

  return suite;
}

} // namespace weft
