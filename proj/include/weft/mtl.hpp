#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "weft/corpus.hpp"
#include "weft/encoder.hpp"
#include "weft/error.hpp"
#include "weft/eval.hpp"
#include "weft/nn.hpp"
#include "weft/rng.hpp"

namespace weft {

struct ModelConfig {
  int feature_dim = 2048;
  int hidden_dim = 128;
  int depth = 2; // hidden layers in the shared trunk
  int actor_hidden = 32;
  int critic_hidden = 32;

  void validate() const {
    if (feature_dim < 1 || hidden_dim < 1 || depth < 1)
      throw config_error("model dimensions must be positive");
    if (actor_hidden < 1 || critic_hidden < 1)
      throw config_error("agent hidden sizes must be positive");
  }
};

struct TrainingConfig {
  double learning_rate = 0.1;
  double agent_learning_rate = 0.1;
  int epochs_per_phase = 20;
  int batch_size = 32;       // z, shared by supervised phases and the RL loop
  int episodes = 10;         // e
  double epsilon = 1e-8;     // smoothing constant in the score normalization
  std::uint64_t seed = 1;
  int eval_subsample = 200;  // reward-evaluation subset size
  std::vector<std::string> neighbor_order;
  bool final_finetune = true;   // fine-tune on the target train split after RL
  bool literal_value_loss = false; // L1 against the constant 1 (audit mode)

  void validate() const {
    if (learning_rate <= 0 || agent_learning_rate <= 0)
      throw config_error("learning rates must be positive");
    if (epochs_per_phase < 0) throw config_error("epochs_per_phase must be >= 0");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (episodes < 1) throw config_error("episodes must be >= 1");
    if (epsilon <= 0) throw config_error("epsilon must be positive");
    if (eval_subsample < 1) throw config_error("eval_subsample must be >= 1");
  }
};

// Shared trunk plus one affine head per registered task. The trunk is a
// single object: every head reads the same parameters (hard sharing).
struct TaskHead {
  TaskSpec spec;
  Affine out;
};

struct ModelParams {
  ModelConfig config;
  Mlp trunk;
  std::map<std::string, TaskHead> heads;

  const TaskHead& head(const std::string& task_id) const {
    auto it = heads.find(task_id);
    if (it == heads.end())
      throw config_error("unknown task_id '" + task_id + "'");
    return it->second;
  }
};

inline ModelParams init_model(const std::vector<TaskSpec>& tasks,
                              const ModelConfig& mc, Rng& rng) {
  mc.validate();
  if (tasks.empty()) throw config_error("init_model: no tasks registered");
  ModelParams params;
  params.config = mc;
  std::vector<int> widths(static_cast<std::size_t>(mc.depth), mc.hidden_dim);
  params.trunk.init(mc.feature_dim, widths, /*squash_output=*/true, rng);
  for (const auto& spec : tasks) {
    spec.validate();
    if (params.heads.count(spec.task_id))
      throw config_error("duplicate task_id '" + spec.task_id + "'");
    TaskHead head;
    head.spec = spec;
    head.out.init(mc.hidden_dim, static_cast<int>(spec.labels.size()), rng);
    params.heads.emplace(spec.task_id, std::move(head));
  }
  return params;
}

// ---------------------------------------------------------------------------
// forward / loss
// ---------------------------------------------------------------------------

inline std::vector<double> softmax(std::vector<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : logits) v /= z;
  return logits;
}

// Scores for one example on one task: a probability vector (softmax) for
// single-class heads, independent sigmoids for multi-label heads.
inline std::vector<double> forward(const ModelParams& params,
                                   const FeatureVector& feature,
                                   const std::string& task_id) {
  if (static_cast<int>(feature.size()) != params.config.feature_dim)
    throw config_error("feature dimension " + std::to_string(feature.size()) +
                       " does not match configured " +
                       std::to_string(params.config.feature_dim));
  const TaskHead& head = params.head(task_id);
  Mlp::Cache cache;
  const auto& hidden = params.trunk.forward(feature, cache);
  std::vector<double> logits(head.out.out, 0.0);
  head.out.forward(hidden.data(), logits.data());
  if (head.spec.head_kind == HeadKind::single_class) return softmax(logits);
  for (auto& v : logits) v = sigmoid(v);
  return logits;
}

namespace detail {

inline double safe_log(double x) { return std::log(std::max(x, 1e-300)); }

} // namespace detail

// Cross-entropy for single-class heads; mean per-label binary cross-entropy
// for multi-label heads. `scores` must come from forward() on the same task.
inline double task_loss(const std::vector<double>& scores,
                        const std::set<std::string>& gold_labels,
                        const TaskSpec& spec) {
  if (scores.size() != spec.labels.size())
    throw integrity_error("task_loss: score width does not match label count");
  std::vector<bool> gold(spec.labels.size(), false);
  for (const auto& l : gold_labels) {
    const int idx = spec.label_index(l);
    if (idx < 0)
      throw schema_error("gold label '" + l + "' outside task '" + spec.task_id + "'");
    gold[static_cast<std::size_t>(idx)] = true;
  }
  if (spec.head_kind == HeadKind::single_class) {
    if (gold_labels.size() != 1)
      throw schema_error("single-class loss needs exactly one gold label");
    for (std::size_t i = 0; i < gold.size(); ++i)
      if (gold[i]) return -detail::safe_log(scores[i]);
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    loss += gold[i] ? -detail::safe_log(scores[i])
                    : -detail::safe_log(1.0 - scores[i]);
  }
  return loss / static_cast<double>(scores.size());
}

struct ModelGrads {
  Mlp trunk;
  Affine head;

  void zero_like(const ModelParams& params, const std::string& task_id) {
    trunk.zero_like(params.trunk);
    head.zero_like(params.head(task_id).out);
  }
};

// Loss and gradients (trunk + this task's head) for one example.
// dL/dlogits is (p - y) for softmax cross-entropy and (s - y)/k for the
// mean of per-label binary cross-entropies.
inline double task_loss_backward(const ModelParams& params,
                                 const FeatureVector& feature,
                                 const std::set<std::string>& gold_labels,
                                 const std::string& task_id,
                                 ModelGrads& grads) {
  const TaskHead& head = params.head(task_id);
  Mlp::Cache cache;
  const auto& hidden = params.trunk.forward(feature, cache);
  std::vector<double> logits(head.out.out, 0.0);
  head.out.forward(hidden.data(), logits.data());

  std::vector<double> scores;
  if (head.spec.head_kind == HeadKind::single_class) {
    scores = softmax(logits);
  } else {
    scores = logits;
    for (auto& v : scores) v = sigmoid(v);
  }
  const double loss = task_loss(scores, gold_labels, head.spec);

  const auto k = scores.size();
  std::vector<double> dlogits(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const bool y = gold_labels.count(head.spec.labels[i]) > 0;
    dlogits[i] = scores[i] - (y ? 1.0 : 0.0);
  }
  if (head.spec.head_kind == HeadKind::multi_label)
    for (auto& v : dlogits) v /= static_cast<double>(k);

  std::vector<double> dhidden(params.config.hidden_dim, 0.0);
  head.out.backward(hidden.data(), dlogits.data(), grads.head, dhidden.data());
  params.trunk.backward(feature, cache, std::move(dhidden), grads.trunk);
  return loss;
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

// Single-class: argmax, ties to the lowest label index. Multi-label: every
// label whose sigmoid clears 0.5.
inline std::set<std::string> predict_one(const ModelParams& params,
                                         const FeatureVector& feature,
                                         const TaskSpec& spec) {
  const auto scores = forward(params, feature, spec.task_id);
  std::set<std::string> out;
  if (spec.head_kind == HeadKind::single_class) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[best]) best = i;
    out.insert(spec.labels[best]);
  } else {
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] > 0.5) out.insert(spec.labels[i]);
  }
  return out;
}

// Feature lookup shared by training and evaluation. Every example consumed
// anywhere in a run must have a row here.
class FeatureMap {
public:
  FeatureMap() = default;
  FeatureMap(std::map<std::string, FeatureVector> table, int dim)
      : table_(std::move(table)), dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

  void insert(const std::string& id, FeatureVector v) {
    if (dim_ == 0) dim_ = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dim_)
      throw config_error("feature vector for '" + id + "' has dimension " +
                         std::to_string(v.size()) + ", expected " +
                         std::to_string(dim_));
    table_[id] = std::move(v);
  }

  const FeatureVector& at(const std::string& id) const {
    auto it = table_.find(id);
    if (it == table_.end())
      throw data_error("no feature vector for example_id '" + id + "'");
    return it->second;
  }

private:
  std::map<std::string, FeatureVector> table_;
  int dim_ = 0;
};

inline std::vector<std::set<std::string>>
predict(const ModelParams& params, const std::vector<Example>& examples,
        const TaskSpec& spec, const FeatureMap& features) {
  std::vector<std::set<std::string>> preds;
  preds.reserve(examples.size());
  for (const auto& ex : examples)
    preds.push_back(predict_one(params, features.at(ex.example_id), spec));
  return preds;
}

inline double evaluate_macro_f1(const ModelParams& params,
                                const std::vector<Example>& examples,
                                const TaskSpec& spec,
                                const FeatureMap& features) {
  std::vector<std::set<std::string>> golds;
  golds.reserve(examples.size());
  for (const auto& ex : examples) golds.push_back(ex.gold_labels);
  return macro_f1(golds, predict(params, examples, spec, features), spec.labels);
}

// ---------------------------------------------------------------------------
// training loops
// ---------------------------------------------------------------------------

struct TaskData {
  TaskSpec spec;
  DatasetSplit split;
};

// One mini-batch SGD step on trunk + the task's head; mean gradient over
// the batch. Returns the mean loss.
inline double train_step(ModelParams& params, const TaskSpec& spec,
                         const std::vector<const Example*>& batch,
                         const FeatureMap& features, double learning_rate) {
  if (batch.empty()) return 0.0;
  ModelGrads grads;
  grads.zero_like(params, spec.task_id);
  double loss = 0.0;
  for (const Example* ex : batch)
    loss += task_loss_backward(params, features.at(ex->example_id),
                               ex->gold_labels, spec.task_id, grads);
  const double scale = 1.0 / static_cast<double>(batch.size());
  params.trunk.sgd_step(grads.trunk, learning_rate * scale);
  params.heads.at(spec.task_id).out.sgd_step(grads.head, learning_rate * scale);
  return loss * scale;
}

// epochs_per_phase passes of seeded mini-batch SGD over one task's train
// split. The final partial batch of each epoch is kept.
inline void train_task_phase(ModelParams& params, const TaskSpec& spec,
                             const std::vector<Example>& train_split,
                             const FeatureMap& features,
                             const TrainingConfig& tc, Rng& rng) {
  if (train_split.empty()) return;
  std::vector<const Example*> order;
  order.reserve(train_split.size());
  for (const auto& ex : train_split) order.push_back(&ex);
  for (int epoch = 0; epoch < tc.epochs_per_phase; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      std::vector<const Example*> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                        order.begin() + static_cast<std::ptrdiff_t>(stop));
      train_step(params, spec, batch, features, tc.learning_rate);
    }
  }
  check_finite(params.trunk, "trunk after training phase");
}

// Sequential joint training: one phase per neighbor in neighbor_order, then
// a fine-tune phase on the target train split. With no neighbors this is
// exactly train_baseline.
inline ModelParams train_mtl(const std::vector<TaskSpec>& registry,
                             const std::vector<TaskData>& neighbors,
                             const TaskData& target, const FeatureMap& features,
                             const ModelConfig& mc, const TrainingConfig& tc) {
  tc.validate();
  if (target.split.train.empty())
    throw config_error("target task '" + target.spec.task_id +
                       "' has an empty train split");

  std::vector<std::string> order = tc.neighbor_order;
  if (order.empty())
    for (const auto& n : neighbors) order.push_back(n.spec.task_id);
  std::map<std::string, const TaskData*> by_id;
  for (const auto& n : neighbors) by_id[n.spec.task_id] = &n;
  if (order.size() != neighbors.size())
    throw config_error("neighbor_order must list every neighbor task exactly once");
  std::set<std::string> seen;
  for (const auto& id : order) {
    if (!by_id.count(id))
      throw config_error("neighbor_order names unknown task '" + id + "'");
    if (!seen.insert(id).second)
      throw config_error("neighbor_order lists task '" + id + "' twice");
  }

  Rng rng(tc.seed);
  ModelParams params = init_model(registry, mc, rng);
  for (const auto& id : order) {
    const TaskData* n = by_id.at(id);
    train_task_phase(params, n->spec, n->split.train, features, tc, rng);
  }
  train_task_phase(params, target.spec, target.split.train, features, tc, rng);
  return params;
}

inline ModelParams train_baseline(const std::vector<TaskSpec>& registry,
                                  const TaskData& target,
                                  const FeatureMap& features,
                                  const ModelConfig& mc,
                                  const TrainingConfig& tc) {
  TrainingConfig plain = tc;
  plain.neighbor_order.clear();
  return train_mtl(registry, {}, target, features, mc, plain);
}

// ---------------------------------------------------------------------------
// checkpoints: self-describing JSON, bit-exact round trip
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json affine_to_json(const Affine& a) {
  return {{"in", a.in}, {"out", a.out}, {"w", a.w}, {"b", a.b}};
}

inline Affine affine_from_json(const nlohmann::json& j) {
  Affine a;
  a.in = j.at("in").get<int>();
  a.out = j.at("out").get<int>();
  a.w = j.at("w").get<std::vector<double>>();
  a.b = j.at("b").get<std::vector<double>>();
  if (a.w.size() != static_cast<std::size_t>(a.in) * static_cast<std::size_t>(a.out) ||
      a.b.size() != static_cast<std::size_t>(a.out))
    throw data_error("checkpoint: affine block has inconsistent shapes");
  return a;
}

inline nlohmann::json task_spec_to_json(const TaskSpec& spec) {
  return {{"task_id", spec.task_id},
          {"head_kind", to_string(spec.head_kind)},
          {"labels", spec.labels},
          {"role", to_string(spec.role)}};
}

inline TaskSpec task_spec_from_json(const nlohmann::json& j) {
  TaskSpec spec;
  spec.task_id = j.at("task_id").get<std::string>();
  spec.head_kind = head_kind_from_string(j.at("head_kind").get<std::string>());
  spec.labels = j.at("labels").get<std::vector<std::string>>();
  spec.role = task_role_from_string(j.at("role").get<std::string>());
  spec.validate();
  return spec;
}

} // namespace detail

inline nlohmann::json checkpoint_to_json(const ModelParams& params) {
  nlohmann::json j;
  j["format"] = "weft-checkpoint-v1";
  j["model"] = {{"feature_dim", params.config.feature_dim},
                {"hidden_dim", params.config.hidden_dim},
                {"depth", params.config.depth},
                {"actor_hidden", params.config.actor_hidden},
                {"critic_hidden", params.config.critic_hidden}};
  j["trunk"] = nlohmann::json::array();
  for (const auto& layer : params.trunk.layers)
    j["trunk"].push_back(detail::affine_to_json(layer));
  j["heads"] = nlohmann::json::object();
  for (const auto& [id, head] : params.heads)
    j["heads"][id] = {{"spec", detail::task_spec_to_json(head.spec)},
                      {"out", detail::affine_to_json(head.out)}};
  return j;
}

inline ModelParams checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != "weft-checkpoint-v1")
    throw data_error("not a weft checkpoint");
  ModelParams params;
  const auto& m = j.at("model");
  params.config.feature_dim = m.at("feature_dim").get<int>();
  params.config.hidden_dim = m.at("hidden_dim").get<int>();
  params.config.depth = m.at("depth").get<int>();
  params.config.actor_hidden = m.at("actor_hidden").get<int>();
  params.config.critic_hidden = m.at("critic_hidden").get<int>();
  params.config.validate();
  params.trunk.tanh_output = true;
  for (const auto& layer : j.at("trunk"))
    params.trunk.layers.push_back(detail::affine_from_json(layer));
  for (auto it = j.at("heads").begin(); it != j.at("heads").end(); ++it) {
    TaskHead head;
    head.spec = detail::task_spec_from_json(it.value().at("spec"));
    head.out = detail::affine_from_json(it.value().at("out"));
    params.heads.emplace(it.key(), std::move(head));
  }
  check_finite(params.trunk, "checkpoint trunk");
  return params;
}

inline void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write checkpoint: " + path);
  out << checkpoint_to_json(params).dump(2) << '\n';
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("checkpoint parse failure: " + std::string(e.what()));
  }
  return checkpoint_from_json(j);
}

} // namespace weft
