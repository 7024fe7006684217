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
#include "weft/mtl.hpp"
#include "weft/nn.hpp"
#include "weft/rng.hpp"

namespace weft {

// Actor: per-example feature -> scalar logit; selection probability is the
// sigmoid of that logit. Critic: summary of a selected batch -> expected
// reward. Both are small tanh MLPs with linear scalar outputs.
struct ActorParams {
  Mlp net;
};

struct CriticParams {
  Mlp net;
};

inline ActorParams init_actor(const ModelConfig& mc, Rng& rng) {
  ActorParams actor;
  actor.net.init(mc.feature_dim, {mc.actor_hidden, 1}, /*squash_output=*/false, rng);
  return actor;
}

inline CriticParams init_critic(const ModelConfig& mc, Rng& rng) {
  CriticParams critic;
  critic.net.init(mc.feature_dim + 1, {mc.critic_hidden, 1},
                  /*squash_output=*/false, rng);
  return critic;
}

enum class Action { SELECT, REJECT };

struct SelectionDecision {
  std::string example_id;
  Action action = Action::REJECT;
  double probability = 0.5;      // P[SELECT]
  double log_prob_of_action = 0; // log P[action taken]
};

inline double actor_probability(const ActorParams& actor,
                                const FeatureVector& feature) {
  return sigmoid(actor.net.forward(feature)[0]);
}

inline std::vector<double>
actor_probabilities(const ActorParams& actor,
                    const std::vector<const FeatureVector*>& batch) {
  if (batch.empty()) throw integrity_error("actor_probabilities: empty batch");
  std::vector<double> probs;
  probs.reserve(batch.size());
  for (const auto* f : batch) probs.push_back(actor_probability(actor, *f));
  return probs;
}

// Training mode draws each action independently from Bernoulli(probability);
// deterministic mode selects iff probability > 0.5.
inline std::vector<SelectionDecision>
sample_actions(const std::vector<std::string>& example_ids,
               const std::vector<double>& probabilities, Rng& rng,
               bool deterministic = false) {
  if (example_ids.size() != probabilities.size())
    throw integrity_error("sample_actions: ids and probabilities misaligned");
  std::vector<SelectionDecision> decisions;
  decisions.reserve(example_ids.size());
  for (std::size_t i = 0; i < example_ids.size(); ++i) {
    const double p = probabilities[i];
    SelectionDecision d;
    d.example_id = example_ids[i];
    d.probability = p;
    const bool select = deterministic ? p > 0.5 : rng.bernoulli(p);
    d.action = select ? Action::SELECT : Action::REJECT;
    d.log_prob_of_action = select ? std::log(p) : std::log(1.0 - p);
    decisions.push_back(std::move(d));
  }
  return decisions;
}

// Critic input: mean feature vector over SELECTED examples, concatenated
// with the selection rate. An all-REJECT batch summarizes to zeros.
inline std::vector<double>
selection_summary(const std::vector<SelectionDecision>& decisions,
                  const std::vector<const FeatureVector*>& batch) {
  if (decisions.size() != batch.size())
    throw integrity_error("selection_summary: decisions and features misaligned");
  if (batch.empty()) throw integrity_error("selection_summary: empty batch");
  const std::size_t dim = batch.front()->size();
  std::vector<double> summary(dim + 1, 0.0);
  std::size_t selected = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i].action != Action::SELECT) continue;
    ++selected;
    for (std::size_t d = 0; d < dim; ++d) summary[d] += (*batch[i])[d];
  }
  if (selected > 0)
    for (std::size_t d = 0; d < dim; ++d)
      summary[d] /= static_cast<double>(selected);
  summary[dim] = static_cast<double>(selected) / static_cast<double>(batch.size());
  return summary;
}

inline double critic_expected_reward(const CriticParams& critic,
                                     const std::vector<SelectionDecision>& decisions,
                                     const std::vector<const FeatureVector*>& batch) {
  return critic.net.forward(selection_summary(decisions, batch))[0];
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

struct NormalizedScores {
  std::vector<double> scores; // \hat F per mini-batch
  double mean = 0.0;
  double stddev = 0.0; // population standard deviation
  double epsilon = 0.0;
};

inline NormalizedScores normalize_scores(const std::vector<double>& f1_list,
                                         double epsilon) {
  if (f1_list.empty()) throw integrity_error("normalize_scores: empty list");
  if (epsilon <= 0) throw config_error("normalize_scores: epsilon must be positive");
  NormalizedScores out;
  out.epsilon = epsilon;
  // the mean of identical values is that value; summation must not blur it
  bool all_equal = true;
  for (double f : f1_list) all_equal = all_equal && f == f1_list.front();
  if (all_equal) {
    out.mean = f1_list.front();
    out.scores.assign(f1_list.size(), 0.0);
    return out;
  }
  const double n = static_cast<double>(f1_list.size());
  for (double f : f1_list) out.mean += f;
  out.mean /= n;
  double var = 0.0;
  for (double f : f1_list) var += (f - out.mean) * (f - out.mean);
  out.stddev = std::sqrt(var / n);
  out.scores.reserve(f1_list.size());
  for (double f : f1_list)
    out.scores.push_back((f - out.mean) / (out.stddev + epsilon));
  return out;
}

// p = -(1/b) sum_i (Fhat_i - e_i) * (1/z) sum_j log P[a_j^i].
// Expected rewards enter as constants here; no gradient reaches the critic
// through the policy loss.
inline double policy_loss(const NormalizedScores& normalized,
                          const std::vector<double>& expected_rewards,
                          const std::vector<std::vector<double>>& per_batch_log_probs) {
  const std::size_t b = normalized.scores.size();
  if (expected_rewards.size() != b || per_batch_log_probs.size() != b)
    throw integrity_error("policy_loss: lists misaligned");
  if (b == 0) throw integrity_error("policy_loss: no mini-batches");
  double p = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& logs = per_batch_log_probs[i];
    if (logs.empty()) throw integrity_error("policy_loss: empty log-prob list");
    double mean_log = 0.0;
    for (double lp : logs) mean_log += lp;
    mean_log /= static_cast<double>(logs.size());
    p += (normalized.scores[i] - expected_rewards[i]) * mean_log;
  }
  return -p / static_cast<double>(b);
}

// Default value loss: mean |e_i - Fhat_i|, the gradient-bearing regression
// of the critic onto the normalized scores. The literal variant keeps the
// printed form, mean |1 - Fhat_i|, which touches no critic parameter.
inline double value_loss(const NormalizedScores& normalized,
                         const std::vector<double>& expected_rewards) {
  const std::size_t b = normalized.scores.size();
  if (expected_rewards.size() != b)
    throw integrity_error("value_loss: lists misaligned");
  if (b == 0) throw integrity_error("value_loss: no mini-batches");
  double v = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    v += std::abs(expected_rewards[i] - normalized.scores[i]);
  return v / static_cast<double>(b);
}

inline double value_loss_literal(const NormalizedScores& normalized) {
  if (normalized.scores.empty())
    throw integrity_error("value_loss_literal: no mini-batches");
  double v = 0.0;
  for (double s : normalized.scores) v += std::abs(1.0 - s);
  return v / static_cast<double>(normalized.scores.size());
}

struct LossBreakdown {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double total = 0.0;
};

inline LossBreakdown total_loss(double p, double v) {
  return LossBreakdown{p, v, p + v};
}

// ---------------------------------------------------------------------------
// agent gradients
// ---------------------------------------------------------------------------

// One mini-batch as the agent saw it during an episode block.
struct AgentBatch {
  std::vector<const FeatureVector*> features;
  std::vector<SelectionDecision> decisions;
  std::vector<double> summary; // critic input, cached at decision time
  double f1 = 0.0;
  double expected_reward = 0.0;
};

// Recomputes the policy loss from the actor's current parameters (the actor
// does not move between sampling and the block update, so this equals the
// sampled-time value) and accumulates dL/d(actor params).
inline double policy_loss_backward(const ActorParams& actor,
                                   const std::vector<AgentBatch>& batches,
                                   const NormalizedScores& normalized,
                                   Mlp& grads) {
  const std::size_t b = batches.size();
  if (normalized.scores.size() != b)
    throw integrity_error("policy_loss_backward: lists misaligned");
  double p = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& batch = batches[i];
    const double advantage = normalized.scores[i] - batch.expected_reward;
    const auto z = batch.decisions.size();
    double mean_log = 0.0;
    for (std::size_t j = 0; j < z; ++j) {
      Mlp::Cache cache;
      const double logit = actor.net.forward(*batch.features[j], cache)[0];
      const double prob = sigmoid(logit);
      const bool selected = batch.decisions[j].action == Action::SELECT;
      mean_log += selected ? std::log(prob) : std::log(1.0 - prob);
      // d log P[a] / d logit = a - sigma(logit)
      const double dlogit = (selected ? 1.0 : 0.0) - prob;
      const double coeff = -advantage * dlogit /
                           (static_cast<double>(b) * static_cast<double>(z));
      actor.net.backward(*batch.features[j], cache, {coeff}, grads);
    }
    p += advantage * mean_log / static_cast<double>(z);
  }
  return -p / static_cast<double>(b);
}

// Value-loss gradient for the critic; expected rewards are recomputed from
// the critic's current parameters via the cached summaries.
inline double value_loss_backward(const CriticParams& critic,
                                  const std::vector<AgentBatch>& batches,
                                  const NormalizedScores& normalized,
                                  Mlp& grads) {
  const std::size_t b = batches.size();
  if (normalized.scores.size() != b)
    throw integrity_error("value_loss_backward: lists misaligned");
  double v = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    Mlp::Cache cache;
    const double e = critic.net.forward(batches[i].summary, cache)[0];
    const double diff = e - normalized.scores[i];
    v += std::abs(diff);
    const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    critic.net.backward(batches[i].summary, cache, {sign / static_cast<double>(b)},
                        grads);
  }
  return v / static_cast<double>(b);
}

// ---------------------------------------------------------------------------
// the guided training loop
// ---------------------------------------------------------------------------

// One log line per mini-batch.
struct EpisodeRecord {
  int episode = 0;
  std::string neighbor_task;
  int batch_index = 0;
  double f1 = 0.0;
  double expected_reward = 0.0;
  std::vector<SelectionDecision> decisions;

  std::size_t selected_count() const {
    std::size_t n = 0;
    for (const auto& d : decisions)
      if (d.action == Action::SELECT) ++n;
    return n;
  }
};

struct BlockLoss {
  int episode = 0;
  std::string neighbor_task;
  LossBreakdown loss;
};

struct RlMtlResult {
  ModelParams model;
  ActorParams actor;
  CriticParams critic;
  std::vector<EpisodeRecord> episodes;
  std::vector<BlockLoss> losses;
  std::vector<std::string> reward_eval_ids; // validation subsample used as reward
};

inline RlMtlResult run_rl_mtl(const std::vector<TaskData>& neighbors,
                              const TaskData& target,
                              const ModelParams& model_init,
                              const FeatureMap& features,
                              const TrainingConfig& tc) {
  tc.validate();
  if (target.split.validation.empty())
    throw config_error("target task '" + target.spec.task_id +
                       "' has an empty validation split; reward is undefined");

  std::vector<std::string> order = tc.neighbor_order;
  if (order.empty())
    for (const auto& n : neighbors) order.push_back(n.spec.task_id);
  std::map<std::string, const TaskData*> by_id;
  for (const auto& n : neighbors) by_id[n.spec.task_id] = &n;
  if (order.size() != neighbors.size())
    throw config_error("neighbor_order must list every neighbor task exactly once");
  for (const auto& id : order)
    if (!by_id.count(id))
      throw config_error("neighbor_order names unknown task '" + id + "'");

  RlMtlResult result;
  result.model = model_init;

  Rng rng(tc.seed);
  result.actor = init_actor(result.model.config, rng);
  result.critic = init_critic(result.model.config, rng);

  // Reward-evaluation subset: a seeded subsample of the validation split.
  // Test-split examples never enter this loop.
  const auto& val = target.split.validation;
  const std::size_t sub = std::min<std::size_t>(val.size(),
                                                static_cast<std::size_t>(tc.eval_subsample));
  std::vector<const Example*> reward_eval;
  for (std::size_t idx : rng.sample_indices(val.size(), sub))
    reward_eval.push_back(&val[idx]);
  for (const auto* ex : reward_eval)
    result.reward_eval_ids.push_back(ex->example_id);

  auto reward_f1 = [&]() {
    std::vector<std::set<std::string>> golds, preds;
    golds.reserve(reward_eval.size());
    preds.reserve(reward_eval.size());
    for (const auto* ex : reward_eval) {
      golds.push_back(ex->gold_labels);
      preds.push_back(predict_one(result.model, features.at(ex->example_id),
                                  target.spec));
    }
    return macro_f1(golds, preds, target.spec.labels);
  };

  const auto z = static_cast<std::size_t>(tc.batch_size);

  for (int episode = 1; episode <= tc.episodes; ++episode) {
    for (const auto& id : order) {
      const TaskData& neighbor = *by_id.at(id);
      const auto& pool = neighbor.split.train;
      const std::size_t b = pool.size() / z;
      if (b == 0) continue; // not enough examples for one full mini-batch

      std::vector<std::size_t> perm(pool.size());
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      rng.shuffle(perm);

      std::vector<AgentBatch> batches;
      std::vector<double> f1_list;
      batches.reserve(b);
      f1_list.reserve(b);

      for (std::size_t k = 0; k < b; ++k) {
        AgentBatch batch;
        std::vector<std::string> ids;
        std::vector<const Example*> members;
        for (std::size_t j = 0; j < z; ++j) {
          const Example& ex = pool[perm[k * z + j]];
          ids.push_back(ex.example_id);
          members.push_back(&ex);
          batch.features.push_back(&features.at(ex.example_id));
        }
        const auto probs = actor_probabilities(result.actor, batch.features);
        batch.decisions = sample_actions(ids, probs, rng);
        batch.summary = selection_summary(batch.decisions, batch.features);
        batch.expected_reward = result.critic.net.forward(batch.summary)[0];

        std::vector<const Example*> selected;
        for (std::size_t j = 0; j < z; ++j)
          if (batch.decisions[j].action == Action::SELECT)
            selected.push_back(members[j]);
        if (!selected.empty())
          train_step(result.model, neighbor.spec, selected, features,
                     tc.learning_rate);

        batch.f1 = reward_f1();
        f1_list.push_back(batch.f1);

        EpisodeRecord rec;
        rec.episode = episode;
        rec.neighbor_task = neighbor.spec.task_id;
        rec.batch_index = static_cast<int>(k + 1);
        rec.f1 = batch.f1;
        rec.expected_reward = batch.expected_reward;
        rec.decisions = batch.decisions;
        result.episodes.push_back(std::move(rec));
        batches.push_back(std::move(batch));
      }

      const NormalizedScores normalized = normalize_scores(f1_list, tc.epsilon);

      Mlp actor_grads;
      actor_grads.zero_like(result.actor.net);
      const double p = policy_loss_backward(result.actor, batches, normalized,
                                            actor_grads);

      double v = 0.0;
      Mlp critic_grads;
      critic_grads.zero_like(result.critic.net);
      if (tc.literal_value_loss) {
        v = value_loss_literal(normalized); // no critic gradient exists
      } else {
        v = value_loss_backward(result.critic, batches, normalized, critic_grads);
      }

      result.actor.net.sgd_step(actor_grads, tc.agent_learning_rate);
      if (!tc.literal_value_loss)
        result.critic.net.sgd_step(critic_grads, tc.agent_learning_rate);

      result.losses.push_back(BlockLoss{episode, neighbor.spec.task_id,
                                        total_loss(p, v)});
    }
  }

  check_finite(result.actor.net, "actor after episodes");
  check_finite(result.critic.net, "critic after episodes");

  if (tc.final_finetune)
    train_task_phase(result.model, target.spec, target.split.train, features,
                     tc, rng);

  return result;
}

// ---------------------------------------------------------------------------
// episode log file: one JSON record per line; the first line names the
// reward-evaluation subset so leakage is auditable.
// ---------------------------------------------------------------------------

inline void write_episode_log(const std::string& path, const RlMtlResult& result) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write episode log: " + path);
  nlohmann::json header;
  header["record"] = "reward_eval";
  header["reward_eval_example_ids"] = result.reward_eval_ids;
  out << header.dump() << '\n';
  for (const auto& rec : result.episodes) {
    nlohmann::json j;
    j["record"] = "batch";
    j["episode"] = rec.episode;
    j["neighbor_task"] = rec.neighbor_task;
    j["batch_index"] = rec.batch_index;
    j["f1"] = rec.f1;
    j["expected_reward"] = rec.expected_reward;
    j["selected_count"] = rec.selected_count();
    j["batch_size"] = rec.decisions.size();
    std::vector<std::string> selected_ids;
    for (const auto& d : rec.decisions)
      if (d.action == Action::SELECT) selected_ids.push_back(d.example_id);
    j["selected_example_ids"] = selected_ids;
    out << j.dump() << '\n';
  }
}

} // namespace weft
