#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rlver/error.hpp"
#include "rlver/hashing.hpp"
#include "rlver/optim.hpp"
#include "rlver/policy.hpp"
#include "rlver/rollout.hpp"
#include "rlver/scenario.hpp"
#include "rlver/sim.hpp"
#include "rlver/text.hpp"

namespace rlver {

inline nlohmann::json to_json(const RewardSpec& r) {
  return {{"mode", r.mode == RewardMode::Terminal ? "terminal" : "per_turn"},
          {"format_gate", r.format_gate},
          {"success_threshold", r.success_threshold},
          {"failure_threshold_train", r.failure_threshold_train},
          {"failure_threshold_eval", r.failure_threshold_eval}};
}

inline nlohmann::json to_json(const RolloutConfig& c) {
  return {{"max_turns", c.max_turns},         {"group_size", c.group_size},
          {"reward_spec", to_json(c.reward_spec)}, {"thinking_mode", c.thinking_mode},
          {"delta_clamp", c.delta_clamp},     {"policy_temperature", c.policy_temperature}};
}

struct TrainConfig {
  Algo algo = Algo::Ppo;
  OptimizerConfig opt;
  RolloutConfig rollout;
  int steps = 300;
  std::uint64_t seed = 1;
  int parallelism = 1;
  int eval_episodes = 256;
  std::optional<Difficulty> difficulty;  // overrides every scenario's difficulty
  int snapshot_every = 50;

  void validate() const {
    opt.validate(algo);
    rollout.validate();
    if (steps < 0) throw ConfigError("steps must be non-negative");
    if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be at least 1");
  }
};

/// Hash of every setting that changes what a training step computes. A
/// snapshot can only resume a run with the same hash.
inline std::string train_config_hash(const TrainConfig& c) {
  nlohmann::json j = {{"algo", to_string(c.algo)},
                      {"opt", to_json(c.opt)},
                      {"rollout", to_json(c.rollout)},
                      {"seed", c.seed},
                      {"difficulty", c.difficulty ? std::string(to_string(*c.difficulty)) : "scenario"},
                      {"prompt_version", kPromptVersion}};
  return sha256_hex(j.dump());
}

struct CurveRecord {
  int step = 0;
  double mean_emotion = 0.0;
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
  double mean_turns = 0.0;
  double mean_output_length = 0.0;  // words per model turn
  std::size_t episodes = 0;
  std::size_t aborted = 0;
};

inline nlohmann::json to_json(const CurveRecord& r) {
  return {{"step", r.step},
          {"mean_emotion", r.mean_emotion},
          {"mean_reward", r.mean_reward},
          {"clip_fraction", r.clip_fraction},
          {"entropy", r.entropy},
          {"mean_turns", r.mean_turns},
          {"mean_output_length", r.mean_output_length},
          {"episodes", r.episodes},
          {"aborted", r.aborted}};
}

/// Rollout statistics of one batch; aborted episodes only count in `aborted`.
inline CurveRecord summarize(const std::vector<DialogueTranscript>& ts, int step = 0) {
  CurveRecord r;
  r.step = step;
  std::size_t model_turns = 0, words = 0;
  for (const auto& t : ts) {
    if (t.aborted()) {
      ++r.aborted;
      continue;
    }
    ++r.episodes;
    r.mean_emotion += t.final_emotion;
    r.mean_reward += t.reward;
    r.mean_turns += static_cast<double>(t.model_turn_count());
    for (const auto& turn : t.turns) {
      if (turn.speaker != Speaker::Model) continue;
      ++model_turns;
      words += text::count_words(visible_reply(turn.text));
    }
  }
  if (r.episodes) {
    double n = static_cast<double>(r.episodes);
    r.mean_emotion /= n;
    r.mean_reward /= n;
    r.mean_turns /= n;
  }
  if (model_turns) r.mean_output_length = static_cast<double>(words) / static_cast<double>(model_turns);
  return r;
}

inline std::vector<Scenario> with_difficulty(std::vector<Scenario> s, std::optional<Difficulty> d) {
  if (d) {
    for (auto& x : s) x.difficulty = *d;
  }
  return s;
}

/// Rolls out `episodes` episodes of `policy` spread evenly over the scenarios.
inline CurveRecord evaluate_policy(const ToyPolicy& policy, const std::vector<Scenario>& scenarios,
                                   AffectEngine& engine, RolloutConfig cfg, int episodes,
                                   std::uint64_t seed, int parallelism = 1) {
  if (scenarios.empty()) throw UsageError("evaluate_policy: no scenarios");
  int n = static_cast<int>(scenarios.size());
  cfg.group_size = std::max(1, (episodes + n - 1) / n);
  ToyPolicyPort port(policy);
  return summarize(run_batch(scenarios, port, engine, cfg, parallelism, hash_all(seed, 0xe7a1ULL)));
}

struct TrainHooks {
  std::function<void(const CurveRecord&, const UpdateStats&)> on_step;
  std::function<void(const Learner&, int step)> on_snapshot;
};

struct TrainResult {
  Learner learner;
  std::vector<CurveRecord> curve;
  CurveRecord initial_eval;
  CurveRecord final_eval;
};

/// Collect → assemble → update, `cfg.steps` times. Each step's episodes are
/// drawn from a permutation of the scenarios keyed by (seed, step).
inline TrainResult train(const std::vector<Scenario>& scenario_set, AffectEngine& engine,
                         const TrainConfig& cfg, const TrainHooks& hooks = {},
                         std::optional<Learner> resume = std::nullopt, int start_step = 0) {
  cfg.validate();
  if (scenario_set.empty()) throw ConfigError("train: no scenarios");
  auto scenarios = with_difficulty(scenario_set, cfg.difficulty);
  const int n = static_cast<int>(scenarios.size());

  TrainResult res;
  res.learner = resume ? std::move(*resume) : Learner{};
  Learner& L = res.learner;
  res.initial_eval = evaluate_policy(L.policy, scenarios, engine, cfg.rollout, cfg.eval_episodes, cfg.seed,
                                     cfg.parallelism);

  const int group = cfg.algo == Algo::Grpo ? cfg.opt.group_size : 1;
  const int want = cfg.opt.batch_size / group;
  const int picked = std::min(want, n);
  const int reps = (want + picked - 1) / picked;

  for (int step = start_step; step < cfg.steps; ++step) {
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      auto ha = hash_all(cfg.seed, static_cast<std::uint64_t>(step), a);
      auto hb = hash_all(cfg.seed, static_cast<std::uint64_t>(step), b);
      return ha != hb ? ha < hb : a < b;
    });
    std::vector<Scenario> chosen;
    for (int i = 0; i < picked; ++i) chosen.push_back(scenarios[order[static_cast<std::size_t>(i)]]);

    RolloutConfig rc = cfg.rollout;
    rc.group_size = group * reps;
    ToyPolicyPort port(L.policy);
    auto transcripts = run_batch(chosen, port, engine, rc, cfg.parallelism,
                                 hash_all(cfg.seed, static_cast<std::uint64_t>(step), 0x7a1aULL));
    auto record = summarize(transcripts, step);

    auto batch = assemble_batch(transcripts, L.policy.snapshot_id(), group);
    UpdateStats stats = cfg.algo == Algo::Ppo ? ppo_update(L, batch, cfg.opt) : grpo_update(L, batch, cfg.opt);
    record.clip_fraction = stats.clip_fraction;
    record.entropy = stats.entropy;
    if (!std::isfinite(record.mean_reward) || !std::isfinite(record.mean_emotion) || stats.skipped) {
      if (hooks.on_snapshot) hooks.on_snapshot(L, step);
      throw Error("training produced non-finite statistics at step " + std::to_string(step));
    }
    res.curve.push_back(record);
    if (hooks.on_step) hooks.on_step(record, stats);
    if (hooks.on_snapshot && cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0) {
      hooks.on_snapshot(L, step + 1);
    }
  }
  res.final_eval = evaluate_policy(L.policy, scenarios, engine, cfg.rollout, cfg.eval_episodes, cfg.seed,
                                   cfg.parallelism);
  return res;
}

// ---------------------------------------------------------------------------
// Snapshots

inline nlohmann::json snapshot_to_json(const Learner& L, const std::string& config_hash, int step) {
  return {{"snapshot_id", L.policy.snapshot_id()},
          {"config_hash", config_hash},
          {"step", step},
          {"states", L.policy.num_states()},
          {"actions", L.policy.num_actions()},
          {"theta", L.policy.theta()},
          {"adam", {{"m", L.adam.m}, {"v", L.adam.v}, {"t", L.adam.t}}},
          {"baseline", L.baseline},
          {"baseline_count", L.baseline_count},
          {"updates", L.updates}};
}

struct LoadedSnapshot {
  Learner learner;
  std::string config_hash;
  int step = 0;
};

inline LoadedSnapshot snapshot_from_json(const nlohmann::json& j) {
  try {
    LoadedSnapshot s;
    ToyPolicy p(j.at("states").get<std::size_t>(), j.at("actions").get<std::size_t>());
    p.set_theta(j.at("theta").get<std::vector<double>>());
    s.learner = Learner(std::move(p));
    s.learner.adam.m = j.at("adam").at("m").get<std::vector<double>>();
    s.learner.adam.v = j.at("adam").at("v").get<std::vector<double>>();
    s.learner.adam.t = j.at("adam").at("t").get<long>();
    s.learner.baseline = j.at("baseline").get<std::vector<double>>();
    s.learner.baseline_count = j.at("baseline_count").get<std::vector<long>>();
    s.learner.updates = j.at("updates").get<long>();
    s.config_hash = j.at("config_hash").get<std::string>();
    s.step = j.at("step").get<int>();
    if (s.learner.policy.snapshot_id() != j.at("snapshot_id").get<std::string>()) {
      throw ConfigError("snapshot parameters do not match their recorded snapshot id");
    }
    if (s.learner.adam.m.size() != s.learner.policy.theta().size() ||
        s.learner.adam.v.size() != s.learner.policy.theta().size() ||
        s.learner.baseline.size() != s.learner.policy.num_states() ||
        s.learner.baseline_count.size() != s.learner.policy.num_states()) {
      throw ConfigError("snapshot optimizer state has the wrong shape");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("snapshot document: ") + e.what());
  }
}

}  // namespace rlver
