#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <spdlog/spdlog.h>

#include "rlver/emotion.hpp"
#include "rlver/error.hpp"
#include "rlver/gateway.hpp"
#include "rlver/hashing.hpp"
#include "rlver/prompts.hpp"
#include "rlver/reward.hpp"
#include "rlver/scenario.hpp"
#include "rlver/sim.hpp"
#include "rlver/transcript.hpp"

namespace rlver {

inline constexpr int kTrainMaxTurns = 8;
inline constexpr int kEvalMaxTurns = 10;

struct RolloutConfig {
  int max_turns = kTrainMaxTurns;
  int group_size = 1;
  RewardSpec reward_spec;
  bool thinking_mode = true;
  double delta_clamp = kDefaultDeltaClamp;
  double policy_temperature = 1.0;  // LLM policies only

  void validate() const {
    if (max_turns < 1) throw ConfigError("max_turns must be at least 1");
    if (group_size < 1) throw ConfigError("group_size must be at least 1");
    if (!(delta_clamp > 0)) throw ConfigError("delta_clamp must be positive");
    reward_spec.validate();
  }
};

struct PolicyOutput {
  std::string text;
  std::optional<PolicyTrace> trace;
};

/// Produces the next model turn. Implementations must be safe for concurrent
/// episodes and deterministic in (history, snapshot, seed) where they can be.
class PolicyPort {
 public:
  virtual ~PolicyPort() = default;
  virtual PolicyOutput respond(const Scenario& s, const DialogueTranscript& history, bool thinking_mode,
                               std::uint64_t seed) const = 0;
  virtual std::string snapshot_id() const = 0;
};

namespace detail {
inline constexpr std::uint64_t kPolicySalt = 0x9011c7ULL;
}

/// One dialogue: user opener, then alternating policy turns and simulator
/// judgments/replies until a stop rule fires or the turn budget runs out.
inline DialogueTranscript run_episode(const Scenario& s, const PolicyPort& policy, AffectEngine& engine,
                                      const RolloutConfig& cfg, std::uint64_t episode_seed,
                                      int group_index = 0) {
  DialogueTranscript t;
  t.id = s.id + "/g" + std::to_string(group_index);
  t.scenario_ref = s.id;
  t.topic_id = s.topic_id;
  t.episode_seed = episode_seed;
  t.group_index = group_index;
  t.policy_version = policy.snapshot_id();
  t.thinking_mode = cfg.thinking_mode;
  t.initial_emotion = s.initial_emotion;

  const auto& spec = cfg.reward_spec;
  EmotionState state(s.initial_emotion);
  try {
    Turn opener;
    opener.speaker = Speaker::User;
    opener.text = engine.opener(s, episode_seed);
    opener.emotion_after = state.value();
    t.turns.push_back(std::move(opener));

    for (int k = 0; k < cfg.max_turns && !t.stop_reason; ++k) {
      auto out = policy.respond(s, t, cfg.thinking_mode,
                                hash_all(episode_seed, static_cast<std::uint64_t>(k), detail::kPolicySalt));
      Turn m;
      m.speaker = Speaker::Model;
      m.text = std::move(out.text);
      m.trace = out.trace;
      m.emotion_after = state.value();
      bool well_formed = true;
      if (cfg.thinking_mode) {
        auto f = check_think_format(m.text);
        well_formed = f.valid;
        if (f.valid) m.thought = f.thought;
      }
      t.turns.push_back(std::move(m));
      if (!well_formed && spec.format_gate) {
        t.stop_reason = StopReason::FormatViolation;
        break;
      }

      auto judgment = engine.judge(s, state, t, episode_seed);
      state = apply_delta(std::move(state), judgment.change, cfg.delta_clamp);
      t.turns.back().delta = state.deltas().back();
      t.turns.back().emotion_after = state.value();

      auto reply = engine.reply(s, state, judgment, t, episode_seed);
      Turn u;
      u.speaker = Speaker::User;
      u.text = std::move(reply.response);
      if (!reply.thinking.empty()) u.thought = std::move(reply.thinking);
      u.emotion_after = state.value();
      t.turns.push_back(std::move(u));

      if (state.value() >= spec.success_threshold) {
        t.stop_reason = StopReason::SuccessThreshold;
      } else if (state.value() <= spec.failure_threshold_train) {
        t.stop_reason = StopReason::FailureThreshold;
      } else if (reply.said_goodbye) {
        t.stop_reason = StopReason::UserGoodbye;
      }
    }
  } catch (const EpisodeAbort& e) {
    spdlog::warn("episode {} aborted: {}", t.id, e.what());
    t.status = EpisodeStatus::Aborted;
    t.abort_reason = e.what();
    t.stop_reason.reset();
    t.final_emotion = state.value();
    return t;
  }

  if (!t.stop_reason) t.stop_reason = StopReason::MaxTurns;
  t.final_emotion = state.value();
  t.termination = classify_outcome(t, spec);
  t.reward = final_reward(t, spec);
  return t;
}

/// Seed of episode (scenario, group) under a master seed. Independent of
/// scheduling and of the scenario's position in the batch.
inline std::uint64_t derive_episode_seed(std::uint64_t master, std::string_view scenario_id, int group) {
  return hash_all(master, fnv1a64(scenario_id), static_cast<std::uint64_t>(group));
}

/// |scenarios| × group_size episodes, ordered scenario-major then by group.
/// Aborted episodes stay in the result with status Aborted.
inline std::vector<DialogueTranscript> run_batch(const std::vector<Scenario>& scenarios,
                                                 const PolicyPort& policy, AffectEngine& engine,
                                                 const RolloutConfig& cfg, int parallelism,
                                                 std::uint64_t master_seed) {
  if (parallelism < 1) throw UsageError("run_batch: parallelism must be at least 1");
  cfg.validate();
  const std::size_t groups = static_cast<std::size_t>(cfg.group_size);
  const std::size_t total = scenarios.size() * groups;
  std::vector<DialogueTranscript> out(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      const auto& s = scenarios[i / groups];
      int g = static_cast<int>(i % groups);
      try {
        out[i] = run_episode(s, policy, engine, cfg, derive_episode_seed(master_seed, s.id, g), g);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(total);
        return;
      }
    }
  };

  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism), std::max<std::size_t>(total, 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------
// Policy ports that do not train

/// Replays model turns from recorded transcripts, matched by (scenario, group).
class ReplayPolicy final : public PolicyPort {
 public:
  explicit ReplayPolicy(const std::vector<DialogueTranscript>& recorded, std::string id = "replay")
      : id_(std::move(id)) {
    for (const auto& t : recorded) {
      auto& turns = turns_[{t.scenario_ref, t.group_index}];
      for (const auto& turn : t.turns) {
        if (turn.speaker == Speaker::Model) turns.push_back(turn.text);
      }
    }
  }

  PolicyOutput respond(const Scenario& s, const DialogueTranscript& history, bool,
                       std::uint64_t) const override {
    auto it = turns_.find({s.id, history.group_index});
    std::size_t k = history.model_turn_count();
    if (it == turns_.end() || k >= it->second.size()) {
      throw EpisodeAbort("replay policy has no recorded turn " + std::to_string(k) + " for " + s.id);
    }
    return {it->second[k], std::nullopt};
  }

  std::string snapshot_id() const override { return id_; }

 private:
  std::string id_;
  std::map<std::pair<std::string, int>, std::vector<std::string>> turns_;
};

/// Chat-completion policy. The conversation is sent as alternating user and
/// assistant messages under the think or plain system prompt.
class LlmPolicy final : public PolicyPort {
 public:
  LlmPolicy(Gateway& gateway, std::string profile, double temperature,
            const PromptLibrary& lib = PromptLibrary::builtin())
      : gw_(gateway), profile_(std::move(profile)), temperature_(temperature), lib_(lib) {}

  PolicyOutput respond(const Scenario&, const DialogueTranscript& history, bool thinking_mode,
                       std::uint64_t seed) const override {
    ChatRequest req;
    req.profile = profile_;
    req.temperature = temperature_;
    req.messages.push_back({"system", lib_.get(thinking_mode ? "policy_think" : "policy_plain")});
    for (const auto& t : history.turns) {
      req.messages.push_back({t.speaker == Speaker::User ? "user" : "assistant", t.text});
    }
    req.tag = history.id + "/policy/" + std::to_string(history.model_turn_count());
    req.seed_tag = to_hex(seed);
    try {
      return {gw_.complete(req), std::nullopt};
    } catch (const TransportFailure& e) {
      throw EpisodeAbort(std::string("policy unreachable: ") + e.what());
    }
  }

  std::string snapshot_id() const override { return "llm:" + profile_; }

 private:
  Gateway& gw_;
  std::string profile_;
  double temperature_;
  const PromptLibrary& lib_;
};

}  // namespace rlver
