#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlver/emotion.hpp"
#include "rlver/error.hpp"
#include "rlver/hashing.hpp"
#include "rlver/rollout.hpp"
#include "rlver/scenario.hpp"
#include "rlver/strategy.hpp"

namespace rlver {

inline constexpr std::size_t kTurnBuckets = 3;     // model turns so far: 0, 1-2, 3+
inline constexpr std::size_t kEmotionBuckets = 5;  // S A B C F
inline constexpr std::size_t kTopicCount = kTopics.size();
inline constexpr std::size_t kToyStates = kTurnBuckets * kEmotionBuckets * kTopicCount;
inline constexpr std::size_t kToyActions = kMain5Strategies.size() + 1;  // + generic filler
inline constexpr std::size_t kFillerAction = kToyActions - 1;

inline std::size_t turn_bucket(std::size_t model_turns) noexcept {
  return model_turns == 0 ? 0 : (model_turns <= 2 ? 1 : 2);
}

inline std::size_t toy_state(std::size_t model_turns, double emotion, int topic_id) {
  if (topic_id < 1 || topic_id > static_cast<int>(kTopicCount)) {
    throw UsageError("toy_state: topic_id out of range");
  }
  return (turn_bucket(model_turns) * kEmotionBuckets + bucket_index(bucket_of(emotion))) * kTopicCount +
         static_cast<std::size_t>(topic_id - 1);
}

inline std::size_t toy_state(const DialogueTranscript& history) {
  return toy_state(history.model_turn_count(), history.current_emotion(), history.topic_id);
}

/// Numerically stable softmax of one row of logits.
inline std::vector<double> softmax(const double* logits, std::size_t n) {
  double mx = *std::max_element(logits, logits + n);
  std::vector<double> p(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

inline std::vector<double> log_softmax(const double* logits, std::size_t n) {
  double mx = *std::max_element(logits, logits + n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
  double lz = mx + std::log(z);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = logits[i] - lz;
  return out;
}

/// Tabular softmax policy: one row of logits per discrete state.
class ToyPolicy {
 public:
  ToyPolicy(std::size_t states = kToyStates, std::size_t actions = kToyActions)
      : states_(states), actions_(actions), theta_(states * actions, 0.0) {
    if (states == 0 || actions == 0) throw UsageError("ToyPolicy needs at least one state and action");
    refresh_id();
  }

  std::size_t num_states() const noexcept { return states_; }
  std::size_t num_actions() const noexcept { return actions_; }
  const std::vector<double>& theta() const noexcept { return theta_; }
  const std::string& snapshot_id() const noexcept { return id_; }

  void set_theta(std::vector<double> theta) {
    if (theta.size() != theta_.size()) throw UsageError("ToyPolicy::set_theta: size mismatch");
    theta_ = std::move(theta);
    refresh_id();
  }

  const double* logits(std::size_t state) const {
    check_state(state);
    return theta_.data() + state * actions_;
  }
  std::vector<double> probs(std::size_t state) const { return softmax(logits(state), actions_); }
  std::vector<double> log_probs(std::size_t state) const { return log_softmax(logits(state), actions_); }

  /// Action with the highest probability; lowest index wins ties.
  std::size_t argmax(std::size_t state) const {
    const double* l = logits(state);
    return static_cast<std::size_t>(std::max_element(l, l + actions_) - l);
  }

 private:
  void check_state(std::size_t s) const {
    if (s >= states_) throw UsageError("ToyPolicy: state " + std::to_string(s) + " out of range");
  }
  void refresh_id() {
    std::uint64_t h = fnv1a64("toy");
    for (double v : theta_) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = hash_combine(h, bits);
    }
    id_ = "toy-" + to_hex(h);
  }

  std::size_t states_;
  std::size_t actions_;
  std::vector<double> theta_;
  std::string id_;
};

struct SampledAction {
  std::size_t action;
  double log_prob;
};

/// Inverse-CDF draw from softmax(θ[state]) using a uniform derived from `seed`.
inline SampledAction sample_action(const ToyPolicy& policy, std::size_t state, std::uint64_t seed) {
  auto p = policy.probs(state);
  auto lp = policy.log_probs(state);
  double u = unit_interval(mix64(seed));
  double acc = 0.0;
  std::size_t a = p.size() - 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) {
      a = i;
      break;
    }
  }
  // Guard against rounding leaving u above the final cumulative sum.
  while (p[a] == 0.0 && a > 0) --a;
  return {a, lp[a]};
}

/// Renders toy actions as model output. Strategy actions carry a think block
/// and a reply built around the strategy's lexicon marker; the filler is a
/// bare generic reply.
class ActionTemplates {
 public:
  explicit ActionTemplates(StrategyLexicon lexicon = StrategyLexicon::defaults())
      : lexicon_(std::move(lexicon)) {}

  std::string render(std::size_t action, bool thinking_mode) const {
    if (action == kFillerAction) return "That sounds tough. Hang in there, okay?";
    StrategyId id{StrategySchema::Main5, action};
    std::string marker = lexicon_.marker(id);
    if (!marker.empty()) marker[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(marker[0])));
    std::string reply = "Okay. " + marker + "...";
    if (!thinking_mode) return reply;
    return "<think>My friend seems to need " + std::string(id.name()) + ". I will go with that.</think>" + reply;
  }

 private:
  StrategyLexicon lexicon_;
};

/// Adapts a ToyPolicy snapshot to the rollout loop. Holds the snapshot by value.
class ToyPolicyPort final : public PolicyPort {
 public:
  explicit ToyPolicyPort(ToyPolicy policy, ActionTemplates templates = ActionTemplates{})
      : policy_(std::move(policy)), templates_(std::move(templates)) {}

  PolicyOutput respond(const Scenario&, const DialogueTranscript& history, bool thinking_mode,
                       std::uint64_t seed) const override {
    std::size_t s = toy_state(history);
    auto draw = sample_action(policy_, s, seed);
    return {templates_.render(draw.action, thinking_mode), PolicyTrace{s, draw.action, draw.log_prob}};
  }

  std::string snapshot_id() const override { return policy_.snapshot_id(); }
  const ToyPolicy& policy() const noexcept { return policy_; }

 private:
  ToyPolicy policy_;
  ActionTemplates templates_;
};

}  // namespace rlver
