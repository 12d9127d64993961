#pragma once

#include <algorithm>
#include <vector>

#include "rlver/emotion.hpp"
#include "rlver/transcript.hpp"

namespace rlver {

/// True when the format gate applies to this transcript and some model turn
/// breaks the think-then-reply shape.
inline bool violates_format(const DialogueTranscript& t, const RewardSpec& spec) {
  if (!spec.format_gate || !t.thinking_mode) return false;
  return std::any_of(t.turns.begin(), t.turns.end(), [](const Turn& turn) {
    return turn.speaker == Speaker::Model && !check_think_format(turn.text).valid;
  });
}

/// Terminal emotion normalized to [0, 1]; zero when the format gate fires.
inline double final_reward(const DialogueTranscript& t, const RewardSpec& spec) {
  if (!t.terminated()) throw UsageError("final_reward: transcript " + t.id + " is not terminated");
  if (violates_format(t, spec)) return 0.0;
  return std::clamp(t.final_emotion, 0.0, 100.0) / 100.0;
}

/// Emotion value after each model turn, unnormalized. A model turn the
/// simulator never judged (format stop) carries the value it was emitted at.
inline std::vector<double> per_turn_rewards(const DialogueTranscript& t) {
  std::vector<double> out;
  for (const auto& turn : t.turns) {
    if (turn.speaker == Speaker::Model) out.push_back(turn.emotion_after);
  }
  return out;
}

/// Per-model-turn training signal selected by `spec.mode`: terminal mode puts
/// the final reward on the last step, per-turn mode uses each turn's emotion / 100.
inline std::vector<double> step_rewards(const DialogueTranscript& t, const RewardSpec& spec) {
  auto values = per_turn_rewards(t);
  if (spec.mode == RewardMode::PerTurn) {
    if (violates_format(t, spec)) return std::vector<double>(values.size(), 0.0);
    for (auto& v : values) v /= 100.0;
    return values;
  }
  std::vector<double> out(values.size(), 0.0);
  if (!out.empty()) out.back() = final_reward(t, spec);
  return out;
}

/// Evaluation outcome: strictly above the success threshold, strictly below the
/// eval failure threshold, otherwise MaxTurns. FormatViolation only when the gate fired.
inline TerminationCause classify_outcome(const DialogueTranscript& t, const RewardSpec& spec) {
  if (violates_format(t, spec)) return TerminationCause::FormatViolation;
  if (t.final_emotion > spec.success_threshold) return TerminationCause::Success;
  if (t.final_emotion < spec.failure_threshold_eval) return TerminationCause::Failure;
  return TerminationCause::MaxTurns;
}

}  // namespace rlver
