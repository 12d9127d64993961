#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlver/error.hpp"
#include "rlver/text.hpp"

namespace rlver {

inline constexpr double kDefaultInitialEmotion = 50.0;
inline constexpr double kDefaultDeltaClamp = 10.0;

/// Running emotion of the simulated user. `value` is always the left fold
/// initial + deltas[0] + deltas[1] + ..., and every stored delta is post-clamp.
class EmotionState {
 public:
  EmotionState() = default;
  explicit EmotionState(double initial) : initial_(initial), value_(initial) {}

  double value() const noexcept { return value_; }
  double initial_value() const noexcept { return initial_; }
  const std::vector<double>& deltas() const noexcept { return deltas_; }

  friend EmotionState apply_delta(EmotionState state, double delta, double clamp);

 private:
  double initial_ = kDefaultInitialEmotion;
  double value_ = kDefaultInitialEmotion;
  std::vector<double> deltas_;
};

/// Adds clip(delta, -clamp, +clamp). No floor or ceiling on the result;
/// termination rules act on out-of-range values.
inline EmotionState apply_delta(EmotionState state, double delta, double clamp) {
  if (!(clamp > 0)) throw UsageError("apply_delta: clamp must be positive");
  if (!std::isfinite(delta)) throw ParseError("apply_delta: non-finite emotion change");
  double clipped = std::clamp(delta, -clamp, clamp);
  state.deltas_.push_back(clipped);
  state.value_ += clipped;
  return state;
}

enum class EmotionBucket { S, A, B, C, F };

inline EmotionBucket bucket_of(double value) {
  if (value >= 100.0) return EmotionBucket::S;
  if (value >= 70.0) return EmotionBucket::A;
  if (value >= 40.0) return EmotionBucket::B;
  if (value >= 10.0) return EmotionBucket::C;
  return EmotionBucket::F;
}

inline constexpr std::string_view to_string(EmotionBucket b) noexcept {
  switch (b) {
    case EmotionBucket::S: return "S";
    case EmotionBucket::A: return "A";
    case EmotionBucket::B: return "B";
    case EmotionBucket::C: return "C";
    case EmotionBucket::F: return "F";
  }
  return "?";
}

inline constexpr std::size_t bucket_index(EmotionBucket b) noexcept {
  return static_cast<std::size_t>(b);
}

enum class RewardMode { Terminal, PerTurn };

struct RewardSpec {
  RewardMode mode = RewardMode::Terminal;
  bool format_gate = true;
  double success_threshold = 100.0;
  double failure_threshold_train = 0.0;
  double failure_threshold_eval = 10.0;

  void validate() const {
    if (!(success_threshold > failure_threshold_eval &&
          failure_threshold_eval >= failure_threshold_train)) {
      throw ConfigError(
          "reward spec requires success_threshold > failure_threshold_eval >= "
          "failure_threshold_train");
    }
  }
};

/// Outcome of a finished episode under evaluation semantics.
enum class TerminationCause { Success, Failure, MaxTurns, FormatViolation };

/// Why the rollout loop stopped. Distinct from the outcome: a run that stops on
/// reaching exactly the success threshold is not a Success (which is strictly above).
enum class StopReason { UserGoodbye, SuccessThreshold, FailureThreshold, MaxTurns, FormatViolation };

inline constexpr std::string_view to_string(TerminationCause c) noexcept {
  switch (c) {
    case TerminationCause::Success: return "success";
    case TerminationCause::Failure: return "failure";
    case TerminationCause::MaxTurns: return "max_turns";
    case TerminationCause::FormatViolation: return "format_violation";
  }
  return "?";
}

inline constexpr std::string_view to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::UserGoodbye: return "user_goodbye";
    case StopReason::SuccessThreshold: return "success_threshold";
    case StopReason::FailureThreshold: return "failure_threshold";
    case StopReason::MaxTurns: return "max_turns";
    case StopReason::FormatViolation: return "format_violation";
  }
  return "?";
}

inline std::optional<TerminationCause> termination_from_string(std::string_view s) {
  for (auto c : {TerminationCause::Success, TerminationCause::Failure, TerminationCause::MaxTurns,
                 TerminationCause::FormatViolation}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

inline std::optional<StopReason> stop_reason_from_string(std::string_view s) {
  for (auto r : {StopReason::UserGoodbye, StopReason::SuccessThreshold,
                 StopReason::FailureThreshold, StopReason::MaxTurns,
                 StopReason::FormatViolation}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

struct ThinkFormat {
  bool valid = false;
  std::string thought;
  std::string reply;
};

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";

/// Accepts exactly: optional whitespace, one <think>...</think> block, then a
/// non-blank reply. Neither the thought nor the reply may contain another tag.
inline ThinkFormat check_think_format(std::string_view output) {
  ThinkFormat result;
  std::string_view rest = output;
  while (!rest.empty() && text::is_space(rest.front())) rest.remove_prefix(1);
  if (rest.substr(0, kThinkOpen.size()) != kThinkOpen) return result;
  rest.remove_prefix(kThinkOpen.size());

  auto close = rest.find(kThinkClose);
  if (close == std::string_view::npos) return result;
  std::string_view thought = rest.substr(0, close);
  std::string_view reply = rest.substr(close + kThinkClose.size());

  if (thought.find(kThinkOpen) != std::string_view::npos) return result;
  if (reply.find(kThinkOpen) != std::string_view::npos ||
      reply.find(kThinkClose) != std::string_view::npos) {
    return result;
  }
  if (text::trim(reply).empty()) return result;

  result.valid = true;
  result.thought = std::string(text::trim(thought));
  result.reply = std::string(text::trim(reply));
  return result;
}

}  // namespace rlver
