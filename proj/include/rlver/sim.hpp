#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "rlver/emotion.hpp"
#include "rlver/error.hpp"
#include "rlver/gateway.hpp"
#include "rlver/hashing.hpp"
#include "rlver/prompts.hpp"
#include "rlver/scenario.hpp"
#include "rlver/strategy.hpp"
#include "rlver/text.hpp"
#include "rlver/transcript.hpp"

namespace rlver {

struct EmotionJudgment {
  std::string content;
  std::string target_completion;
  std::string activity;
  std::string analyze;
  double change = 0.0;

  friend bool operator==(const EmotionJudgment&, const EmotionJudgment&) = default;
};

struct UserReply {
  std::string thinking;
  std::string response;
  bool said_goodbye = false;

  friend bool operator==(const UserReply&, const UserReply&) = default;
};

inline const std::vector<std::string>& default_farewell_markers() {
  static const std::vector<std::string> markers{"goodbye", "bye-bye"};
  return markers;
}

inline bool contains_farewell(std::string_view response, const std::vector<std::string>& markers) {
  return std::any_of(markers.begin(), markers.end(),
                     [&](const std::string& m) { return text::contains_ci(response, m); });
}

/// User-visible part of a model turn: the reply after the think block when the
/// block is well formed, otherwise the raw text.
inline std::string visible_reply(std::string_view raw) {
  auto f = check_think_format(raw);
  return f.valid ? f.reply : std::string(text::trim(raw));
}

// ---------------------------------------------------------------------------
// Scripted engine

struct StrategyResponse {
  double delta_mean = 0.0;
  double acceptance = 0.0;
};

/// Knobs shared by every scripted profile. Vanilla values reproduce a probe
/// acceptance rate near 52% and a reveal rate near 79%; challenging profiles
/// scale both down.
struct ScriptedCalibration {
  double goal_delta = 8.0;
  double goal_acceptance = 0.95;
  double goal_bonus = 2.0;
  double other_delta = 3.0;
  double other_acceptance = 0.481;
  double miss_penalty = -2.0;
  double verbosity_penalty = 0.05;  // per word beyond length_cap
  std::size_t length_cap = 80;
  double reveal_level = 0.786;
  double challenging_acceptance_scale = 0.63;
  double challenging_reveal_scale = 0.8;
  double clamp = kDefaultDeltaClamp;
};

struct ScriptedAffectProfile {
  std::map<StrategyId, StrategyResponse> strategy_response;
  StrategyId goal_strategy;
  double goal_bonus = 2.0;
  double miss_penalty = -2.0;
  double verbosity_penalty = 0.05;
  std::size_t length_cap = 80;
  double reveal_level = 0.786;
  double clamp = kDefaultDeltaClamp;
  std::string need;  // hidden intention, named verbatim when revealed
  StrategyLexicon lexicon = StrategyLexicon::defaults();
  std::vector<std::string> farewell_markers = default_farewell_markers();

  void validate() const {
    if (!(clamp > 0)) throw ConfigError("scripted profile: clamp must be positive");
    for (const auto& [id, r] : strategy_response) {
      if (std::abs(r.delta_mean) > clamp) {
        throw ConfigError("scripted profile: delta_mean for " + std::string(id.label()) +
                          " exceeds the clamp");
      }
      if (!(r.acceptance >= 0.0 && r.acceptance <= 1.0)) {
        throw ConfigError("scripted profile: acceptance for " + std::string(id.label()) +
                          " outside [0, 1]");
      }
    }
    if (!(reveal_level >= 0.0 && reveal_level <= 1.0)) {
      throw ConfigError("scripted profile: reveal_level outside [0, 1]");
    }
  }

  /// Shipped profile for a scenario: the topic's goal strategy pays most.
  static ScriptedAffectProfile for_scenario(const Scenario& s, const ScriptedCalibration& cal = {}) {
    const bool hard = s.difficulty == Difficulty::Challenging;
    const double acc_scale = hard ? cal.challenging_acceptance_scale : 1.0;
    ScriptedAffectProfile p;
    p.goal_strategy = main5(s.topic().goal_strategy);
    for (auto id : all_strategies(StrategySchema::Main5)) {
      bool goal = id == p.goal_strategy;
      p.strategy_response[id] = {goal ? cal.goal_delta : cal.other_delta,
                                 (goal ? cal.goal_acceptance : cal.other_acceptance) * acc_scale};
    }
    p.goal_bonus = cal.goal_bonus;
    p.miss_penalty = cal.miss_penalty;
    p.verbosity_penalty = cal.verbosity_penalty;
    p.length_cap = cal.length_cap;
    p.reveal_level = cal.reveal_level * (hard ? cal.challenging_reveal_scale : 1.0);
    p.clamp = cal.clamp;
    p.need = s.hidden_intention;
    p.validate();
    return p;
  }
};

namespace detail {
inline constexpr std::uint64_t kAcceptSalt = 0xacce97ULL;
inline constexpr std::uint64_t kRevealSalt = 0x5e7ea1ULL;
inline constexpr std::uint64_t kPhraseSalt = 0x9a7a5eULL;

inline std::string join_labels(const std::vector<StrategyId>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ", ";
    out += "(" + std::string(id.label()) + ") " + std::string(id.name());
  }
  return out;
}
}  // namespace detail

/// Whether the scripted user accepts `id` on turn `turn_index` of the episode
/// seeded with `seed`. Pure function of its inputs.
inline bool scripted_accepts(const ScriptedAffectProfile& p, StrategyId id, std::uint64_t seed,
                             std::size_t turn_index) {
  auto it = p.strategy_response.find(id);
  double acceptance = it == p.strategy_response.end() ? 0.0 : it->second.acceptance;
  double u = unit_interval(hash_all(seed, turn_index, id.index, detail::kAcceptSalt));
  return u < acceptance;
}

/// Judges `model_turn`, the user-visible text of the newest model turn.
/// `turn_index` counts model turns from 0.
inline EmotionJudgment scripted_judge(const ScriptedAffectProfile& p, std::string_view model_turn,
                                      std::uint64_t seed, std::size_t turn_index) {
  if (text::trim(model_turn).empty()) throw UsageError("scripted_judge: empty model turn");
  auto detected = p.lexicon.detect(model_turn);

  double change = 0.0;
  std::vector<StrategyId> accepted, rejected;
  bool goal_hit = false;
  for (const auto& id : detected) {
    auto it = p.strategy_response.find(id);
    if (it != p.strategy_response.end() && scripted_accepts(p, id, seed, turn_index)) {
      change += it->second.delta_mean;
      accepted.push_back(id);
    } else {
      change += p.miss_penalty;
      rejected.push_back(id);
    }
    goal_hit = goal_hit || id == p.goal_strategy;
  }
  if (detected.empty()) change = p.miss_penalty;
  if (goal_hit) change += p.goal_bonus;
  auto words = text::count_words(model_turn);
  if (words > p.length_cap) change -= p.verbosity_penalty * static_cast<double>(words - p.length_cap);
  change = std::clamp(change, -p.clamp, p.clamp);

  EmotionJudgment j;
  j.content = detected.empty() ? "The NPC offers general remarks without a recognizable support strategy."
                               : "The NPC uses " + detail::join_labels(detected) + ".";
  j.target_completion = goal_hit ? "The reply touches what the character is really after."
                                 : "The reply does not reach what the character is really after.";
  j.activity = accepted.empty() ? "The character stays guarded."
                                : "The character warms to " + detail::join_labels(accepted) + ".";
  j.analyze = rejected.empty() ? "Nothing in the reply grates on the character."
                               : "The character brushes off " + detail::join_labels(rejected) + ".";
  j.change = change;
  return j;
}

/// In-character reply conditioned on the emotion bucket. S and F end the
/// conversation with a farewell.
inline UserReply scripted_reply(const ScriptedAffectProfile& p, const EmotionState& state,
                                std::uint64_t seed, std::size_t turn_index) {
  static constexpr std::array<std::string_view, 2> kS{
      "Thank you so much, I feel a lot lighter now. Goodbye!",
      "This really helped, thank you. Bye-bye!"};
  static constexpr std::array<std::string_view, 2> kA{
      "That actually helps. I feel like you get it.",
      "Yeah, that makes me feel better about the whole thing."};
  static constexpr std::array<std::string_view, 2> kB{
      "Hmm, maybe. I'm still not sure what to make of it.",
      "I guess so. It's all still a bit of a mess in my head."};
  static constexpr std::array<std::string_view, 2> kC{
      "That's not really what I need right now.",
      "I don't know, that doesn't help much."};
  static constexpr std::array<std::string_view, 2> kF{
      "Forget it, this isn't helping at all. Goodbye.",
      "I'm done talking about this. Bye-bye."};

  auto bucket = bucket_of(state.value());
  std::size_t pick = hash_all(seed, turn_index, detail::kPhraseSalt) % 2;
  UserReply r;
  switch (bucket) {
    case EmotionBucket::S: r.response = kS[pick]; break;
    case EmotionBucket::A: r.response = kA[pick]; break;
    case EmotionBucket::B: r.response = kB[pick]; break;
    case EmotionBucket::C: r.response = kC[pick]; break;
    case EmotionBucket::F: r.response = kF[pick]; break;
  }
  bool farewell = bucket == EmotionBucket::S || bucket == EmotionBucket::F;
  if (!farewell && !p.need.empty() &&
      unit_interval(hash_all(seed, turn_index, detail::kRevealSalt)) < p.reveal_level) {
    r.response += " What I need: " + p.need;
  }
  r.thinking = "Emotion " + std::string(to_string(bucket)) + ". What I am after: " +
               (p.need.empty() ? std::string("to feel understood") : p.need);
  r.said_goodbye = contains_farewell(r.response, p.farewell_markers);
  return r;
}

/// Whether a scripted reply names the hidden intention.
inline bool reveals_need(const ScriptedAffectProfile& p, const UserReply& r) {
  return !p.need.empty() && r.response.find(p.need) != std::string::npos;
}

inline std::string scripted_opener(const Scenario& s) {
  auto bg = text::trim(s.background);
  auto stop = bg.find_first_of(".!?");
  std::string first(stop == std::string_view::npos ? bg : bg.substr(0, stop + 1));
  return "Hey, can I talk to you about something? " + first;
}

// ---------------------------------------------------------------------------
// Output parsers

namespace detail {

/// Normalized label at the start of a line: strips markdown emphasis and
/// heading marks, returns the lowercase text before the first ':'.
inline std::optional<std::pair<std::string, std::string>> line_label(std::string_view line) {
  std::string_view s = text::trim(line);
  while (!s.empty() && (s.front() == '*' || s.front() == '#' || s.front() == '-')) {
    s.remove_prefix(1);
    s = text::trim(s);
  }
  auto colon = s.find(':');
  if (colon == std::string_view::npos || colon > 24) return std::nullopt;
  std::string label;
  for (char c : s.substr(0, colon)) {
    if (c != '*' && !text::is_space(c)) label.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  std::string_view rest = s.substr(colon + 1);
  while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
  return std::make_pair(label, std::string(text::trim(rest)));
}

}  // namespace detail

/// Splits a judge output into its labeled sections. Absent sections stay
/// empty; the Change section must yield a number.
inline Parsed<EmotionJudgment> parse_emotion_output(std::string_view raw) {
  static constexpr std::array<std::string_view, 5> kLabels{"content", "targetcompletion", "activity",
                                                           "analyze", "change"};
  std::array<std::string, 5> sections;
  std::array<bool, 5> seen{};
  int current = -1;
  for (const auto& line : text::split_lines(raw)) {
    if (auto lab = detail::line_label(line)) {
      auto it = std::find(kLabels.begin(), kLabels.end(), lab->first);
      if (it != kLabels.end()) {
        current = static_cast<int>(it - kLabels.begin());
        seen[current] = true;
        sections[current] = lab->second;
        continue;
      }
    }
    if (current >= 0) {
      if (!sections[current].empty()) sections[current] += '\n';
      sections[current] += line;
    }
  }
  if (!seen[4]) return ParseFailure{"no Change section", std::string(raw)};
  auto change_text = text::normalize_minus(sections[4]);
  auto num = text::find_number(change_text);
  if (!num) return ParseFailure{"Change section has no number", std::string(raw)};

  EmotionJudgment j;
  j.content = std::string(text::trim(sections[0]));
  j.target_completion = std::string(text::trim(sections[1]));
  j.activity = std::string(text::trim(sections[2]));
  j.analyze = std::string(text::trim(sections[3]));
  j.change = num->value;
  return j;
}

/// Splits "Thinking: ... Response: ..." output. Text without either label is
/// taken whole as the response.
inline Parsed<UserReply> parse_reply_output(std::string_view raw,
                                            const std::vector<std::string>& farewell_markers =
                                                default_farewell_markers()) {
  auto lowered = text::lower(raw);
  auto think_pos = lowered.find("thinking:");
  auto resp_pos = lowered.find("response:", think_pos == std::string::npos ? 0 : think_pos);

  UserReply r;
  if (resp_pos != std::string::npos) {
    std::size_t tb = think_pos == std::string::npos ? resp_pos : think_pos + 9;
    if (tb < resp_pos) r.thinking = std::string(text::trim(raw.substr(tb, resp_pos - tb)));
    r.response = std::string(text::trim(raw.substr(resp_pos + 9)));
  } else if (think_pos != std::string::npos) {
    return ParseFailure{"Thinking section without a Response section", std::string(raw)};
  } else {
    r.response = std::string(text::trim(raw));
  }
  // Bracketed placeholder style: "[text]".
  if (r.response.size() >= 2 && r.response.front() == '[' && r.response.back() == ']') {
    r.response = std::string(text::trim(std::string_view(r.response).substr(1, r.response.size() - 2)));
  }
  while (!r.thinking.empty() && (r.thinking.back() == '*' || r.thinking.back() == '#')) r.thinking.pop_back();
  r.thinking = std::string(text::trim(r.thinking));
  while (!r.response.empty() && r.response.front() == '*') r.response.erase(0, 1);
  r.response = std::string(text::trim(r.response));
  if (r.response.empty()) return ParseFailure{"empty response", std::string(raw)};
  r.said_goodbye = contains_farewell(r.response, farewell_markers);
  return r;
}

// ---------------------------------------------------------------------------
// Prompt rendering

inline std::string format_emotion(double v) {
  if (std::abs(v - std::round(v)) < 1e-9) return std::to_string(static_cast<long long>(std::llround(v)));
  return text::format_fixed(v, 2);
}

/// Conversation so far as the simulator sees it: the character's lines and the
/// NPC's visible replies, never the policy's think block.
inline std::string render_dialog_history(const DialogueTranscript& history) {
  std::string out;
  for (const auto& t : history.turns) {
    if (!out.empty()) out += '\n';
    if (t.speaker == Speaker::User) {
      out += "Character: " + t.text;
    } else {
      out += "NPC: " + visible_reply(t.text);
    }
  }
  return out;
}

inline std::string render_purpose(const Scenario& s, const PromptLibrary& lib) {
  std::string purpose = lib.get("dialogue_purpose");
  if (!s.goal.empty()) purpose += "\n\n* Conversation goal: " + s.goal;
  purpose += "\n\n* Hidden intention: " + s.hidden_intention;
  if (s.difficulty == Difficulty::Challenging) purpose += "\n\n" + lib.get("challenging_clause");
  return purpose;
}

inline std::string render_emotion_prompt(const Scenario& s, const EmotionState& state,
                                         const DialogueTranscript& history,
                                         const PromptLibrary& lib = PromptLibrary::builtin()) {
  if (history.turns.empty() || history.turns.back().speaker != Speaker::Model) {
    throw UsageError("render_emotion_prompt: history must end with a model turn");
  }
  return lib.render("emotion_analyzer", {{"purpose", render_purpose(s, lib)},
                                         {"persona", s.persona},
                                         {"background", s.background},
                                         {"emotion", format_emotion(state.value())},
                                         {"dialog-history", render_dialog_history(history)}});
}

inline std::string render_planning(const EmotionJudgment& j) {
  return "Content:\n" + j.content + "\nTargetCompletion:\n" + j.target_completion +
         "\nActivity:\n" + j.activity + "\nAnalyze:\n" + j.analyze;
}

inline constexpr std::string_view kOpeningHistory =
    "(The conversation has not started yet. Open it in character.)";
inline constexpr std::string_view kOpeningPlanning = "(No NPC reply yet.)";

/// Reply prompt. With no judgment the prompt asks for the opening line.
inline std::string render_reply_prompt(const Scenario& s, const EmotionState& state,
                                       const EmotionJudgment* judgment,
                                       const DialogueTranscript& history,
                                       const PromptLibrary& lib = PromptLibrary::builtin()) {
  std::string dialog = render_dialog_history(history);
  return lib.render("sentient_actor",
                    {{"purpose", render_purpose(s, lib)},
                     {"emotion-state-definition", lib.get("emotion_state_definition")},
                     {"persona", s.persona},
                     {"background", s.background},
                     {"dialog-history", dialog.empty() ? std::string(kOpeningHistory) : dialog},
                     {"planning", judgment ? render_planning(*judgment) : std::string(kOpeningPlanning)},
                     {"emotion-state", "Emotion-" + std::string(to_string(bucket_of(state.value())))}});
}

// ---------------------------------------------------------------------------
// Engines

/// The simulated user as seen by the rollout loop. Implementations must be safe
/// for concurrent episodes.
class AffectEngine {
 public:
  virtual ~AffectEngine() = default;
  virtual std::string opener(const Scenario& s, std::uint64_t seed) = 0;
  /// `history` ends with the model turn to be judged.
  virtual EmotionJudgment judge(const Scenario& s, const EmotionState& state,
                                const DialogueTranscript& history, std::uint64_t seed) = 0;
  virtual UserReply reply(const Scenario& s, const EmotionState& state, const EmotionJudgment& j,
                          const DialogueTranscript& history, std::uint64_t seed) = 0;
};

class ScriptedEngine final : public AffectEngine {
 public:
  explicit ScriptedEngine(ScriptedCalibration cal = {}, StrategyLexicon lexicon = StrategyLexicon::defaults())
      : cal_(cal), lexicon_(std::move(lexicon)) {}

  ScriptedAffectProfile profile(const Scenario& s) const {
    auto p = ScriptedAffectProfile::for_scenario(s, cal_);
    p.lexicon = lexicon_;
    return p;
  }

  std::string opener(const Scenario& s, std::uint64_t) override { return scripted_opener(s); }

  EmotionJudgment judge(const Scenario& s, const EmotionState&, const DialogueTranscript& history,
                        std::uint64_t seed) override {
    if (history.turns.empty() || history.turns.back().speaker != Speaker::Model) {
      throw UsageError("judge: history must end with a model turn");
    }
    return scripted_judge(profile(s), visible_reply(history.turns.back().text), seed,
                          history.model_turn_count() - 1);
  }

  UserReply reply(const Scenario& s, const EmotionState& state, const EmotionJudgment&,
                  const DialogueTranscript& history, std::uint64_t seed) override {
    return scripted_reply(profile(s), state, seed, history.model_turn_count());
  }

 private:
  ScriptedCalibration cal_;
  StrategyLexicon lexicon_;
};

struct LlmEngineOptions {
  std::string profile;
  std::string model;  // empty: profile default
  double temperature = 0.0;
  int parse_retries = 3;
  std::vector<std::string> farewell_markers = default_farewell_markers();
};

/// Simulator backed by a chat-completion endpoint. Each parse retry uses a
/// distinct seed tag so record/replay caches keep every attempt.
class LlmEngine final : public AffectEngine {
 public:
  LlmEngine(Gateway& gateway, LlmEngineOptions opts,
            const PromptLibrary& lib = PromptLibrary::builtin())
      : gw_(gateway), opts_(std::move(opts)), lib_(lib) {}

  std::string opener(const Scenario& s, std::uint64_t seed) override {
    DialogueTranscript empty;
    EmotionState state(s.initial_emotion);
    auto prompt = render_reply_prompt(s, state, nullptr, empty, lib_);
    return with_retries<UserReply>(prompt, seed, "open", [&](std::string_view raw) {
             return parse_reply_output(raw, opts_.farewell_markers);
           }).response;
  }

  EmotionJudgment judge(const Scenario& s, const EmotionState& state, const DialogueTranscript& history,
                        std::uint64_t seed) override {
    auto prompt = render_emotion_prompt(s, state, history, lib_);
    return with_retries<EmotionJudgment>(prompt, seed, "judge-" + std::to_string(history.turns.size()),
                                         [](std::string_view raw) { return parse_emotion_output(raw); });
  }

  UserReply reply(const Scenario& s, const EmotionState& state, const EmotionJudgment& j,
                  const DialogueTranscript& history, std::uint64_t seed) override {
    auto prompt = render_reply_prompt(s, state, &j, history, lib_);
    return with_retries<UserReply>(prompt, seed, "reply-" + std::to_string(history.turns.size()),
                                   [&](std::string_view raw) {
                                     return parse_reply_output(raw, opts_.farewell_markers);
                                   });
  }

 private:
  template <typename T, typename ParseFn>
  T with_retries(const std::string& prompt, std::uint64_t seed, const std::string& purpose,
                 ParseFn parse) {
    ChatRequest req;
    req.profile = opts_.profile;
    req.model = opts_.model;
    req.temperature = opts_.temperature;
    req.messages = {{"user", prompt}};
    std::string last;
    for (int attempt = 0; attempt <= opts_.parse_retries; ++attempt) {
      req.tag = to_hex(seed) + "/" + purpose + "/" + std::to_string(attempt);
      req.seed_tag = req.tag;
      std::string raw;
      try {
        raw = gw_.complete(req);
      } catch (const TransportFailure& e) {
        throw EpisodeAbort(std::string("simulator unreachable: ") + e.what());
      }
      auto parsed = parse(raw);
      if (parsed) return std::move(parsed).value();
      last = parsed.failure().reason;
      spdlog::warn("simulator output for {} unparsable: {}", req.tag, last);
    }
    throw EpisodeAbort("simulator output unparsable after " + std::to_string(opts_.parse_retries) +
                       " retries (" + purpose + "): " + last);
  }

  Gateway& gw_;
  LlmEngineOptions opts_;
  const PromptLibrary& lib_;
};

}  // namespace rlver
