#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlver/emotion.hpp"
#include "rlver/error.hpp"
#include "rlver/hashing.hpp"

namespace rlver {

inline constexpr std::string_view kTranscriptSchemaVersion = "1";

enum class Speaker { User, Model };

/// What the toy policy sampled to produce a model turn; absent for LLM and replay policies.
struct PolicyTrace {
  std::size_t state = 0;
  std::size_t action = 0;
  double log_prob = 0.0;

  friend bool operator==(const PolicyTrace&, const PolicyTrace&) = default;
};

struct Turn {
  Speaker speaker = Speaker::User;
  std::string text;                 // raw output, including any think block
  std::optional<std::string> thought;
  double emotion_after = 0.0;
  std::optional<double> delta;      // set on model turns the simulator judged
  std::optional<PolicyTrace> trace;

  friend bool operator==(const Turn&, const Turn&) = default;
};

enum class EpisodeStatus { Completed, Aborted };

struct DialogueTranscript {
  std::string id;
  std::string scenario_ref;
  int topic_id = 0;
  std::uint64_t episode_seed = 0;
  int group_index = 0;
  std::string policy_version;
  bool thinking_mode = true;
  double initial_emotion = kDefaultInitialEmotion;
  std::vector<Turn> turns;
  EpisodeStatus status = EpisodeStatus::Completed;
  std::optional<TerminationCause> termination;
  std::optional<StopReason> stop_reason;
  double final_emotion = kDefaultInitialEmotion;  // e_T
  double reward = 0.0;
  std::string abort_reason;

  bool terminated() const noexcept {
    return status == EpisodeStatus::Completed && termination.has_value();
  }
  bool aborted() const noexcept { return status == EpisodeStatus::Aborted; }

  std::size_t model_turn_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : turns) n += t.speaker == Speaker::Model;
    return n;
  }

  /// Emotion after the most recent turn, or the initial value for an empty history.
  double current_emotion() const noexcept {
    return turns.empty() ? initial_emotion : turns.back().emotion_after;
  }

  friend bool operator==(const DialogueTranscript&, const DialogueTranscript&) = default;
};

namespace detail {

inline std::string_view speaker_name(Speaker s) { return s == Speaker::User ? "user" : "model"; }

inline Speaker speaker_from(const std::string& s) {
  if (s == "user") return Speaker::User;
  if (s == "model") return Speaker::Model;
  throw ParseError("unknown speaker '" + s + "'");
}

inline std::uint64_t seed_from_hex(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = std::stoull(s, &pos, 16);
  if (pos != s.size()) throw ParseError("bad episode_seed '" + s + "'");
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const Turn& t) {
  nlohmann::json j;
  j["speaker"] = detail::speaker_name(t.speaker);
  j["text"] = t.text;
  if (t.thought) j["thought"] = *t.thought;
  j["emotion_after"] = t.emotion_after;
  if (t.delta) j["delta"] = *t.delta;
  if (t.trace) {
    j["trace"] = {{"state", t.trace->state}, {"action", t.trace->action},
                  {"log_prob", t.trace->log_prob}};
  }
  return j;
}

inline Turn turn_from_json(const nlohmann::json& j) {
  Turn t;
  t.speaker = detail::speaker_from(j.at("speaker").get<std::string>());
  t.text = j.at("text").get<std::string>();
  if (j.contains("thought")) t.thought = j.at("thought").get<std::string>();
  t.emotion_after = j.at("emotion_after").get<double>();
  if (j.contains("delta")) t.delta = j.at("delta").get<double>();
  if (j.contains("trace")) {
    const auto& tr = j.at("trace");
    t.trace = PolicyTrace{tr.at("state").get<std::size_t>(), tr.at("action").get<std::size_t>(),
                          tr.at("log_prob").get<double>()};
  }
  return t;
}

inline nlohmann::json to_json(const DialogueTranscript& d) {
  nlohmann::json j;
  j["schema_version"] = kTranscriptSchemaVersion;
  j["id"] = d.id;
  j["scenario_ref"] = d.scenario_ref;
  j["topic_id"] = d.topic_id;
  j["episode_seed"] = to_hex(d.episode_seed);
  j["group_index"] = d.group_index;
  j["policy_version"] = d.policy_version;
  j["thinking_mode"] = d.thinking_mode;
  j["initial_emotion"] = d.initial_emotion;
  j["status"] = d.aborted() ? "aborted" : "completed";
  if (d.termination) j["termination"] = to_string(*d.termination);
  if (d.stop_reason) j["stop_reason"] = to_string(*d.stop_reason);
  j["e_T"] = d.final_emotion;
  j["reward"] = d.reward;
  if (!d.abort_reason.empty()) j["abort_reason"] = d.abort_reason;
  auto turns = nlohmann::json::array();
  for (const auto& t : d.turns) turns.push_back(to_json(t));
  j["turns"] = std::move(turns);
  return j;
}

inline DialogueTranscript transcript_from_json(const nlohmann::json& j) {
  auto version = j.at("schema_version").get<std::string>();
  if (version != kTranscriptSchemaVersion) {
    throw ParseError("unsupported transcript schema_version " + version);
  }
  DialogueTranscript d;
  d.id = j.at("id").get<std::string>();
  d.scenario_ref = j.at("scenario_ref").get<std::string>();
  d.topic_id = j.at("topic_id").get<int>();
  d.episode_seed = detail::seed_from_hex(j.at("episode_seed").get<std::string>());
  d.group_index = j.at("group_index").get<int>();
  d.policy_version = j.at("policy_version").get<std::string>();
  d.thinking_mode = j.at("thinking_mode").get<bool>();
  d.initial_emotion = j.at("initial_emotion").get<double>();
  auto status = j.at("status").get<std::string>();
  if (status == "aborted") {
    d.status = EpisodeStatus::Aborted;
  } else if (status != "completed") {
    throw ParseError("unknown status '" + status + "'");
  }
  if (j.contains("termination")) {
    auto s = j.at("termination").get<std::string>();
    d.termination = termination_from_string(s);
    if (!d.termination) throw ParseError("unknown termination '" + s + "'");
  }
  if (j.contains("stop_reason")) {
    auto s = j.at("stop_reason").get<std::string>();
    d.stop_reason = stop_reason_from_string(s);
    if (!d.stop_reason) throw ParseError("unknown stop_reason '" + s + "'");
  }
  d.final_emotion = j.at("e_T").get<double>();
  d.reward = j.at("reward").get<double>();
  if (j.contains("abort_reason")) d.abort_reason = j.at("abort_reason").get<std::string>();
  for (const auto& t : j.at("turns")) d.turns.push_back(turn_from_json(t));
  return d;
}

/// Line-delimited transcript file writer. Safe to share between rollout workers.
class TranscriptWriter {
 public:
  explicit TranscriptWriter(const std::string& path, bool append = false)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw ConfigError("cannot open transcript file for writing: " + path);
  }

  void write(const DialogueTranscript& d) {
    auto line = to_json(d).dump();
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    if (!out_) throw Error("transcript write failed");
  }

  void flush() {
    std::lock_guard lock(mu_);
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

inline void persist_transcripts(const std::string& path, const std::vector<DialogueTranscript>& ds) {
  TranscriptWriter w(path);
  for (const auto& d : ds) w.write(d);
  w.flush();
}

struct LoadIssue {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<DialogueTranscript> transcripts;
  std::vector<LoadIssue> issues;
};

/// Streams records to `sink`. Strict mode throws on the first malformed line
/// (naming it); lenient mode records the issue and keeps going.
inline std::vector<LoadIssue> for_each_transcript(
    const std::string& path, bool strict,
    const std::function<void(DialogueTranscript&&)>& sink) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open transcript file: " + path);
  std::vector<LoadIssue> issues;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      sink(transcript_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      LoadIssue issue{lineno, e.what()};
      if (strict) throw ParseError(path + ":" + std::to_string(lineno) + ": " + issue.message);
      issues.push_back(std::move(issue));
    }
  }
  return issues;
}

inline LoadResult load_transcripts(const std::string& path, bool strict = true) {
  LoadResult r;
  r.issues = for_each_transcript(path, strict, [&](DialogueTranscript&& d) {
    r.transcripts.push_back(std::move(d));
  });
  return r;
}

}  // namespace rlver
