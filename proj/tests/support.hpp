#pragma once

#include <deque>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "rlver/rlver.hpp"

namespace rlver::testing {

inline Scenario make_scenario(int topic = 4, Difficulty d = Difficulty::Vanilla, double initial = 50.0,
                              std::string id = "s-1") {
  Scenario s;
  s.id = std::move(id);
  s.persona = "A 29-year-old nurse who keeps her worries to herself.";
  s.background = "She was blamed for a scheduling mix-up at work. Her manager has not apologized.";
  s.goal = "Feel heard about the mix-up.";
  s.hidden_intention = std::string(topic_by_id(topic).intention);
  s.topic_id = topic;
  s.difficulty = d;
  s.initial_emotion = initial;
  return s;
}

/// Always says the same thing.
class FixedPolicy final : public PolicyPort {
 public:
  explicit FixedPolicy(std::string text) : text_(std::move(text)) {}
  PolicyOutput respond(const Scenario&, const DialogueTranscript&, bool, std::uint64_t) const override {
    return {text_, std::nullopt};
  }
  std::string snapshot_id() const override { return "fixed"; }

 private:
  std::string text_;
};

/// Judges every turn with the same change and never says goodbye.
class ConstantEngine final : public AffectEngine {
 public:
  explicit ConstantEngine(double change) : change_(change) {}
  std::string opener(const Scenario&, std::uint64_t) override { return "hi"; }
  EmotionJudgment judge(const Scenario&, const EmotionState&, const DialogueTranscript&, std::uint64_t) override {
    EmotionJudgment j;
    j.change = change_;
    return j;
  }
  UserReply reply(const Scenario&, const EmotionState&, const EmotionJudgment&, const DialogueTranscript&,
                  std::uint64_t) override {
    return {"", "go on", false};
  }

 private:
  double change_;
};

/// Replays a queue of canned responses and records every request.
class FakeTransport final : public Transport {
 public:
  struct Call {
    std::string url;
    HttpHeaders headers;
    std::string body;
  };

  void push(int status, std::string body = {}) {
    std::lock_guard lock(mu_);
    queue_.push_back({status, std::move(body)});
  }
  void push_completion(const std::string& content) {
    nlohmann::json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
    push(200, j.dump());
  }
  /// Used once the queue is empty.
  void set_default_completion(std::string content) { default_ = std::move(content); }

  HttpResponse post(const std::string& url, const HttpHeaders& headers, const std::string& body,
                    double) override {
    std::lock_guard lock(mu_);
    calls_.push_back({url, headers, body});
    if (queue_.empty()) {
      if (default_.empty()) return {503, ""};
      nlohmann::json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", default_}}}}}}};
      return {200, j.dump()};
    }
    auto r = queue_.front();
    queue_.pop_front();
    return r;
  }

  std::size_t dials() const {
    std::lock_guard lock(mu_);
    return calls_.size();
  }
  std::vector<Call> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  mutable std::mutex mu_;
  std::deque<HttpResponse> queue_;
  std::vector<Call> calls_;
  std::string default_;
};

/// Manual clock: sleep advances time instantly.
struct FakeClock {
  double t = 0.0;
  std::vector<double> sleeps;

  TimeSource source() {
    return {[this] { return t; },
            [this](double s) {
              sleeps.push_back(s);
              t += s;
            }};
  }
};

inline EndpointProfile test_profile(std::string name = "judge") {
  EndpointProfile p;
  p.name = std::move(name);
  p.base_url = "http://example.invalid/v1";
  p.model = "test-model";
  p.requests_per_second = 1000;
  p.burst = 1000;
  p.retry_budget = 3;
  return p;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("rlver-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

/// A completed transcript with the given model-turn deltas applied from `initial`.
inline DialogueTranscript synthetic_transcript(double initial, const std::vector<double>& deltas,
                                               bool well_formed = true, std::string id = "t") {
  DialogueTranscript t;
  t.id = std::move(id);
  t.scenario_ref = "s";
  t.topic_id = 1;
  t.initial_emotion = initial;
  double e = initial;
  t.turns.push_back({Speaker::User, "hi", std::nullopt, e, std::nullopt, std::nullopt});
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    e += deltas[i];
    bool bad = !well_formed && i + 1 == deltas.size();
    t.turns.push_back({Speaker::Model, bad ? "no tags here" : "<think>x</think>reply", std::nullopt, e, deltas[i],
                       std::nullopt});
    t.turns.push_back({Speaker::User, "ok", std::nullopt, e, std::nullopt, std::nullopt});
  }
  t.final_emotion = e;
  t.stop_reason = StopReason::MaxTurns;
  t.termination = classify_outcome(t, RewardSpec{});
  t.reward = final_reward(t, RewardSpec{});
  return t;
}

}  // namespace rlver::testing
