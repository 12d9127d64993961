#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlver/emotion.hpp"
#include "rlver/error.hpp"
#include "rlver/strategy.hpp"

namespace rlver {

enum class Difficulty { Vanilla, Challenging };

inline constexpr std::string_view to_string(Difficulty d) noexcept {
  return d == Difficulty::Vanilla ? "vanilla" : "challenging";
}

inline Difficulty difficulty_from_string(std::string_view s) {
  if (s == "vanilla") return Difficulty::Vanilla;
  if (s == "challenging") return Difficulty::Challenging;
  throw ConfigError("unknown difficulty '" + std::string(s) + "' (expected vanilla|challenging)");
}

/// One of the eight hidden-intention archetypes. `goal_strategy` is the main-5
/// strategy the scripted simulator rewards most for this intention.
struct Topic {
  int id;
  std::string_view intention;
  std::string_view goal_strategy;
};

inline constexpr std::array<Topic, 8> kTopics{{
    {1, "You believe you bear no responsibility or fault in the situation, and you want the other "
        "person to agree that you are not at fault.", "B-3"},
    {2, "You hope the other person will guide you to engage in self-reflection regarding the "
        "incident and help you achieve personal growth.", "A-2"},
    {3, "You hope the other person will critically analyze the underlying problems in the "
        "incident.", "E-1"},
    {4, "You hope the other person will deeply empathize with your feelings, rather than simply "
        "offering comfort.", "B-2"},
    {5, "You want the other person to attentively listen to your emotional outpouring.", "C-1"},
    {6, "You want to analyze the reasons behind the actions of other individuals involved in the "
        "incident.", "B-1"},
    {7, "You hope to receive advice that can genuinely help you overcome your current "
        "difficulties.", "D-1"},
    {8, "You hope the other person will sincerely praise your specific actions in the situation.",
        "A-3"},
}};

inline const Topic& topic_by_id(int id) {
  if (id < 1 || id > static_cast<int>(kTopics.size())) {
    throw ConfigError("topic_id " + std::to_string(id) + " is outside the 8-topic table");
  }
  return kTopics[static_cast<std::size_t>(id - 1)];
}

struct Scenario {
  std::string id;
  std::string persona;
  std::string background;
  std::string goal;
  std::string hidden_intention;
  int topic_id = 1;
  Difficulty difficulty = Difficulty::Vanilla;
  double initial_emotion = kDefaultInitialEmotion;

  const Topic& topic() const { return topic_by_id(topic_id); }

  void validate() const {
    if (id.empty()) throw ConfigError("scenario without id");
    const auto& t = topic_by_id(topic_id);
    if (hidden_intention != t.intention) {
      throw ConfigError("scenario " + id + ": hidden_intention does not match topic " +
                        std::to_string(topic_id));
    }
    if (!std::isfinite(initial_emotion)) throw ConfigError("scenario " + id + ": bad initial_emotion");
  }
};

inline nlohmann::json to_json(const Scenario& s) {
  return {{"id", s.id},
          {"persona", s.persona},
          {"background", s.background},
          {"goal", s.goal},
          {"hidden_intention", s.hidden_intention},
          {"topic_id", s.topic_id},
          {"difficulty", to_string(s.difficulty)},
          {"initial_emotion", s.initial_emotion}};
}

/// `hidden_intention` may be omitted and is then filled from the topic table.
inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  try {
    s.id = j.at("id").get<std::string>();
    s.persona = j.at("persona").get<std::string>();
    s.background = j.at("background").get<std::string>();
    s.goal = j.at("goal").get<std::string>();
    s.topic_id = j.at("topic_id").get<int>();
    s.hidden_intention = j.contains("hidden_intention")
                             ? j.at("hidden_intention").get<std::string>()
                             : std::string(topic_by_id(s.topic_id).intention);
    if (j.contains("difficulty")) s.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
    if (j.contains("initial_emotion")) s.initial_emotion = j.at("initial_emotion").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario document: ") + e.what());
  }
  s.validate();
  return s;
}

/// Loads a single scenario document, a JSON array of them, or every *.json in a
/// directory (sorted by file name). Ids must be unique.
inline std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw ConfigError("scenario path does not exist: " + path.string());
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no *.json scenario files in " + path.string());
  } else {
    files.push_back(path);
  }

  std::vector<Scenario> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw ConfigError("cannot read scenario file " + f.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(f.string() + ": " + e.what());
    }
    try {
      if (doc.is_array()) {
        for (const auto& item : doc) out.push_back(scenario_from_json(item));
      } else {
        out.push_back(scenario_from_json(doc));
      }
    } catch (const ConfigError& e) {
      throw ConfigError(f.string() + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = i + 1; k < out.size(); ++k) {
      if (out[i].id == out[k].id) throw ConfigError("duplicate scenario id " + out[i].id);
    }
  }
  return out;
}

}  // namespace rlver
