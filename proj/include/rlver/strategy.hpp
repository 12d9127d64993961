#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlver/error.hpp"
#include "rlver/text.hpp"

namespace rlver {

/// Annotation vocabularies. Main5 is the canonical reporting taxonomy; Appendix7
/// is what the detailed annotator prompt speaks.
enum class StrategySchema { Main5, Appendix7 };

inline constexpr std::string_view to_string(StrategySchema s) noexcept {
  return s == StrategySchema::Main5 ? "main5" : "appendix7";
}

inline StrategySchema schema_from_string(std::string_view s) {
  if (s == "main5") return StrategySchema::Main5;
  if (s == "appendix7") return StrategySchema::Appendix7;
  throw ConfigError("unknown strategy schema '" + std::string(s) + "' (expected main5|appendix7)");
}

struct StrategyInfo {
  std::string_view label;  // "B-2"
  std::string_view name;
};

inline constexpr std::array<StrategyInfo, 11> kMain5Strategies{{
    {"A-1", "Praising the client's qualities"},
    {"A-2", "Praising the client's positive thoughts"},
    {"A-3", "Praising the client's actions"},
    {"B-1", "Providing empathy via restating the client's problem"},
    {"B-2", "Deeper empathy to understand the client's hidden intention"},
    {"B-3", "Self-disclosure that provides agreement with the client's view"},
    {"B-4", "Self-disclosure that introduces the supporter's own story"},
    {"C-1", "Expressing willingness to hear the client's thoughts"},
    {"C-2", "Helping the client to vent negative feelings"},
    {"D-1", "Advice specific to the client's situation"},
    {"E-1", "Analysis of the client's issue"},
}};

inline constexpr std::array<StrategyInfo, 24> kAppendix7Strategies{{
    {"A-1", "Information follow-up"},
    {"A-2", "Mental state follow-up"},
    {"A-3", "Ask the player for a solution"},
    {"A-4", "Ask the player for his or her opinion"},
    {"A-5", "Ask questions"},
    {"B-1", "Shallow empathy"},
    {"B-2", "Problem restatement and empathy"},
    {"B-3", "Deep intention empathy"},
    {"C-1", "Echo-type self-disclosure"},
    {"C-2", "Story-based self-disclosure"},
    {"D-1", "Emotional comfort"},
    {"D-2", "Express willingness to listen"},
    {"D-3", "Help the person who is talking to vent his emotions"},
    {"E-1", "Appreciation of qualities"},
    {"E-2", "Praise positive ideas"},
    {"E-3", "Affirmative behavior"},
    {"E-4", "Companionship and support"},
    {"F-1", "Problem analysis"},
    {"F-2", "Emotional relief suggestions"},
    {"F-3", "Psychological counseling suggestions"},
    {"F-4", "Problem Solving Suggestions - General"},
    {"F-5", "Problem-solving suggestions-for the speaker's problem"},
    {"G-1", "Problem analysis and emotional counseling related information"},
    {"G-2", "Related information on problem-solving suggestions"},
}};

inline constexpr std::size_t strategy_count(StrategySchema s) noexcept {
  return s == StrategySchema::Main5 ? kMain5Strategies.size() : kAppendix7Strategies.size();
}

/// A strategy label bound to its schema. Ordered by (schema, index), which is
/// also the row order of every report.
struct StrategyId {
  StrategySchema schema = StrategySchema::Main5;
  std::size_t index = 0;

  const StrategyInfo& info() const {
    return schema == StrategySchema::Main5 ? kMain5Strategies.at(index)
                                           : kAppendix7Strategies.at(index);
  }
  std::string_view label() const { return info().label; }
  std::string_view name() const { return info().name; }

  friend auto operator<=>(const StrategyId&, const StrategyId&) = default;
};

inline std::optional<StrategyId> strategy_from_label(StrategySchema schema, std::string_view label) {
  std::size_t n = strategy_count(schema);
  for (std::size_t i = 0; i < n; ++i) {
    StrategyId id{schema, i};
    if (id.label() == label) return id;
  }
  return std::nullopt;
}

inline StrategyId main5(std::string_view label) {
  auto id = strategy_from_label(StrategySchema::Main5, label);
  if (!id) throw UsageError("unknown main5 strategy " + std::string(label));
  return *id;
}

inline StrategyId appendix7(std::string_view label) {
  auto id = strategy_from_label(StrategySchema::Appendix7, label);
  if (!id) throw UsageError("unknown appendix7 strategy " + std::string(label));
  return *id;
}

inline std::vector<StrategyId> all_strategies(StrategySchema schema) {
  std::vector<StrategyId> out;
  for (std::size_t i = 0; i < strategy_count(schema); ++i) out.push_back({schema, i});
  return out;
}

/// appendix7 → main5 projection. Default table: group E → A, B/C → B, D → C,
/// F-4/F-5 → D, F-1 and G → E. Group A and F-2/F-3 have no main5 counterpart
/// and are dropped.
class TaxonomyMap {
 public:
  static TaxonomyMap defaults() {
    TaxonomyMap m;
    const std::pair<std::string_view, std::string_view> rows[] = {
        {"B-1", "B-1"}, {"B-2", "B-1"}, {"B-3", "B-2"}, {"C-1", "B-3"}, {"C-2", "B-4"},
        {"D-1", "C-2"}, {"D-2", "C-1"}, {"D-3", "C-2"}, {"E-1", "A-1"}, {"E-2", "A-2"},
        {"E-3", "A-3"}, {"E-4", "A-1"}, {"F-1", "E-1"}, {"F-4", "D-1"}, {"F-5", "D-1"},
        {"G-1", "E-1"}, {"G-2", "E-1"},
    };
    for (auto [from, to] : rows) m.table_[appendix7(from)] = main5(to);
    return m;
  }

  /// {"F-4": "D-1", ...}; labels absent from the object are unmapped.
  static TaxonomyMap from_json(const nlohmann::json& j) {
    TaxonomyMap m;
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto from = strategy_from_label(StrategySchema::Appendix7, it.key());
      auto to = strategy_from_label(StrategySchema::Main5, it.value().get<std::string>());
      if (!from || !to) throw ConfigError("bad taxonomy mapping row " + it.key());
      m.table_[*from] = *to;
    }
    return m;
  }

  std::optional<StrategyId> map(StrategyId appendix) const {
    if (appendix.schema == StrategySchema::Main5) return appendix;
    auto it = table_.find(appendix);
    if (it == table_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<StrategyId, StrategyId> table_;
};

/// Phrase lexicon for the offline keyword annotator. Matching is
/// case-insensitive substring search; the scripted simulator and the toy
/// policy's action templates share the default lexicon.
class StrategyLexicon {
 public:
  static StrategyLexicon defaults() {
    StrategyLexicon lx;
    auto add = [&](std::string_view label, std::initializer_list<std::string_view> phrases) {
      auto& v = lx.markers_[main5(label)];
      for (auto p : phrases) v.emplace_back(p);
    };
    add("A-1", {"you have such a strong character", "what a genuine person you are"});
    add("A-2", {"that is a really healthy way to see it", "i love that perspective of yours"});
    add("A-3", {"what you did took real courage", "you handled that step really well"});
    add("B-1", {"so what happened is", "if i hear you right"});
    add("B-2", {"underneath it all, you want", "what you really need is"});
    add("B-3", {"i would have felt exactly the same", "you're right to see it that way"});
    add("B-4", {"something similar happened to me", "when i went through"});
    add("C-1", {"i'm listening, take your time", "tell me everything"});
    add("C-2", {"let it all out", "you have every right to be angry"});
    add("D-1", {"one thing you could try", "here's a concrete step"});
    add("E-1", {"the root of the problem", "looking at why this keeps happening"});
    return lx;
  }

  static StrategyLexicon from_json(const nlohmann::json& j) {
    StrategyLexicon lx;
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto id = strategy_from_label(StrategySchema::Main5, it.key());
      if (!id) throw ConfigError("lexicon: unknown main5 label " + it.key());
      for (const auto& p : it.value()) lx.markers_[*id].push_back(text::lower(p.get<std::string>()));
    }
    return lx;
  }

  /// Strategies whose markers appear in `reply`, in taxonomy order.
  std::vector<StrategyId> detect(std::string_view reply) const {
    std::vector<StrategyId> out;
    if (text::trim(reply).empty()) return out;
    auto haystack = text::lower(reply);
    for (const auto& [id, phrases] : markers_) {
      for (const auto& p : phrases) {
        if (haystack.find(p) != std::string::npos) {
          out.push_back(id);
          break;
        }
      }
    }
    return out;
  }

  /// First marker phrase for a strategy; used to render toy-policy replies.
  const std::string& marker(StrategyId id) const {
    auto it = markers_.find(id);
    if (it == markers_.end() || it->second.empty()) {
      throw ConfigError("lexicon has no marker for " + std::string(id.label()));
    }
    return it->second.front();
  }

 private:
  std::map<StrategyId, std::vector<std::string>> markers_;
};

}  // namespace rlver
