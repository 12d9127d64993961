#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rlver/error.hpp"
#include "rlver/gateway.hpp"
#include "rlver/prompts.hpp"
#include "rlver/reward.hpp"
#include "rlver/sim.hpp"
#include "rlver/strategy.hpp"
#include "rlver/text.hpp"
#include "rlver/transcript.hpp"

namespace rlver {

// ---------------------------------------------------------------------------
// Scanning helpers shared by the judge parsers

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

/// Signed decimal starting exactly at `pos`.
inline std::optional<std::pair<double, std::size_t>> number_at(std::string_view s, std::size_t pos) {
  std::size_t i = pos;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) ++i;
  std::size_t int_begin = i;
  while (i < s.size() && is_digit(s[i])) ++i;
  bool has_int = i > int_begin;
  if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
    ++i;
    while (i < s.size() && is_digit(s[i])) ++i;
  } else if (!has_int) {
    return std::nullopt;
  }
  std::string_view lit = s.substr(pos, i - pos);
  if (lit.front() == '+') lit.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(lit.data(), lit.data() + lit.size(), v);
  if (ec != std::errc{} || ptr != lit.data() + lit.size() || !std::isfinite(v)) return std::nullopt;
  return std::make_pair(v, i);
}

inline std::size_t skip_spaces(std::string_view s, std::size_t i) {
  while (i < s.size() && text::is_space(s[i])) ++i;
  return i;
}

/// Strategy labels such as "B-2" or "G-1" in a span, in order of appearance.
inline std::vector<std::string> scan_labels(std::string_view span) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 2 < span.size(); ++i) {
    char c = span[i];
    if (c < 'A' || c > 'Z' || span[i + 1] != '-' || !is_digit(span[i + 2])) continue;
    if (i > 0 && std::isalnum(static_cast<unsigned char>(span[i - 1]))) continue;
    std::size_t j = i + 2;
    while (j < span.size() && is_digit(span[j])) ++j;
    out.emplace_back(span.substr(i, j - i));
    i = j - 1;
  }
  return out;
}

/// Line with markdown bullets and emphasis stripped, lowercased.
inline std::string bare_line(std::string_view line) {
  std::string out;
  for (char c : text::trim(line)) {
    if (c == '*' || c == '#' || c == '`') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  std::string_view v = text::trim(out);
  while (!v.empty() && (v.front() == '-' || v.front() == '>')) v = text::trim(v.substr(1));
  return std::string(v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Strategy annotation

struct AnnotatedTurn {
  std::string transcript_id;
  std::size_t turn_index = 0;  // index among the transcript's model turns
  StrategySchema schema = StrategySchema::Main5;
  std::vector<StrategyId> strategies;  // sorted, unique
  double emo_change = 0.0;
  bool annotated = true;  // false: annotator failed; excluded from every denominator

  friend bool operator==(const AnnotatedTurn&, const AnnotatedTurn&) = default;
};

inline nlohmann::json to_json(const AnnotatedTurn& a) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& id : a.strategies) labels.push_back(std::string(id.label()));
  return {{"transcript_id", a.transcript_id}, {"turn_index", a.turn_index},
          {"schema", to_string(a.schema)},    {"strategies", labels},
          {"emo_change", a.emo_change},       {"annotated", a.annotated}};
}

inline AnnotatedTurn annotated_turn_from_json(const nlohmann::json& j) {
  AnnotatedTurn a;
  try {
    a.transcript_id = j.at("transcript_id").get<std::string>();
    a.turn_index = j.at("turn_index").get<std::size_t>();
    a.schema = schema_from_string(j.at("schema").get<std::string>());
    for (const auto& l : j.at("strategies")) {
      auto id = strategy_from_label(a.schema, l.get<std::string>());
      if (!id) throw ParseError("unknown strategy label " + l.get<std::string>());
      a.strategies.push_back(*id);
    }
    a.emo_change = j.at("emo_change").get<double>();
    a.annotated = j.value("annotated", true);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("annotation record: ") + e.what());
  }
  return a;
}

/// Every `<Strategy>…</Strategy>` span, labels mapped into `schema`. No span at
/// all is a failure; an empty span is an empty set. Unknown labels are dropped.
inline Parsed<std::vector<StrategyId>> parse_strategy_output(std::string_view raw, StrategySchema schema) {
  auto lowered = text::lower(raw);
  std::set<StrategyId> found;
  bool any_span = false;
  std::size_t pos = 0;
  for (;;) {
    auto open = lowered.find("<strategy>", pos);
    if (open == std::string::npos) break;
    auto begin = open + 10;
    auto close = lowered.find("</strategy>", begin);
    if (close == std::string::npos) break;
    any_span = true;
    for (const auto& label : detail::scan_labels(raw.substr(begin, close - begin))) {
      if (auto id = strategy_from_label(schema, label)) {
        found.insert(*id);
      } else {
        spdlog::warn("annotator emitted label {} outside the {} schema; dropped", label, to_string(schema));
      }
    }
    pos = close + 11;
  }
  if (!any_span) return ParseFailure{"no <Strategy> span", std::string(raw)};
  return std::vector<StrategyId>(found.begin(), found.end());
}

inline std::string annotator_template(StrategySchema schema) {
  return schema == StrategySchema::Main5 ? "strategy_annotator_main5" : "strategy_annotator_appendix7";
}

/// Turn-level annotator: text in, strategies out, nullopt when it gave up.
using Annotator = std::function<std::optional<std::vector<StrategyId>>(std::string_view reply)>;

inline Annotator keyword_annotator(StrategyLexicon lexicon = StrategyLexicon::defaults()) {
  return [lx = std::move(lexicon)](std::string_view reply) -> std::optional<std::vector<StrategyId>> {
    return lx.detect(reply);
  };
}

inline Annotator llm_annotator(Gateway& gw, std::string profile, StrategySchema schema, int retries = 3,
                               const PromptLibrary& lib = PromptLibrary::builtin()) {
  return [&gw, &lib, profile = std::move(profile), schema, retries](
             std::string_view reply) -> std::optional<std::vector<StrategyId>> {
    if (text::trim(reply).empty()) return std::vector<StrategyId>{};
    ChatRequest req;
    req.profile = profile;
    req.messages = {{"user", lib.render(annotator_template(schema), {{"dialog-history", std::string(reply)}})}};
    for (int attempt = 0; attempt <= retries; ++attempt) {
      req.tag = "annotate/" + std::to_string(attempt);
      req.seed_tag = req.tag;
      auto parsed = parse_strategy_output(gw.complete(req), schema);
      if (parsed) return parsed.value();
      spdlog::warn("annotator output unparsable: {}", parsed.failure().reason);
    }
    return std::nullopt;
  };
}

/// One AnnotatedTurn per judged model turn of every completed transcript.
inline std::vector<AnnotatedTurn> annotate_transcripts(const std::vector<DialogueTranscript>& ts,
                                                       StrategySchema schema, const Annotator& annotate) {
  std::vector<AnnotatedTurn> out;
  for (const auto& t : ts) {
    if (t.aborted()) continue;
    std::size_t k = 0;
    for (const auto& turn : t.turns) {
      if (turn.speaker != Speaker::Model) continue;
      std::size_t idx = k++;
      if (!turn.delta) continue;  // never judged: no emotion change to attribute
      AnnotatedTurn a;
      a.transcript_id = t.id;
      a.turn_index = idx;
      a.schema = schema;
      a.emo_change = *turn.delta;
      auto got = annotate(visible_reply(turn.text));
      if (got) {
        std::set<StrategyId> uniq;
        for (const auto& id : *got) {
          if (id.schema != schema) throw UsageError("annotator returned a label from another schema");
          uniq.insert(id);
        }
        a.strategies.assign(uniq.begin(), uniq.end());
      } else {
        a.annotated = false;
      }
      out.push_back(std::move(a));
    }
  }
  return out;
}

/// Re-labels appendix-7 annotations in the main-5 taxonomy. Unmapped labels vanish.
inline std::vector<AnnotatedTurn> map_to_main5(std::vector<AnnotatedTurn> as, const TaxonomyMap& m) {
  for (auto& a : as) {
    if (a.schema == StrategySchema::Main5) continue;
    std::set<StrategyId> mapped;
    for (const auto& id : a.strategies) {
      if (auto to = m.map(id)) mapped.insert(*to);
    }
    a.schema = StrategySchema::Main5;
    a.strategies.assign(mapped.begin(), mapped.end());
  }
  return as;
}

inline std::optional<StrategySchema> common_schema(const std::vector<AnnotatedTurn>& as) {
  if (as.empty()) return std::nullopt;
  for (const auto& a : as) {
    if (a.schema != as.front().schema) {
      throw UsageError("annotations mix the main5 and appendix7 schemas; report one schema at a time");
    }
  }
  return as.front().schema;
}

/// Share of annotated turns containing each strategy. Every strategy of the
/// schema is present; empty when nothing was annotated.
inline std::map<StrategyId, double> strategy_frequency(const std::vector<AnnotatedTurn>& as) {
  std::map<StrategyId, double> out;
  auto schema = common_schema(as);
  std::size_t n = 0;
  std::map<StrategyId, std::size_t> counts;
  for (const auto& a : as) {
    if (!a.annotated) continue;
    ++n;
    for (const auto& id : a.strategies) ++counts[id];
  }
  if (!schema || n == 0) return out;
  for (auto id : all_strategies(*schema)) {
    out[id] = static_cast<double>(counts[id]) / static_cast<double>(n);
  }
  return out;
}

/// Mean emotion change over the turns where each strategy appears; a turn
/// credits its whole change to every strategy it contains. Strategies with no
/// instances are absent.
inline std::map<StrategyId, double> strategy_contribution(const std::vector<AnnotatedTurn>& as) {
  common_schema(as);
  std::map<StrategyId, std::pair<double, std::size_t>> acc;
  for (const auto& a : as) {
    if (!a.annotated) continue;
    for (const auto& id : a.strategies) {
      acc[id].first += a.emo_change;
      ++acc[id].second;
    }
  }
  std::map<StrategyId, double> out;
  for (const auto& [id, sn] : acc) out[id] = sn.first / static_cast<double>(sn.second);
  return out;
}

inline std::map<StrategyId, std::size_t> strategy_counts(const std::vector<AnnotatedTurn>& as) {
  std::map<StrategyId, std::size_t> out;
  for (const auto& a : as) {
    if (!a.annotated) continue;
    for (const auto& id : a.strategies) ++out[id];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark statistics

struct BenchmarkStats {
  std::optional<double> score;  // mean of min(e_T, 100); undefined with no usable transcripts
  double success_rate = 0.0;
  double failure_rate = 0.0;
  std::size_t episodes = 0;
  std::size_t aborted = 0;
};

inline BenchmarkStats benchmark_stats(const std::vector<DialogueTranscript>& ts,
                                      const RewardSpec& spec = {}) {
  BenchmarkStats b;
  double sum = 0.0;
  std::size_t success = 0, failure = 0;
  for (const auto& t : ts) {
    if (t.aborted()) {
      ++b.aborted;
      continue;
    }
    if (!t.terminated()) throw UsageError("benchmark_stats: transcript " + t.id + " is not terminated");
    ++b.episodes;
    sum += std::min(t.final_emotion, 100.0);
    success += t.final_emotion > spec.success_threshold;
    failure += t.final_emotion < spec.failure_threshold_eval;
  }
  if (b.episodes) {
    double n = static_cast<double>(b.episodes);
    b.score = sum / n;
    b.success_rate = static_cast<double>(success) / n;
    b.failure_rate = static_cast<double>(failure) / n;
  }
  return b;
}

/// Fraction of judged turns whose delta is strictly positive; 0 for no turns.
inline double acceptance_rate(const std::vector<double>& deltas) {
  if (deltas.empty()) return 0.0;
  auto pos = std::count_if(deltas.begin(), deltas.end(), [](double d) { return d > 0.0; });
  return static_cast<double>(pos) / static_cast<double>(deltas.size());
}

inline std::vector<double> judged_deltas(const std::vector<DialogueTranscript>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) {
    if (t.aborted()) continue;
    for (const auto& turn : t.turns) {
      if (turn.speaker == Speaker::Model && turn.delta) out.push_back(*turn.delta);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expression level

struct ExpressionScores {
  std::array<double, 3> dimensions{};  // attitude, thoughts, needs
  double overall = 0.0;
};

/// Three per-aspect "Summary Score" values followed by an "Overall" section
/// carrying its own; scores must lie in [0, 10].
inline Parsed<ExpressionScores> parse_expression_output(std::string_view raw) {
  auto lowered = text::lower(text::normalize_minus(raw));
  auto overall_pos = lowered.find("overall analysis");
  if (overall_pos == std::string::npos) overall_pos = lowered.find("overall");
  if (overall_pos == std::string::npos) return ParseFailure{"no Overall section", std::string(raw)};

  auto score_after = [&](std::size_t from, std::size_t limit) -> std::optional<std::pair<double, std::size_t>> {
    auto at = lowered.find("summary score", from);
    if (at == std::string::npos || at >= limit) return std::nullopt;
    auto colon = lowered.find(':', at);
    if (colon == std::string::npos || colon >= limit) return std::nullopt;
    std::size_t i = detail::skip_spaces(lowered, colon + 1);
    while (i < lowered.size() && (lowered[i] == '[' || lowered[i] == '(' || text::is_space(lowered[i]))) ++i;
    auto num = detail::number_at(lowered, i);
    if (!num) return std::nullopt;
    return std::make_pair(num->first, num->second);
  };

  ExpressionScores s;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    auto v = score_after(pos, overall_pos);
    if (!v) return ParseFailure{"missing per-aspect Summary Score " + std::to_string(k + 1), std::string(raw)};
    s.dimensions[k] = v->first;
    pos = v->second;
  }
  auto ov = score_after(overall_pos, lowered.size());
  if (!ov) return ParseFailure{"Overall section has no Summary Score", std::string(raw)};
  s.overall = ov->first;
  for (double d : s.dimensions) {
    if (d < 0 || d > 10) return ParseFailure{"Summary Score outside [0, 10]", std::string(raw)};
  }
  if (s.overall < 0 || s.overall > 10) return ParseFailure{"overall score outside [0, 10]", std::string(raw)};
  return s;
}

struct ExpressionResult {
  std::optional<double> level;  // mean(overall) / 10
  std::size_t used = 0;
  std::size_t dropped = 0;
};

inline ExpressionResult expression_level_from_outputs(const std::vector<std::string>& raws) {
  ExpressionResult r;
  double sum = 0.0;
  for (const auto& raw : raws) {
    auto p = parse_expression_output(raw);
    if (!p) {
      ++r.dropped;
      continue;
    }
    sum += p->overall;
    ++r.used;
  }
  if (r.used) r.level = sum / static_cast<double>(r.used) / 10.0;
  return r;
}

struct ExpressionProbe {
  std::string need;
  std::string thought;
  std::string reply;
};

/// User turns that carry the simulator's inner thoughts.
inline std::vector<ExpressionProbe> expression_probes(const std::vector<DialogueTranscript>& ts,
                                                      const std::map<std::string, std::string>& needs) {
  std::vector<ExpressionProbe> out;
  for (const auto& t : ts) {
    auto need = needs.find(t.scenario_ref);
    if (t.aborted() || need == needs.end()) continue;
    for (std::size_t i = 1; i < t.turns.size(); ++i) {
      const auto& turn = t.turns[i];
      if (turn.speaker == Speaker::User && turn.thought && !turn.thought->empty() && !turn.text.empty()) {
        out.push_back({need->second, *turn.thought, turn.text});
      }
    }
  }
  return out;
}

inline ExpressionResult expression_level(const std::vector<ExpressionProbe>& probes, Gateway& gw,
                                         const std::string& profile,
                                         const PromptLibrary& lib = PromptLibrary::builtin()) {
  std::vector<std::string> raws;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    ChatRequest req;
    req.profile = profile;
    req.tag = "expression/" + std::to_string(i);
    req.messages = {{"user", lib.render("expression_judge", {{"need", probes[i].need},
                                                             {"thought", probes[i].thought},
                                                             {"reply", probes[i].reply}})}};
    raws.push_back(gw.complete(req));
  }
  return expression_level_from_outputs(raws);
}

// ---------------------------------------------------------------------------
// Capability rubric

enum class Capability { EmpathicDepth, CoreInsight, SolutionCrafting, DialogueGuidance, StyleAdaptability };

/// Rubric order of the judge prompt.
inline constexpr std::array<Capability, 5> kCapabilityOrder{
    Capability::EmpathicDepth, Capability::CoreInsight, Capability::SolutionCrafting,
    Capability::DialogueGuidance, Capability::StyleAdaptability};

inline constexpr std::string_view to_string(Capability c) noexcept {
  switch (c) {
    case Capability::EmpathicDepth: return "empathic_depth";
    case Capability::CoreInsight: return "core_insight";
    case Capability::SolutionCrafting: return "solution_crafting";
    case Capability::DialogueGuidance: return "dialogue_guidance";
    case Capability::StyleAdaptability: return "style_adaptability";
  }
  return "?";
}

struct CapabilityScores {
  std::array<int, 5> scores{};  // indexed by kCapabilityOrder
  std::array<std::string, 5> rationale;

  int score(Capability c) const {
    return scores[static_cast<std::size_t>(std::find(kCapabilityOrder.begin(), kCapabilityOrder.end(), c) -
                                           kCapabilityOrder.begin())];
  }
};

/// Exactly five "Score:" lines, in rubric order, each an integer 1..5.
inline Parsed<CapabilityScores> parse_capability_output(std::string_view raw) {
  CapabilityScores out;
  std::size_t n = 0;
  std::string pending;
  for (const auto& line : text::split_lines(text::normalize_minus(raw))) {
    auto bare = detail::bare_line(line);
    if (bare.rfind("evaluation", 0) == 0) {
      auto colon = bare.find(':');
      auto t = text::trim(line);
      auto c = t.find(':');
      pending = colon == std::string::npos || c == std::string_view::npos ? "" : std::string(text::trim(t.substr(c + 1)));
      continue;
    }
    if (bare.rfind("score", 0) != 0) continue;
    auto colon = bare.find(':');
    if (colon == std::string::npos) continue;
    std::size_t i = detail::skip_spaces(bare, colon + 1);
    while (i < bare.size() && (bare[i] == '[' || bare[i] == '(' || text::is_space(bare[i]))) ++i;
    auto num = detail::number_at(bare, i);
    if (!num) return ParseFailure{"Score line without a number", std::string(raw)};
    if (n == 5) return ParseFailure{"more than five Score lines", std::string(raw)};
    double v = num->first;
    if (v != std::floor(v) || v < 1 || v > 5) return ParseFailure{"score outside 1..5", std::string(raw)};
    out.scores[n] = static_cast<int>(v);
    out.rationale[n] = std::move(pending);
    pending.clear();
    ++n;
  }
  if (n != 5) return ParseFailure{"expected five Score lines, found " + std::to_string(n), std::string(raw)};
  return out;
}

inline std::string render_judge_dialogue(const DialogueTranscript& t) {
  std::string out;
  for (const auto& turn : t.turns) {
    if (!out.empty()) out += '\n';
    out += turn.speaker == Speaker::User ? "User: " + turn.text : "Model: " + visible_reply(turn.text);
  }
  return out;
}

inline Parsed<CapabilityScores> capability_scores(const DialogueTranscript& t, Gateway& gw,
                                                  const std::string& profile,
                                                  const PromptLibrary& lib = PromptLibrary::builtin()) {
  ChatRequest req;
  req.profile = profile;
  req.tag = t.id + "/capabilities";
  req.messages = {{"user", lib.render("capability_judge", {{"history", render_judge_dialogue(t)}})}};
  return parse_capability_output(gw.complete(req));
}

// ---------------------------------------------------------------------------
// Social cognition coordinates

enum class SccScale { Pm1, Pm5 };

inline SccScale scc_scale_from_string(std::string_view s) {
  if (s == "pm1") return SccScale::Pm1;
  if (s == "pm5") return SccScale::Pm5;
  throw ConfigError("unknown SCC scale '" + std::string(s) + "' (expected pm1|pm5)");
}

struct SCCPoint {
  double x = 0.0;  // structured (-) .. creative (+)
  double y = 0.0;  // solution (-) .. empathy (+)
  std::string label;
};

/// First "(x, y)" pair; otherwise labelled "x: …" and "y: …" values.
inline Parsed<std::pair<double, double>> parse_scc_output(std::string_view raw) {
  std::string s = text::normalize_minus(raw);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '(') continue;
    std::size_t j = detail::skip_spaces(s, i + 1);
    auto x = detail::number_at(s, j);
    if (!x) continue;
    j = detail::skip_spaces(s, x->second);
    if (j >= s.size() || s[j] != ',') continue;
    j = detail::skip_spaces(s, j + 1);
    auto y = detail::number_at(s, j);
    if (!y) continue;
    j = detail::skip_spaces(s, y->second);
    if (j >= s.size() || s[j] != ')') continue;
    return std::make_pair(x->first, y->first);
  }
  auto lowered = text::lower(s);
  auto labelled = [&](char axis) -> std::optional<double> {
    for (std::size_t i = 0; i < lowered.size(); ++i) {
      if (lowered[i] != axis) continue;
      if (i > 0 && std::isalnum(static_cast<unsigned char>(lowered[i - 1]))) continue;
      std::size_t j = i + 1;
      if (lowered.compare(j, 5, "-axis") == 0) j += 5;
      j = detail::skip_spaces(lowered, j);
      if (j >= lowered.size() || (lowered[j] != ':' && lowered[j] != '=')) continue;
      j = detail::skip_spaces(lowered, j + 1);
      if (auto v = detail::number_at(lowered, j)) return v->first;
    }
    return std::nullopt;
  };
  auto x = labelled('x');
  auto y = labelled('y');
  if (x && y) return std::make_pair(*x, *y);
  return ParseFailure{"no coordinate pair", std::string(raw)};
}

/// Clips judge coordinates to [-1, 1] and rescales to [-5, 5] when asked.
inline SCCPoint scc_place(std::pair<double, double> judged, SccScale scale, std::string label = {}) {
  auto clip = [](double v, char axis) {
    if (v < -1.0 || v > 1.0) {
      spdlog::warn("SCC {} coordinate {} outside [-1, 1]; clipped", axis, v);
      return std::clamp(v, -1.0, 1.0);
    }
    return v;
  };
  double f = scale == SccScale::Pm5 ? 5.0 : 1.0;
  return {clip(judged.first, 'x') * f, clip(judged.second, 'y') * f, std::move(label)};
}

inline std::string render_strategy_distribution(const std::map<StrategyId, double>& freq) {
  std::string out;
  for (const auto& [id, f] : freq) {
    out += "- (" + std::string(id.label()) + ") " + std::string(id.name()) + ": " +
           text::format_fixed(f * 100.0, 1) + "%\n";
  }
  return out.empty() ? "(no strategies annotated)" : out;
}

/// Per-dialogue outcome analysis → model profile → coordinate request.
inline Parsed<SCCPoint> scc_profile_and_place(const std::vector<DialogueTranscript>& ts,
                                              const std::map<StrategyId, double>& freq, Gateway& gw,
                                              const std::string& profile, SccScale scale,
                                              const std::string& label,
                                              const PromptLibrary& lib = PromptLibrary::builtin()) {
  std::string analysis;
  std::size_t k = 0;
  for (const auto& t : ts) {
    if (t.aborted()) continue;
    ChatRequest req;
    req.profile = profile;
    req.tag = t.id + "/outcome";
    req.messages = {{"user", lib.render("dialogue_outcome_analysis", {{"dialog-history", render_judge_dialogue(t)}})}};
    analysis += "## Dialogue " + std::to_string(++k) + " (final emotion " + format_emotion(t.final_emotion) +
                ")\n" + gw.complete(req) + "\n\n";
  }
  if (analysis.empty()) return ParseFailure{"no completed dialogues to profile", ""};

  ChatRequest prof;
  prof.profile = profile;
  prof.tag = label + "/model-profile";
  prof.messages = {{"user", lib.render("model_profile", {{"analysis", analysis}})}};
  std::string model_profile = label + ":\n" + gw.complete(prof);

  ChatRequest coord;
  coord.profile = profile;
  coord.tag = label + "/scc";
  coord.messages = {{"user", lib.render("scc_coordinates",
                                        {{"model-profiles", model_profile},
                                         {"strategy-distribution", label + ":\n" + render_strategy_distribution(freq)}})}};
  auto parsed = parse_scc_output(gw.complete(coord));
  if (!parsed) return parsed.failure();
  return scc_place(parsed.value(), scale, label);
}

}  // namespace rlver
