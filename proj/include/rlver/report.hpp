#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlver/error.hpp"
#include "rlver/metrics.hpp"
#include "rlver/text.hpp"
#include "rlver/train.hpp"

namespace rlver {

/// Carried on every report row so a CSV can be traced to its inputs.
struct Provenance {
  std::string config_hash;
  std::string transcript_digest;
};

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_num(double v) { return text::format_fixed(v, 4); }
inline std::string csv_num(const std::optional<double>& v) { return v ? csv_num(*v) : "NA"; }

/// Writes a header and rows; every row is prefixed with the provenance columns.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const Provenance& prov, std::vector<std::string> header)
      : out_(path, std::ios::trunc), prov_(prov), path_(path) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << "config_hash,transcript_digest";
    for (const auto& h : header) out_ << ',' << h;
    out_ << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    out_ << csv_field(prov_.config_hash) << ',' << csv_field(prov_.transcript_digest);
    for (const auto& c : cells) out_ << ',' << csv_field(c);
    out_ << '\n';
  }

  ~CsvWriter() { out_.flush(); }

 private:
  std::ofstream out_;
  Provenance prov_;
  std::filesystem::path path_;
};

inline void write_benchmark_csv(const std::filesystem::path& path, const Provenance& prov,
                                const BenchmarkStats& b, double acceptance) {
  CsvWriter w(path, prov, {"episodes", "aborted", "score", "success_rate", "failure_rate", "acceptance_rate"});
  w.row({std::to_string(b.episodes), std::to_string(b.aborted), csv_num(b.score), csv_num(b.success_rate),
         csv_num(b.failure_rate), csv_num(acceptance)});
}

inline void write_frequency_csv(const std::filesystem::path& path, const Provenance& prov,
                                const std::vector<AnnotatedTurn>& as) {
  auto freq = strategy_frequency(as);
  auto counts = strategy_counts(as);
  std::size_t annotated = 0;
  for (const auto& a : as) annotated += a.annotated;
  CsvWriter w(path, prov, {"schema", "strategy", "name", "frequency", "turns", "annotated_turns"});
  for (const auto& [id, f] : freq) {
    w.row({std::string(to_string(id.schema)), std::string(id.label()), std::string(id.name()), csv_num(f),
           std::to_string(counts[id]), std::to_string(annotated)});
  }
}

inline void write_contribution_csv(const std::filesystem::path& path, const Provenance& prov,
                                   const std::vector<AnnotatedTurn>& as) {
  auto sc = strategy_contribution(as);
  auto counts = strategy_counts(as);
  CsvWriter w(path, prov, {"schema", "strategy", "name", "contribution", "instances"});
  for (const auto& [id, v] : sc) {
    w.row({std::string(to_string(id.schema)), std::string(id.label()), std::string(id.name()), csv_num(v),
           std::to_string(counts[id])});
  }
}

struct CapabilityRow {
  std::string transcript_id;
  std::optional<CapabilityScores> scores;  // nullopt: judge output unusable
};

/// One row per transcript plus a trailing "mean" row over the scored ones.
inline void write_capabilities_csv(const std::filesystem::path& path, const Provenance& prov,
                                   const std::vector<CapabilityRow>& rows) {
  std::vector<std::string> header{"transcript_id"};
  for (auto c : kCapabilityOrder) header.emplace_back(to_string(c));
  header.emplace_back("status");
  CsvWriter w(path, prov, header);
  std::array<double, 5> sum{};
  std::size_t n = 0;
  for (const auto& r : rows) {
    std::vector<std::string> cells{r.transcript_id};
    for (std::size_t k = 0; k < 5; ++k) cells.push_back(r.scores ? std::to_string(r.scores->scores[k]) : "NA");
    cells.emplace_back(r.scores ? "scored" : "excluded");
    w.row(cells);
    if (r.scores) {
      ++n;
      for (std::size_t k = 0; k < 5; ++k) sum[k] += r.scores->scores[k];
    }
  }
  std::vector<std::string> mean{"mean"};
  for (std::size_t k = 0; k < 5; ++k) mean.push_back(n ? csv_num(sum[k] / static_cast<double>(n)) : "NA");
  mean.push_back(std::to_string(n) + " scored");
  w.row(mean);
}

inline void write_scc_csv(const std::filesystem::path& path, const Provenance& prov, const SCCPoint& p,
                          SccScale scale) {
  CsvWriter w(path, prov, {"label", "scale", "x", "y"});
  w.row({p.label, scale == SccScale::Pm5 ? "pm5" : "pm1", csv_num(p.x), csv_num(p.y)});
}

inline void write_expression_csv(const std::filesystem::path& path, const Provenance& prov,
                                 const ExpressionResult& r) {
  CsvWriter w(path, prov, {"expression_level", "probes_used", "probes_dropped"});
  w.row({csv_num(r.level), std::to_string(r.used), std::to_string(r.dropped)});
}

/// Step-vs-value series for the emotion and output-length learning curves.
inline void write_plot_data(const std::filesystem::path& dir, const Provenance& prov,
                            const std::vector<CurveRecord>& curve) {
  CsvWriter emo(dir / "plot_emotion.csv", prov, {"step", "mean_emotion", "mean_reward"});
  CsvWriter len(dir / "plot_length.csv", prov, {"step", "mean_output_length", "mean_turns"});
  for (const auto& r : curve) {
    emo.row({std::to_string(r.step), csv_num(r.mean_emotion), csv_num(r.mean_reward)});
    len.row({std::to_string(r.step), csv_num(r.mean_output_length), csv_num(r.mean_turns)});
  }
}

}  // namespace rlver
