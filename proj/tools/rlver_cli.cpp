#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rlver/http_transport.hpp"
#include "rlver/rlver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rlver;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kTransport = 3 };

/// Collects every validation failure so they can be reported together.
class Problems {
 public:
  void add(std::string msg) { items_.push_back(std::move(msg)); }

  void need_file(const std::string& path, const std::string& what) {
    if (path.empty()) {
      add(what + " is required");
    } else if (!fs::is_regular_file(path)) {
      add(what + " not found: " + path);
    }
  }

  template <class F>
  void check(F&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      add(e.what());
    }
  }

  void raise() const {
    if (items_.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& i : items_) msg += "\n  - " + i;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> items_;
};

std::string env_name(const std::string& flag) {
  std::string out = "RLVER_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

/// `--group-size` also answers to `--group_size` so config files may use
/// either spelling; every option is mirrored to RLVER_<NAME>.
template <class T>
CLI::Option* option(CLI::App* app, const std::string& flag, T& var, const std::string& desc) {
  std::string names = "--" + flag;
  std::string snake = flag;
  std::replace(snake.begin(), snake.end(), '-', '_');
  if (snake != flag) names += ",--" + snake;
  return app->add_option(names, var, desc)->capture_default_str()->envname(env_name(flag));
}

CLI::Option* flag(CLI::App* app, const std::string& name, bool& var, const std::string& desc) {
  return app->add_flag("--" + name, var, desc)->envname(env_name(name));
}

struct GatewayArgs {
  std::string profiles;
  std::string mode = "live";
  std::string cache_dir;
  bool strict_cache = false;

  void attach(CLI::App* app) {
    option(app, "profiles", profiles, "endpoint profiles file (JSON)");
    option(app, "gateway-mode", mode, "live | record | replay");
    option(app, "cache-dir", cache_dir, "record/replay cache directory");
    flag(app, "strict-cache", strict_cache, "treat corrupt cache entries as fatal");
  }

  void validate(Problems& p) const {
    p.need_file(profiles, "profiles file");
    p.check([&] { (void)gateway_mode_from_string(mode); });
    if (mode != "live" && cache_dir.empty()) p.add("gateway mode " + mode + " needs --cache-dir");
    if (mode == "replay" && !cache_dir.empty() && !fs::is_directory(cache_dir)) {
      p.add("replay cache directory not found: " + cache_dir);
    }
  }

  json to_json() const { return {{"mode", mode}, {"profiles", profiles.empty() ? "" : sha256_file(profiles)}}; }

  std::unique_ptr<Gateway> make() const {
    GatewayOptions o;
    o.mode = gateway_mode_from_string(mode);
    o.cache_dir = cache_dir;
    o.lenient_cache = !strict_cache;
    return std::make_unique<Gateway>(load_profiles(profiles), std::make_shared<HttpTransport>(), o);
  }
};

RewardMode reward_mode_from_string(const std::string& s) {
  if (s == "terminal") return RewardMode::Terminal;
  if (s == "per_turn" || s == "per-turn") return RewardMode::PerTurn;
  throw ConfigError("unknown reward mode '" + s + "' (expected terminal|per_turn)");
}

std::optional<Difficulty> difficulty_override(const std::string& s) {
  if (s == "scenario") return std::nullopt;
  return difficulty_from_string(s);
}

/// RolloutConfig plus engine selection; shared by rollout and train.
struct EnvArgs {
  std::string scenarios;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  std::string engine = "scripted";
  int max_turns;
  bool thinking_mode = true;
  std::string reward_mode = "terminal";
  bool format_gate = true;
  double delta_clamp = kDefaultDeltaClamp;
  std::string difficulty = "scenario";
  int parallelism = 1;
  std::string simulator_profile = "simulator";
  GatewayArgs gw;

  explicit EnvArgs(int turns) : max_turns(turns) {}

  void attach(CLI::App* app) {
    option(app, "scenarios", scenarios, "scenario set (JSON)");
    option(app, "seed", seed, "master seed");
    option(app, "out", out, "output root; the run directory is created below it");
    option(app, "engine", engine, "scripted | llm");
    option(app, "max-turns", max_turns, "model turns per episode");
    option(app, "thinking-mode", thinking_mode, "ask the policy for <think> blocks");
    option(app, "reward-mode", reward_mode, "terminal | per_turn");
    option(app, "format-gate", format_gate, "zero reward on think-format violations");
    option(app, "delta-clamp", delta_clamp, "per-turn emotion change bound");
    option(app, "difficulty", difficulty, "scenario | vanilla | challenging");
    option(app, "parallelism", parallelism, "concurrent episodes");
    option(app, "simulator-profile", simulator_profile, "gateway profile for the llm engine");
    gw.attach(app);
  }

  RolloutConfig rollout_config() const {
    RolloutConfig c;
    c.max_turns = max_turns;
    c.thinking_mode = thinking_mode;
    c.reward_spec.mode = reward_mode_from_string(reward_mode);
    c.reward_spec.format_gate = format_gate;
    c.delta_clamp = delta_clamp;
    return c;
  }

  bool needs_gateway() const { return engine == "llm"; }

  void validate(Problems& p) const {
    p.need_file(scenarios, "scenario file");
    if (!seed) p.add("--seed is required");
    if (engine != "scripted" && engine != "llm") p.add("unknown engine '" + engine + "' (expected scripted|llm)");
    p.check([&] { (void)difficulty_override(difficulty); });
    p.check([&] { rollout_config().validate(); });
    if (parallelism < 1) p.add("parallelism must be at least 1");
  }
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::trunc | std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

/// `<out>/<command>-<hash12>` holding config.json, digests.json and artifacts.
class RunDir {
 public:
  RunDir(const std::string& root, const std::string& command, json config)
      : config_(std::move(config)), hash_(sha256_hex(config_.dump())) {
    dir_ = fs::path(root) / (command + "-" + hash_.substr(0, 12));
    fs::create_directories(dir_);
    json doc = {{"command", command}, {"config_hash", hash_}, {"config", config_}};
    write_text(dir_ / "config.json", doc.dump(2) + "\n");
  }

  const fs::path& path() const { return dir_; }
  const std::string& hash() const { return hash_; }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

  void input(const std::string& label, const std::string& path) { inputs_[label] = sha256_file(path); }

  /// Records digests of every regular file written so far, snapshots included.
  void seal() {
    json outputs = json::object();
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir_)) {
      if (e.is_regular_file() && e.path().filename() != "digests.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) outputs[fs::relative(f, dir_).generic_string()] = sha256_file(f.string());
    write_text(dir_ / "digests.json", json{{"inputs", inputs_}, {"outputs", outputs}}.dump(2) + "\n");
  }

 private:
  json config_;
  std::string hash_;
  fs::path dir_;
  json inputs_ = json::object();
};

void write_gateway_stats(const RunDir& run, const Gateway* gw) {
  if (!gw) return;
  auto s = gw->stats();
  json j = {{"network_calls", s.network_calls}, {"retries", s.retries}, {"cache_hits", s.cache_hits}};
  write_text(run / "gateway_stats.json", j.dump(2) + "\n");
}

std::unique_ptr<AffectEngine> make_engine(const EnvArgs& a, Gateway* gw) {
  if (a.engine == "llm") {
    LlmEngineOptions o;
    o.profile = a.simulator_profile;
    return std::make_unique<LlmEngine>(*gw, o);
  }
  return std::make_unique<ScriptedEngine>();
}

std::string pct(double v) { return text::format_fixed(v * 100.0, 1) + "%"; }

// ---------------------------------------------------------------------------
// rollout

struct RolloutArgs : EnvArgs {
  std::string policy = "toy";
  std::string snapshot;
  std::string replay_from;
  int group_size = 1;
  std::string policy_profile = "policy";
  double policy_temperature = 1.0;

  RolloutArgs() : EnvArgs(kEvalMaxTurns) {}

  void attach(CLI::App* app) {
    EnvArgs::attach(app);
    option(app, "policy", policy, "toy | llm | replay");
    option(app, "snapshot", snapshot, "toy policy snapshot (default: untrained)");
    option(app, "replay-from", replay_from, "transcripts whose model turns the replay policy repeats");
    option(app, "group-size", group_size, "episodes per scenario");
    option(app, "policy-profile", policy_profile, "gateway profile for the llm policy");
    option(app, "policy-temperature", policy_temperature, "sampling temperature for the llm policy");
  }

  bool needs_gateway() const { return EnvArgs::needs_gateway() || policy == "llm"; }
};

int run_rollout(const RolloutArgs& a) {
  Problems p;
  a.validate(p);
  if (a.policy != "toy" && a.policy != "llm" && a.policy != "replay") {
    p.add("unknown policy '" + a.policy + "' (expected toy|llm|replay)");
  }
  if (!a.snapshot.empty()) p.need_file(a.snapshot, "snapshot");
  if (a.policy == "replay") p.need_file(a.replay_from, "replay transcript file");
  if (a.group_size < 1) p.add("group-size must be at least 1");
  if (a.needs_gateway()) a.gw.validate(p);
  p.raise();

  RolloutConfig cfg = a.rollout_config();
  cfg.group_size = a.group_size;
  cfg.policy_temperature = a.policy_temperature;
  auto scenarios = with_difficulty(load_scenarios(a.scenarios), difficulty_override(a.difficulty));

  json config = {{"scenarios", sha256_file(a.scenarios)}, {"seed", *a.seed},       {"engine", a.engine},
                 {"policy", a.policy},                    {"rollout", to_json(cfg)}, {"difficulty", a.difficulty},
                 {"prompt_version", kPromptVersion}};
  if (!a.snapshot.empty()) config["snapshot"] = sha256_file(a.snapshot);
  if (a.policy == "replay") config["replay_from"] = sha256_file(a.replay_from);
  if (a.needs_gateway()) {
    config["gateway"] = a.gw.to_json();
    config["simulator_profile"] = a.simulator_profile;
    config["policy_profile"] = a.policy_profile;
  }
  RunDir run(a.out, "rollout", config);
  run.input("scenarios", a.scenarios);

  std::unique_ptr<Gateway> gw;
  if (a.needs_gateway()) gw = a.gw.make();
  auto engine = make_engine(a, gw.get());

  std::unique_ptr<PolicyPort> policy;
  if (a.policy == "llm") {
    policy = std::make_unique<LlmPolicy>(*gw, a.policy_profile, a.policy_temperature);
  } else if (a.policy == "replay") {
    policy = std::make_unique<ReplayPolicy>(load_transcripts(a.replay_from).transcripts);
  } else if (!a.snapshot.empty()) {
    policy = std::make_unique<ToyPolicyPort>(snapshot_from_json(read_json_file(a.snapshot)).learner.policy);
  } else {
    policy = std::make_unique<ToyPolicyPort>(ToyPolicy{});
  }

  auto ts = run_batch(scenarios, *policy, *engine, cfg, a.parallelism, *a.seed);
  const auto tpath = run / "transcripts.jsonl";
  persist_transcripts(tpath.string(), ts);

  auto stats = benchmark_stats(ts, cfg.reward_spec);
  Provenance prov{run.hash(), sha256_file(tpath.string())};
  write_benchmark_csv(run / "benchmark.csv", prov, stats, acceptance_rate(judged_deltas(ts)));
  write_gateway_stats(run, gw.get());
  run.seal();

  std::cout << "Score  Success  Failure\n"
            << (stats.score ? text::format_fixed(*stats.score, 1) : std::string("NA")) << "  "
            << pct(stats.success_rate) << "  " << pct(stats.failure_rate) << "\n"
            << "episodes " << stats.episodes << " (aborted " << stats.aborted << ")\n"
            << "run directory " << run.path().string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs : EnvArgs {
  std::string algo = "ppo";
  OptimizerConfig opt;
  std::string advantage_mode = "terminal_broadcast";
  int steps = 300;
  int snapshot_every = 50;
  int eval_episodes = 256;
  std::string resume;

  TrainArgs() : EnvArgs(kTrainMaxTurns) {}

  void attach(CLI::App* app) {
    EnvArgs::attach(app);
    option(app, "algo", algo, "ppo | grpo");
    option(app, "steps", steps, "policy updates");
    option(app, "learning-rate", opt.learning_rate, "Adam step size after warmup");
    option(app, "clip-eps", opt.clip_eps, "ratio clipping range");
    option(app, "entropy-coef", opt.entropy_coef, "entropy bonus weight");
    option(app, "imitation-coef", opt.imitation_coef, "weight of the imitation term");
    option(app, "warmup-steps", opt.warmup_steps, "linear warmup length");
    option(app, "batch-size", opt.batch_size, "episodes per update");
    option(app, "kl-coef", opt.kl_coef, "KL penalty weight (PPO)");
    option(app, "group-size", opt.group_size, "rollouts per scenario group (GRPO)");
    option(app, "advantage-mode", advantage_mode, "terminal_broadcast | per_turn_delta");
    option(app, "epochs", opt.epochs, "gradient steps per batch");
    option(app, "snapshot-every", snapshot_every, "write a snapshot every K updates (0: final only)");
    option(app, "eval-episodes", eval_episodes, "episodes for the initial and final evaluation");
    option(app, "resume", resume, "snapshot to continue from");
  }

  TrainConfig config() const {
    TrainConfig c;
    c.algo = algo_from_string(algo);
    c.opt = opt;
    c.opt.advantage_mode = advantage_mode_from_string(advantage_mode);
    c.rollout = rollout_config();
    c.steps = steps;
    c.seed = seed.value_or(0);
    c.parallelism = parallelism;
    c.eval_episodes = eval_episodes;
    c.difficulty = difficulty_override(difficulty);
    c.snapshot_every = snapshot_every;
    return c;
  }
};

int run_train(const TrainArgs& a) {
  Problems p;
  a.validate(p);
  if (!a.resume.empty()) p.need_file(a.resume, "resume snapshot");
  if (a.snapshot_every < 0) p.add("snapshot-every must be non-negative");
  if (a.needs_gateway()) a.gw.validate(p);
  p.check([&] { a.config().validate(); });
  p.raise();

  TrainConfig cfg = a.config();
  const std::string chash = train_config_hash(cfg);

  std::optional<Learner> resume;
  int start = 0;
  if (!a.resume.empty()) {
    auto snap = snapshot_from_json(read_json_file(a.resume));
    if (snap.config_hash != chash) {
      throw ConfigError("snapshot " + a.resume + " was written by a run with config hash " + snap.config_hash +
                        "; this run hashes to " + chash);
    }
    resume = std::move(snap.learner);
    start = snap.step;
  }

  json config = {{"train_config_hash", chash}, {"scenarios", sha256_file(a.scenarios)}, {"engine", a.engine},
                 {"steps", cfg.steps},         {"eval_episodes", cfg.eval_episodes}};
  if (a.needs_gateway()) config["gateway"] = a.gw.to_json();
  if (!a.resume.empty()) config["resume"] = sha256_file(a.resume);
  RunDir run(a.out, "train", config);
  run.input("scenarios", a.scenarios);
  fs::create_directories(run / "snapshots");

  std::unique_ptr<Gateway> gw;
  if (a.needs_gateway()) gw = a.gw.make();
  auto engine = make_engine(a, gw.get());

  std::ofstream metrics(run / "metrics.jsonl", std::ios::trunc);
  auto write_snapshot = [&](const Learner& L, int step, const fs::path& path) {
    write_text(path, snapshot_to_json(L, chash, step).dump() + "\n");
  };
  TrainHooks hooks;
  hooks.on_step = [&](const CurveRecord& r, const UpdateStats& s) {
    json j = to_json(r);
    j["update"] = to_json(s);
    metrics << j.dump() << '\n';
    if (r.step % 25 == 0) spdlog::info("step {} mean reward {:.4f} entropy {:.3f}", r.step, r.mean_reward, r.entropy);
  };
  hooks.on_snapshot = [&](const Learner& L, int step) {
    char name[32];
    std::snprintf(name, sizeof name, "step-%06d.json", step);
    write_snapshot(L, step, run / "snapshots" / name);
  };

  auto res = train(load_scenarios(a.scenarios), *engine, cfg, hooks, std::move(resume), start);
  metrics.close();
  write_snapshot(res.learner, cfg.steps, run / "snapshot.json");
  write_text(run / "eval.json",
             json{{"initial", to_json(res.initial_eval)}, {"final", to_json(res.final_eval)}}.dump(2) + "\n");
  write_plot_data(run.path(), Provenance{run.hash(), sha256_file((run / "metrics.jsonl").string())}, res.curve);
  write_gateway_stats(run, gw.get());
  run.seal();

  std::cout << "mean reward " << text::format_fixed(res.initial_eval.mean_reward, 4) << " -> "
            << text::format_fixed(res.final_eval.mean_reward, 4) << " after " << cfg.steps << " updates\n"
            << "run directory " << run.path().string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// annotate

struct AnnotateArgs {
  std::string transcripts;
  std::string out = "runs";
  std::string schema = "main5";
  std::string annotator = "keyword";
  std::string annotator_profile = "judge";
  GatewayArgs gw;

  void attach(CLI::App* app) {
    option(app, "transcripts", transcripts, "transcript file (JSONL)");
    option(app, "out", out, "output root");
    option(app, "schema", schema, "main5 | appendix7");
    option(app, "annotator", annotator, "keyword | llm");
    option(app, "annotator-profile", annotator_profile, "gateway profile for the llm annotator");
    gw.attach(app);
  }
};

std::vector<DialogueTranscript> load_all(const std::string& path) { return load_transcripts(path).transcripts; }

int run_annotate(const AnnotateArgs& a) {
  Problems p;
  p.need_file(a.transcripts, "transcript file");
  p.check([&] { (void)schema_from_string(a.schema); });
  if (a.annotator != "keyword" && a.annotator != "llm") {
    p.add("unknown annotator '" + a.annotator + "' (expected keyword|llm)");
  }
  if (a.annotator == "keyword" && a.schema != "main5") {
    p.add("the keyword annotator only knows the main5 schema");
  }
  if (a.annotator == "llm") a.gw.validate(p);
  p.raise();

  const auto schema = schema_from_string(a.schema);
  json config = {{"transcripts", sha256_file(a.transcripts)}, {"schema", a.schema}, {"annotator", a.annotator},
                 {"prompt_version", kPromptVersion}};
  if (a.annotator == "llm") {
    config["gateway"] = a.gw.to_json();
    config["annotator_profile"] = a.annotator_profile;
  }
  RunDir run(a.out, "annotate", config);
  run.input("transcripts", a.transcripts);

  std::unique_ptr<Gateway> gw;
  Annotator annotate = keyword_annotator();
  if (a.annotator == "llm") {
    gw = a.gw.make();
    annotate = llm_annotator(*gw, a.annotator_profile, schema);
  }
  auto annotated = annotate_transcripts(load_all(a.transcripts), schema, annotate);
  std::ofstream out(run / "annotations.jsonl", std::ios::trunc);
  std::size_t failed = 0;
  for (const auto& t : annotated) {
    out << to_json(t).dump() << '\n';
    failed += !t.annotated;
  }
  out.close();
  write_gateway_stats(run, gw.get());
  run.seal();
  std::cout << annotated.size() << " turns annotated (" << failed << " unannotatable)\n"
            << "run directory " << run.path().string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string transcripts;
  std::vector<std::string> annotations;
  std::string scenarios;
  std::string out = "runs";
  bool sc = false;
  bool scc = false;
  bool capabilities = false;
  bool expression = false;
  bool replay = false;
  bool map_main5 = false;
  std::string scc_scale = "pm1";
  std::string label = "model";
  std::string judge_profile = "judge";
  GatewayArgs gw;

  void attach(CLI::App* app) {
    option(app, "transcripts", transcripts, "transcript file (JSONL)");
    option(app, "annotations", annotations, "annotation files (JSONL); may repeat");
    option(app, "scenarios", scenarios, "scenario set; needed for --expression");
    option(app, "out", out, "output root");
    flag(app, "sc", sc, "require annotations and report strategy contribution");
    flag(app, "scc", scc, "place the model on the social cognition coordinate");
    flag(app, "capabilities", capabilities, "five-capability rubric per transcript");
    flag(app, "expression", expression, "expression level of the simulated user");
    flag(app, "replay", replay, "shorthand for --gateway-mode replay");
    flag(app, "map-to-main5", map_main5, "relabel appendix7 annotations in main5 terms");
    option(app, "scc-scale", scc_scale, "pm1 | pm5");
    option(app, "label", label, "model label used in the SCC analysis");
    option(app, "judge-profile", judge_profile, "gateway profile for the judge analyses");
    gw.attach(app);
  }

  bool needs_gateway() const { return scc || capabilities || expression; }
};

int run_report(ReportArgs a) {
  if (a.replay) a.gw.mode = "replay";
  Problems p;
  p.need_file(a.transcripts, "transcript file");
  for (const auto& f : a.annotations) p.need_file(f, "annotation file");
  if (a.sc && a.annotations.empty()) p.add("--sc needs --annotations");
  if (a.expression) p.need_file(a.scenarios, "scenario file (for --expression)");
  p.check([&] { (void)scc_scale_from_string(a.scc_scale); });
  if (a.needs_gateway()) a.gw.validate(p);
  p.raise();

  auto ts = load_all(a.transcripts);
  std::vector<AnnotatedTurn> annotated;
  for (const auto& f : a.annotations) {
    std::ifstream in(f);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (text::trim(line).empty()) continue;
      try {
        annotated.push_back(annotated_turn_from_json(json::parse(line)));
      } catch (const std::exception& e) {
        throw ParseError(f + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }
  if (a.map_main5) annotated = map_to_main5(std::move(annotated), TaxonomyMap::defaults());
  auto schema = common_schema(annotated);

  json config = {{"transcripts", sha256_file(a.transcripts)},
                 {"sc", a.sc},
                 {"scc", a.scc},
                 {"capabilities", a.capabilities},
                 {"expression", a.expression},
                 {"map_to_main5", a.map_main5},
                 {"scc_scale", a.scc_scale},
                 {"label", a.label},
                 {"prompt_version", kPromptVersion}};
  json ann = json::array();
  for (const auto& f : a.annotations) ann.push_back(sha256_file(f));
  config["annotations"] = ann;
  if (a.expression) config["scenarios"] = sha256_file(a.scenarios);
  if (a.needs_gateway()) {
    config["gateway"] = a.gw.to_json();
    config["judge_profile"] = a.judge_profile;
  }
  RunDir run(a.out, "report", config);
  run.input("transcripts", a.transcripts);
  Provenance prov{run.hash(), sha256_file(a.transcripts)};

  write_benchmark_csv(run / "benchmark.csv", prov, benchmark_stats(ts), acceptance_rate(judged_deltas(ts)));
  if (schema) {
    write_frequency_csv(run / "strategy_frequency.csv", prov, annotated);
    write_contribution_csv(run / "strategy_contribution.csv", prov, annotated);
  }

  std::unique_ptr<Gateway> gw;
  if (a.needs_gateway()) gw = a.gw.make();
  if (a.capabilities) {
    std::vector<CapabilityRow> rows;
    for (const auto& t : ts) {
      if (t.aborted()) continue;
      auto s = capability_scores(t, *gw, a.judge_profile);
      if (!s) spdlog::warn("capability judge output for {} unusable: {}", t.id, s.failure().reason);
      rows.push_back({t.id, s ? std::optional<CapabilityScores>(s.value()) : std::nullopt});
    }
    write_capabilities_csv(run / "capabilities.csv", prov, rows);
  }
  if (a.expression) {
    std::map<std::string, std::string> needs;
    for (const auto& s : load_scenarios(a.scenarios)) needs[s.id] = s.hidden_intention;
    write_expression_csv(run / "expression.csv", prov, expression_level(expression_probes(ts, needs), *gw, a.judge_profile));
  }
  if (a.scc) {
    auto scale = scc_scale_from_string(a.scc_scale);
    std::map<StrategyId, double> freq;
    if (schema) freq = strategy_frequency(annotated);
    auto point = scc_profile_and_place(ts, freq, *gw, a.judge_profile, scale, a.label);
    if (!point) throw Error("SCC judge output unusable: " + point.failure().reason);
    write_scc_csv(run / "scc.csv", prov, point.value(), scale);
  }
  write_gateway_stats(run, gw.get());
  run.seal();
  std::cout << "run directory " << run.path().string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-reward dialogue training and evaluation"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "TOML config file; one [command] section per subcommand, keys are long flag names")
      ->envname("RLVER_CONFIG");
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off")
      ->capture_default_str()
      ->envname("RLVER_LOG_LEVEL");

  RolloutArgs rollout;
  TrainArgs train_args;
  AnnotateArgs annotate;
  ReportArgs report;
  auto* c_rollout = app.add_subcommand("rollout", "run episodes and write transcripts plus benchmark.csv");
  auto* c_train = app.add_subcommand("train", "optimize the toy policy against the simulator");
  auto* c_annotate = app.add_subcommand("annotate", "label model turns with support strategies");
  auto* c_report = app.add_subcommand("report", "write metric CSVs from transcripts and annotations");
  rollout.attach(c_rollout);
  train_args.attach(c_train);
  annotate.attach(c_annotate);
  report.attach(c_report);
  for (auto* c : {c_rollout, c_train, c_annotate, c_report}) c->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  auto logger = spdlog::stderr_color_mt("rlver");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*c_rollout) return run_rollout(rollout);
    if (*c_train) return run_train(train_args);
    if (*c_annotate) return run_annotate(annotate);
    if (*c_report) return run_report(report);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const StaleBatch& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const TransportFailure& e) {
    spdlog::error("{}", e.what());
    return kTransport;
  } catch (const PermanentFailure& e) {
    spdlog::error("{}", e.what());
    return kTransport;
  } catch (const ReplayMiss& e) {
    spdlog::error("{}", e.what());
    return kTransport;
  } catch (const CacheCorrupt& e) {
    spdlog::error("{}", e.what());
    return kTransport;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
  return kRuntime;
}
