#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rlver/error.hpp"
#include "rlver/policy.hpp"
#include "rlver/transcript.hpp"

namespace rlver {

enum class Algo { Ppo, Grpo };
enum class AdvantageMode { TerminalBroadcast, PerTurnDelta };

inline constexpr std::string_view to_string(Algo a) noexcept { return a == Algo::Ppo ? "ppo" : "grpo"; }
inline constexpr std::string_view to_string(AdvantageMode m) noexcept {
  return m == AdvantageMode::TerminalBroadcast ? "terminal_broadcast" : "per_turn_delta";
}

inline Algo algo_from_string(std::string_view s) {
  if (s == "ppo") return Algo::Ppo;
  if (s == "grpo") return Algo::Grpo;
  throw ConfigError("unknown algorithm '" + std::string(s) + "' (expected ppo|grpo)");
}

inline AdvantageMode advantage_mode_from_string(std::string_view s) {
  if (s == "terminal_broadcast") return AdvantageMode::TerminalBroadcast;
  if (s == "per_turn_delta") return AdvantageMode::PerTurnDelta;
  throw ConfigError("unknown advantage mode '" + std::string(s) + "'");
}

struct OptimizerConfig {
  double learning_rate = 0.05;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double imitation_coef = 0.05;
  int warmup_steps = 50;
  int batch_size = 32;
  double kl_coef = 0.0;  // PPO only
  int group_size = 4;    // GRPO only
  AdvantageMode advantage_mode = AdvantageMode::TerminalBroadcast;
  int epochs = 4;  // gradient steps per collected batch
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double baseline_rate = 0.05;  // floor on the per-state baseline's update weight

  void validate(Algo algo) const {
    if (!(clip_eps > 0)) throw ConfigError("clip_eps must be positive");
    if (!(learning_rate >= 0)) throw ConfigError("learning_rate must be non-negative");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (entropy_coef < 0 || imitation_coef < 0 || kl_coef < 0) {
      throw ConfigError("entropy_coef, imitation_coef and kl_coef must be non-negative");
    }
    if (algo == Algo::Grpo) {
      if (group_size < 2) {
        throw ConfigError("GRPO normalizes rewards within a group and needs group_size >= 2");
      }
      if (batch_size % group_size != 0) throw ConfigError("GRPO batch_size must be a multiple of group_size");
      if (kl_coef != 0.0) throw ConfigError("GRPO updates carry no KL term; set kl_coef to 0");
      if (advantage_mode != AdvantageMode::TerminalBroadcast) {
        throw ConfigError("GRPO advantages are group-normalized terminal rewards; use terminal_broadcast");
      }
    }
  }
};

inline nlohmann::json to_json(const OptimizerConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"clip_eps", c.clip_eps},
          {"entropy_coef", c.entropy_coef},   {"imitation_coef", c.imitation_coef},
          {"warmup_steps", c.warmup_steps},   {"batch_size", c.batch_size},
          {"kl_coef", c.kl_coef},             {"group_size", c.group_size},
          {"advantage_mode", to_string(c.advantage_mode)},
          {"epochs", c.epochs},               {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},       {"adam_eps", c.adam_eps},
          {"baseline_rate", c.baseline_rate}};
}

/// Linear warmup over the first `warmup_steps` updates, constant afterwards.
inline double warmup_lr(const OptimizerConfig& c, long step) {
  if (c.warmup_steps > 0 && step < c.warmup_steps) {
    return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  return c.learning_rate;
}

// ---------------------------------------------------------------------------
// Trajectories and advantages

struct TrajectoryStep {
  std::size_t state = 0;
  std::size_t action = 0;
  double old_log_prob = 0.0;
  double delta = 0.0;  // simulator emotion change caused by this turn, 0 if unjudged
};

struct EpisodeTrajectory {
  std::vector<TrajectoryStep> steps;
  double reward = 0.0;
  int group = 0;
};

struct TrajectoryBatch {
  std::string snapshot_id;
  std::vector<EpisodeTrajectory> episodes;

  std::size_t step_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.steps.size();
    return n;
  }
};

/// Builds a batch from completed transcripts. Aborted episodes are left out;
/// every transcript must come from `snapshot_id`. Episode i belongs to group
/// i / group_size in the original (unfiltered) order.
inline TrajectoryBatch assemble_batch(const std::vector<DialogueTranscript>& transcripts,
                                      const std::string& snapshot_id, int group_size = 1) {
  TrajectoryBatch b;
  b.snapshot_id = snapshot_id;
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const auto& t = transcripts[i];
    if (t.aborted()) continue;
    if (t.policy_version != snapshot_id) {
      throw StaleBatch("transcript " + t.id + " came from " + t.policy_version + ", expected " + snapshot_id);
    }
    EpisodeTrajectory e;
    e.reward = t.reward;
    e.group = static_cast<int>(i / static_cast<std::size_t>(std::max(group_size, 1)));
    for (const auto& turn : t.turns) {
      if (turn.speaker != Speaker::Model) continue;
      if (!turn.trace) throw UsageError("transcript " + t.id + " has a model turn without a policy trace");
      e.steps.push_back({turn.trace->state, turn.trace->action, turn.trace->log_prob, turn.delta.value_or(0.0)});
    }
    b.episodes.push_back(std::move(e));
  }
  return b;
}

inline constexpr double kGroupStdFloor = 1e-8;

/// (r - mean) / std within one group, population std. A group whose std is
/// below the floor gets exact zeros.
inline std::vector<double> grpo_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) {
    throw ConfigError("GRPO needs at least 2 rollouts per group; got " + std::to_string(rewards.size()));
  }
  double n = static_cast<double>(rewards.size());
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd < kGroupStdFloor) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

/// Per-step signal for one episode. Terminal mode repeats `terminal` on every
/// step (the caller subtracts any baseline); per-turn mode uses delta / 100.
inline std::vector<double> advantage_broadcast(double terminal, const std::vector<double>& deltas,
                                               AdvantageMode mode) {
  std::vector<double> out(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    out[i] = mode == AdvantageMode::TerminalBroadcast ? terminal : deltas[i] / 100.0;
  }
  return out;
}

/// max(r - mean r, 0) per episode.
inline std::vector<double> imitation_weights(const TrajectoryBatch& b) {
  std::vector<double> w(b.episodes.size(), 0.0);
  if (b.episodes.empty()) return w;
  double mean = 0.0;
  for (const auto& e : b.episodes) mean += e.reward;
  mean /= static_cast<double>(b.episodes.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::max(b.episodes[i].reward - mean, 0.0);
  return w;
}

// ---------------------------------------------------------------------------
// Loss

/// One step as the loss sees it: everything fixed except θ.
struct LossStep {
  std::size_t state = 0;
  std::size_t action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double imitation_weight = 0.0;
};

struct LossInput {
  std::size_t states = 0;
  std::size_t actions = 0;
  std::vector<LossStep> steps;
  std::vector<double> old_theta;  // reference for the KL term; may be empty when kl_coef == 0
};

struct LossValue {
  double total = 0.0;
  double surrogate = 0.0;  // mean clipped surrogate (to be maximized)
  double entropy = 0.0;    // mean policy entropy over visited states
  double imitation = 0.0;  // mean weighted negative log-likelihood
  double kl = 0.0;         // mean KL(old || current)
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

/// total = -surrogate - entropy_coef·entropy + imitation_coef·imitation + kl_coef·kl,
/// each averaged over steps. Writes ∂total/∂θ into `grad` when non-null.
inline LossValue evaluate_loss(const std::vector<double>& theta, const LossInput& in,
                               const OptimizerConfig& cfg, std::vector<double>* grad = nullptr) {
  const std::size_t A = in.actions;
  if (theta.size() != in.states * A) throw UsageError("evaluate_loss: θ size mismatch");
  if (cfg.kl_coef != 0.0 && in.old_theta.size() != theta.size()) {
    throw UsageError("evaluate_loss: KL term needs the old parameters");
  }
  if (grad) grad->assign(theta.size(), 0.0);
  LossValue v;
  if (in.steps.empty()) return v;
  const double inv_n = 1.0 / static_cast<double>(in.steps.size());
  const double lo = 1.0 - cfg.clip_eps, hi = 1.0 + cfg.clip_eps;
  std::size_t clipped = 0;

  for (const auto& st : in.steps) {
    if (st.state >= in.states || st.action >= A) throw UsageError("evaluate_loss: step out of range");
    const double* row = theta.data() + st.state * A;
    auto lp = log_softmax(row, A);
    std::vector<double> p(A);
    for (std::size_t b = 0; b < A; ++b) p[b] = std::exp(lp[b]);

    double ratio = std::exp(lp[st.action] - st.old_log_prob);
    double adv = st.advantage;
    double unclipped = ratio * adv;
    double clip_term = std::clamp(ratio, lo, hi) * adv;
    v.surrogate += std::min(unclipped, clip_term) * inv_n;
    v.mean_ratio += ratio * inv_n;
    if (ratio < lo || ratio > hi) ++clipped;
    // The unclipped branch carries gradient unless the clip bound binds.
    bool surrogate_active = adv >= 0 ? ratio <= hi : ratio >= lo;

    double h = 0.0;
    for (std::size_t b = 0; b < A; ++b) h -= p[b] * lp[b];
    v.entropy += h * inv_n;
    v.imitation += -st.imitation_weight * lp[st.action] * inv_n;

    std::vector<double> p_old;
    if (cfg.kl_coef != 0.0) {
      auto lp_old = log_softmax(in.old_theta.data() + st.state * A, A);
      p_old.resize(A);
      double kl = 0.0;
      for (std::size_t b = 0; b < A; ++b) {
        p_old[b] = std::exp(lp_old[b]);
        kl += p_old[b] * (lp_old[b] - lp[b]);
      }
      v.kl += kl * inv_n;
    }

    if (grad) {
      double* g = grad->data() + st.state * A;
      for (std::size_t b = 0; b < A; ++b) {
        double dlogp = (b == st.action ? 1.0 : 0.0) - p[b];
        double d = 0.0;
        if (surrogate_active) d -= adv * ratio * dlogp;
        d -= cfg.entropy_coef * (-p[b] * (lp[b] + h));
        d += cfg.imitation_coef * (-st.imitation_weight * dlogp);
        if (cfg.kl_coef != 0.0) d += cfg.kl_coef * (p[b] - p_old[b]);
        g[b] += d * inv_n;
      }
    }
  }
  v.clip_fraction = static_cast<double>(clipped) * inv_n;
  v.total = -v.surrogate - cfg.entropy_coef * v.entropy + cfg.imitation_coef * v.imitation +
            cfg.kl_coef * v.kl;
  return v;
}

/// The imitation term alone: -mean over steps of w(r)·log π(a|s).
inline double imitation_loss(const ToyPolicy& policy, const TrajectoryBatch& b) {
  if (b.episodes.empty()) throw UsageError("imitation_loss: empty batch");
  auto w = imitation_weights(b);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < b.episodes.size(); ++i) {
    for (const auto& st : b.episodes[i].steps) {
      sum += -w[i] * policy.log_probs(st.state)[st.action];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Learner state and updates

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
};

/// Everything a resumed run needs: parameters, optimizer moments, the PPO
/// per-state baseline, and the update counter that drives warmup.
struct Learner {
  ToyPolicy policy;
  AdamState adam;
  std::vector<double> baseline;
  std::vector<long> baseline_count;
  long updates = 0;

  Learner() : Learner(ToyPolicy{}) {}
  explicit Learner(ToyPolicy p) : policy(std::move(p)) {
    adam.m.assign(policy.theta().size(), 0.0);
    adam.v.assign(policy.theta().size(), 0.0);
    baseline.assign(policy.num_states(), 0.0);
    baseline_count.assign(policy.num_states(), 0);
  }
};

struct UpdateStats {
  double loss = 0.0;
  double surrogate = 0.0;
  double entropy = 0.0;
  double imitation = 0.0;
  double kl = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;  // averaged over epochs
  double learning_rate = 0.0;
  std::size_t steps = 0;
  bool skipped = false;
};

namespace detail {

inline void adam_step(std::vector<double>& theta, const std::vector<double>& g, AdamState& s,
                      const OptimizerConfig& c, double lr) {
  ++s.t;
  double bc1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(s.t));
  double bc2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.m[i] = c.adam_beta1 * s.m[i] + (1 - c.adam_beta1) * g[i];
    s.v[i] = c.adam_beta2 * s.v[i] + (1 - c.adam_beta2) * g[i] * g[i];
    double mh = s.m[i] / bc1;
    double vh = s.v[i] / bc2;
    theta[i] -= lr * mh / (std::sqrt(vh) + c.adam_eps);
  }
}

/// Runs `epochs` gradient steps on a frozen LossInput.
inline UpdateStats optimize(Learner& L, LossInput in, const OptimizerConfig& cfg) {
  UpdateStats stats;
  stats.steps = in.steps.size();
  stats.learning_rate = warmup_lr(cfg, L.updates);
  if (cfg.kl_coef != 0.0) in.old_theta = L.policy.theta();
  std::vector<double> theta = L.policy.theta();
  std::vector<double> grad;
  AdamState adam = L.adam;
  double clip_sum = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto v = evaluate_loss(theta, in, cfg, &grad);
    bool finite = std::isfinite(v.total) &&
                  std::all_of(grad.begin(), grad.end(), [](double x) { return std::isfinite(x); });
    if (!finite) {
      spdlog::error("non-finite loss at update {}; update skipped", L.updates);
      stats.skipped = true;
      ++L.updates;
      return stats;
    }
    if (epoch == 0) {
      stats.loss = v.total;
      stats.surrogate = v.surrogate;
      stats.entropy = v.entropy;
      stats.imitation = v.imitation;
      stats.kl = v.kl;
      stats.mean_ratio = v.mean_ratio;
    }
    clip_sum += v.clip_fraction;
    adam_step(theta, grad, adam, cfg, stats.learning_rate);
  }
  stats.clip_fraction = clip_sum / cfg.epochs;
  L.policy.set_theta(std::move(theta));
  L.adam = std::move(adam);
  ++L.updates;
  return stats;
}

inline void check_fresh(const Learner& L, const TrajectoryBatch& b) {
  if (b.snapshot_id != L.policy.snapshot_id()) {
    throw StaleBatch("batch from snapshot " + b.snapshot_id + " cannot update " + L.policy.snapshot_id());
  }
}

}  // namespace detail

/// PPO step. Terminal mode subtracts a per-state running-mean baseline from the
/// episode reward; the baseline is updated after the advantages are taken.
inline UpdateStats ppo_update(Learner& L, const TrajectoryBatch& b, const OptimizerConfig& cfg) {
  cfg.validate(Algo::Ppo);
  detail::check_fresh(L, b);
  LossInput in{L.policy.num_states(), L.policy.num_actions(), {}, {}};
  auto w = imitation_weights(b);
  double batch_mean = 0.0;
  for (const auto& e : b.episodes) batch_mean += e.reward;
  if (!b.episodes.empty()) batch_mean /= static_cast<double>(b.episodes.size());

  for (std::size_t i = 0; i < b.episodes.size(); ++i) {
    const auto& e = b.episodes[i];
    std::vector<double> deltas;
    for (const auto& st : e.steps) deltas.push_back(st.delta);
    auto adv = advantage_broadcast(e.reward, deltas, cfg.advantage_mode);
    for (std::size_t k = 0; k < e.steps.size(); ++k) {
      const auto& st = e.steps[k];
      double a = adv[k];
      if (cfg.advantage_mode == AdvantageMode::TerminalBroadcast) {
        a -= L.baseline_count[st.state] ? L.baseline[st.state] : batch_mean;
      }
      in.steps.push_back({st.state, st.action, st.old_log_prob, a, w[i]});
    }
  }
  for (const auto& e : b.episodes) {
    for (const auto& st : e.steps) {
      auto& n = L.baseline_count[st.state];
      ++n;
      double rate = std::max(1.0 / static_cast<double>(n), cfg.baseline_rate);
      L.baseline[st.state] += rate * (e.reward - L.baseline[st.state]);
    }
  }
  return detail::optimize(L, std::move(in), cfg);
}

/// GRPO step: group-normalized terminal rewards on every step, no baseline,
/// no KL. A group shrunk to one member by aborts contributes zero advantage.
inline UpdateStats grpo_update(Learner& L, const TrajectoryBatch& b, const OptimizerConfig& cfg) {
  cfg.validate(Algo::Grpo);
  detail::check_fresh(L, b);
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < b.episodes.size(); ++i) groups[b.episodes[i].group].push_back(i);
  std::vector<double> ep_adv(b.episodes.size(), 0.0);
  for (const auto& [g, members] : groups) {
    if (members.size() < 2) continue;
    std::vector<double> r;
    for (auto i : members) r.push_back(b.episodes[i].reward);
    auto a = grpo_advantages(r);
    for (std::size_t k = 0; k < members.size(); ++k) ep_adv[members[k]] = a[k];
  }
  auto w = imitation_weights(b);
  LossInput in{L.policy.num_states(), L.policy.num_actions(), {}, {}};
  for (std::size_t i = 0; i < b.episodes.size(); ++i) {
    for (const auto& st : b.episodes[i].steps) {
      in.steps.push_back({st.state, st.action, st.old_log_prob, ep_adv[i], w[i]});
    }
  }
  return detail::optimize(L, std::move(in), cfg);
}

inline nlohmann::json to_json(const UpdateStats& s) {
  return {{"loss", s.loss},           {"surrogate", s.surrogate}, {"entropy", s.entropy},
          {"imitation", s.imitation}, {"kl", s.kl},               {"mean_ratio", s.mean_ratio},
          {"clip_fraction", s.clip_fraction}, {"learning_rate", s.learning_rate},
          {"steps", s.steps},         {"skipped", s.skipped}};
}

}  // namespace rlver
