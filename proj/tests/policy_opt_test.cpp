#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace rlver;
using namespace rlver::testing;

namespace {

std::vector<double> random_theta(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, scale);
  std::vector<double> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

// Independent log-softmax used as an oracle for the policy's own.
double oracle_log_prob(const std::vector<double>& theta, std::size_t A, std::size_t s, std::size_t a) {
  double z = 0.0;
  for (std::size_t b = 0; b < A; ++b) z += std::exp(theta[s * A + b]);
  return theta[s * A + a] - std::log(z);
}

TrajectoryBatch batch_of(const std::vector<double>& rewards, const ToyPolicy& p, int group_size,
                         std::size_t steps_per_episode = 3) {
  TrajectoryBatch b;
  b.snapshot_id = p.snapshot_id();
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    EpisodeTrajectory e;
    e.reward = rewards[i];
    e.group = static_cast<int>(i) / group_size;
    for (std::size_t k = 0; k < steps_per_episode; ++k) {
      std::size_t s = (i * 7 + k * 3) % p.num_states();
      std::size_t a = (i + k) % p.num_actions();
      e.steps.push_back({s, a, p.log_probs(s)[a], 2.0 * static_cast<double>(k) - 1.0});
    }
    b.episodes.push_back(std::move(e));
  }
  return b;
}

}  // namespace

TEST(ToyPolicy, ZeroParametersAreUniform) {
  ToyPolicy p;
  for (std::size_t s = 0; s < p.num_states(); s += 13) {
    for (double lp : p.log_probs(s)) EXPECT_NEAR(lp, -std::log(static_cast<double>(kToyActions)), 1e-12);
  }
}

TEST(ToyPolicy, LogProbsMatchOracle) {
  ToyPolicy p;
  p.set_theta(random_theta(p.theta().size(), 4, 3.0));
  for (std::size_t s = 0; s < p.num_states(); s += 7) {
    auto lp = p.log_probs(s);
    for (std::size_t a = 0; a < p.num_actions(); ++a) {
      EXPECT_NEAR(lp[a], oracle_log_prob(p.theta(), p.num_actions(), s, a), 1e-12);
    }
  }
}

TEST(ToyPolicy, LargeLogitsStayFinite) {
  ToyPolicy p(1, 3);
  p.set_theta({1000, 0, -1000});
  auto lp = p.log_probs(0);
  for (double v : lp) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(lp[0], 0.0, 1e-12);
  EXPECT_EQ(p.argmax(0), 0u);
}

TEST(ToyPolicy, SnapshotIdTracksParameters) {
  ToyPolicy a, b;
  EXPECT_EQ(a.snapshot_id(), b.snapshot_id());
  auto t = a.theta();
  t[3] = 0.5;
  b.set_theta(t);
  EXPECT_NE(a.snapshot_id(), b.snapshot_id());
}

TEST(SampleAction, FrequenciesFollowProbabilities) {
  ToyPolicy p(1, 2);
  p.set_theta({0.0, std::log(3.0)});  // 1:3
  int ones = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ones += sample_action(p, 0, static_cast<std::uint64_t>(i)).action == 1;
  EXPECT_NEAR(ones / static_cast<double>(n), 0.75, 0.01);
}

TEST(SampleAction, ReportsLogProbOfDrawnAction) {
  ToyPolicy p;
  p.set_theta(random_theta(p.theta().size(), 9));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto d = sample_action(p, seed % p.num_states(), seed);
    EXPECT_DOUBLE_EQ(d.log_prob, p.log_probs(seed % p.num_states())[d.action]);
  }
}

TEST(GrpoAdvantages, Examples) {
  auto a = grpo_advantages({1, 0, 0, 1});
  EXPECT_EQ(a, (std::vector<double>{1, -1, -1, 1}));
  auto z = grpo_advantages({0.5, 0.5, 0.5, 0.5});
  EXPECT_EQ(z, (std::vector<double>{0, 0, 0, 0}));
  EXPECT_THROW(grpo_advantages({1.0}), ConfigError);
}

TEST(GrpoAdvantages, ZeroMeanUnitVarianceProperty) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(2 + trial % 7);
    for (auto& x : r) x = u(rng);
    auto a = grpo_advantages(r);
    double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    double var = 0.0;
    for (double x : a) var += (x - mean) * (x - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var / static_cast<double>(a.size()), 1.0, 1e-9);
  }
}

TEST(GrpoAdvantages, AffineInvariance) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(4);
    for (auto& x : r) x = u(rng);
    double scale = 0.1 + std::abs(u(rng)) * 10, shift = u(rng) * 50;
    std::vector<double> r2;
    for (double x : r) r2.push_back(scale * x + shift);
    auto a = grpo_advantages(r), b = grpo_advantages(r2);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(AdvantageBroadcast, Modes) {
  EXPECT_EQ(advantage_broadcast(0.7, {5, -3, 2}, AdvantageMode::TerminalBroadcast),
            (std::vector<double>{0.7, 0.7, 0.7}));
  EXPECT_EQ(advantage_broadcast(0.7, {5, -3, 2}, AdvantageMode::PerTurnDelta),
            (std::vector<double>{0.05, -0.03, 0.02}));
}

TEST(ImitationWeights, PositivePartOfCenteredReward) {
  ToyPolicy p;
  auto b = batch_of({0.2, 0.6, 1.0, 0.2}, p, 1);
  auto w = imitation_weights(b);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_NEAR(w[1], 0.1, 1e-12);
  EXPECT_NEAR(w[2], 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(w[3], 0.0);
}

TEST(ImitationLoss, LinearInWeight) {
  LossInput in{1, 3, {{0, 1, 0.0, 0.0, 1.0}}, {}};
  OptimizerConfig cfg;
  cfg.entropy_coef = 0;
  cfg.imitation_coef = 1;
  std::vector<double> theta{0.3, -0.2, 0.5};
  double base = evaluate_loss(theta, in, cfg).imitation;
  EXPECT_NEAR(base, -oracle_log_prob(theta, 3, 0, 1), 1e-12);
  in.steps[0].imitation_weight = 2.5;
  EXPECT_NEAR(evaluate_loss(theta, in, cfg).imitation, 2.5 * base, 1e-12);
}

TEST(EvaluateLoss, RatioOneGivesPlainAdvantage) {
  std::vector<double> theta{0.1, 0.2, 0.3};
  LossInput in{1, 3, {{0, 2, oracle_log_prob(theta, 3, 0, 2), 0.8, 0.0}}, {}};
  OptimizerConfig cfg;
  cfg.entropy_coef = 0;
  auto v = evaluate_loss(theta, in, cfg);
  EXPECT_NEAR(v.surrogate, 0.8, 1e-12);
  EXPECT_NEAR(v.mean_ratio, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(v.clip_fraction, 0.0);
}

TEST(EvaluateLoss, ClipBindsAtUpperBound) {
  std::vector<double> theta{0.0, 0.0};
  // old prob of action 0 was 0.25, now 0.5: ratio 2.
  LossInput in{1, 2, {{0, 0, std::log(0.25), 1.0, 0.0}}, {}};
  OptimizerConfig cfg;
  cfg.entropy_coef = 0;
  auto v = evaluate_loss(theta, in, cfg);
  EXPECT_NEAR(v.surrogate, 1.2, 1e-12);
  EXPECT_DOUBLE_EQ(v.clip_fraction, 1.0);
  in.steps[0].advantage = -1.0;  // pessimistic branch keeps the unclipped value
  EXPECT_NEAR(evaluate_loss(theta, in, cfg).surrogate, -2.0, 1e-12);
}

TEST(EvaluateLoss, EntropyOfUniformAndPeaked) {
  LossInput in{1, 4, {{0, 0, 0.0, 0.0, 0.0}}, {}};
  OptimizerConfig cfg;
  EXPECT_NEAR(evaluate_loss({0, 0, 0, 0}, in, cfg).entropy, std::log(4.0), 1e-12);
  EXPECT_LT(evaluate_loss({5, 0, 0, 0}, in, cfg).entropy, std::log(4.0));
}

TEST(EvaluateLoss, KlZeroAtReference) {
  std::vector<double> theta = random_theta(6, 1);
  LossInput in{2, 3, {{0, 1, 0.0, 0.0, 0.0}, {1, 2, 0.0, 0.0, 0.0}}, theta};
  OptimizerConfig cfg;
  cfg.kl_coef = 0.5;
  EXPECT_NEAR(evaluate_loss(theta, in, cfg).kl, 0.0, 1e-15);
  auto moved = theta;
  moved[0] += 1.0;
  EXPECT_GT(evaluate_loss(moved, in, cfg).kl, 0.0);
}

TEST(EvaluateLoss, GradientMatchesFiniteDifferences) {
  ToyPolicy p(6, 4);
  auto theta = random_theta(24, 17, 0.7);
  auto old = random_theta(24, 18, 0.7);
  LossInput in{6, 4, {}, old};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 30; ++k) {
    std::size_t s = k % 6, a = (k * 5) % 4;
    in.steps.push_back({s, a, oracle_log_prob(old, 4, s, a), u(rng), std::abs(u(rng))});
  }
  OptimizerConfig cfg;
  cfg.kl_coef = 0.3;
  cfg.entropy_coef = 0.05;
  cfg.imitation_coef = 0.2;
  cfg.clip_eps = 0.2;
  std::vector<double> grad;
  evaluate_loss(theta, in, cfg, &grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    double fd = (evaluate_loss(tp, in, cfg).total - evaluate_loss(tm, in, cfg).total) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "coordinate " << i;
  }
}

TEST(PpoUpdate, ZeroLearningRateLeavesParameters) {
  Learner L;
  L.policy.set_theta(random_theta(L.policy.theta().size(), 5));
  auto before = L.policy.theta();
  OptimizerConfig cfg;
  cfg.learning_rate = 0;
  ppo_update(L, batch_of({0.1, 0.9, 0.5, 0.3}, L.policy, 1), cfg);
  EXPECT_EQ(L.policy.theta(), before);
  EXPECT_EQ(L.updates, 1);
}

TEST(PpoUpdate, RaisesProbabilityOfRewardedAction) {
  Learner L(ToyPolicy(1, 2));
  TrajectoryBatch b;
  b.snapshot_id = L.policy.snapshot_id();
  for (int i = 0; i < 8; ++i) {
    EpisodeTrajectory e;
    std::size_t a = i % 2;
    e.reward = a == 0 ? 1.0 : 0.0;
    e.steps.push_back({0, a, std::log(0.5), 0});
    b.episodes.push_back(e);
  }
  OptimizerConfig cfg;
  cfg.warmup_steps = 0;
  ppo_update(L, b, cfg);
  EXPECT_GT(L.policy.probs(0)[0], 0.5);
}

TEST(PpoUpdate, StaleBatchRejected) {
  Learner L;
  auto b = batch_of({0.1, 0.2}, L.policy, 1);
  b.snapshot_id = "something-else";
  EXPECT_THROW(ppo_update(L, b, OptimizerConfig{}), StaleBatch);
}

TEST(GrpoUpdate, ZeroVarianceGroupsLeaveParameters) {
  Learner L;
  L.policy.set_theta(random_theta(L.policy.theta().size(), 6));
  auto before = L.policy.theta();
  OptimizerConfig cfg;
  cfg.entropy_coef = 0;
  cfg.imitation_coef = 0;
  cfg.batch_size = 8;
  grpo_update(L, batch_of({0.5, 0.5, 0.5, 0.5, 0.2, 0.2, 0.2, 0.2}, L.policy, 4), cfg);
  EXPECT_EQ(L.policy.theta(), before);
  EXPECT_EQ(L.updates, 1);
}

TEST(GrpoUpdate, MixedGroupMovesParameters) {
  Learner L;
  auto before = L.policy.theta();
  OptimizerConfig cfg;
  cfg.batch_size = 4;
  grpo_update(L, batch_of({1, 0, 0, 1}, L.policy, 4), cfg);
  EXPECT_NE(L.policy.theta(), before);
}

TEST(GrpoUpdate, ConfigValidation) {
  Learner L;
  OptimizerConfig cfg;
  cfg.group_size = 1;
  EXPECT_THROW(grpo_update(L, batch_of({0.1, 0.2}, L.policy, 1), cfg), ConfigError);
  cfg = OptimizerConfig{};
  cfg.advantage_mode = AdvantageMode::PerTurnDelta;
  EXPECT_THROW(grpo_update(L, batch_of({0.1, 0.2, 0.3, 0.4}, L.policy, 4), cfg), ConfigError);
  cfg = OptimizerConfig{};
  cfg.kl_coef = 0.1;
  EXPECT_THROW(cfg.validate(Algo::Grpo), ConfigError);
}

TEST(AssembleBatch, SkipsAbortedAndChecksSnapshot) {
  ScriptedEngine engine;
  ToyPolicyPort port{ToyPolicy{}};
  std::vector<Scenario> ss{make_scenario(1, Difficulty::Vanilla, 50, "a"), make_scenario(2, Difficulty::Vanilla, 50, "b")};
  auto ts = run_batch(ss, port, engine, RolloutConfig{}, 1, 4);
  ts[0].status = EpisodeStatus::Aborted;
  auto b = assemble_batch(ts, port.snapshot_id());
  ASSERT_EQ(b.episodes.size(), 1u);
  EXPECT_EQ(b.episodes[0].steps.size(), ts[1].model_turn_count());
  EXPECT_THROW(assemble_batch(ts, "other"), StaleBatch);
}

TEST(Warmup, LinearRamp) {
  OptimizerConfig c;
  c.learning_rate = 0.1;
  c.warmup_steps = 10;
  EXPECT_NEAR(warmup_lr(c, 0), 0.01, 1e-15);
  EXPECT_NEAR(warmup_lr(c, 9), 0.1, 1e-15);
  EXPECT_NEAR(warmup_lr(c, 50), 0.1, 1e-15);
}

TEST(Snapshot, RoundTripRestoresLearner) {
  Learner L;
  L.policy.set_theta(random_theta(L.policy.theta().size(), 12));
  ppo_update(L, batch_of({0.1, 0.9, 0.4}, L.policy, 1), OptimizerConfig{});
  auto j = snapshot_to_json(L, "hash", 7);
  auto back = snapshot_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.step, 7);
  EXPECT_EQ(back.config_hash, "hash");
  EXPECT_EQ(back.learner.policy.theta(), L.policy.theta());
  EXPECT_EQ(back.learner.adam.m, L.adam.m);
  EXPECT_EQ(back.learner.baseline, L.baseline);
  EXPECT_EQ(back.learner.updates, L.updates);
  j["theta"][0] = 42.0;
  EXPECT_THROW(snapshot_from_json(j), ConfigError);
}

TEST(Train, ConfigHashSensitiveToRewardMode) {
  TrainConfig a, b;
  b.rollout.reward_spec.mode = RewardMode::PerTurn;
  EXPECT_NE(train_config_hash(a), train_config_hash(b));
  b = a;
  b.parallelism = 8;
  EXPECT_EQ(train_config_hash(a), train_config_hash(b));
}

TEST(Train, ShortRunImprovesReward) {
  std::vector<Scenario> ss;
  for (int t = 1; t <= 8; ++t) ss.push_back(make_scenario(t, Difficulty::Vanilla, 50, "s" + std::to_string(t)));
  ScriptedEngine engine;
  TrainConfig cfg;
  cfg.steps = 60;
  cfg.eval_episodes = 64;
  cfg.seed = 3;
  auto r = train(ss, engine, cfg);
  EXPECT_EQ(r.curve.size(), 60u);
  EXPECT_GT(r.final_eval.mean_reward, r.initial_eval.mean_reward + 0.1);
}
