// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "flowrl/envgen.hpp"
#include "flowrl/error.hpp"
#include "flowrl/grpo.hpp"
#include "flowrl/track.hpp"
#include "support.hpp"

using namespace flowrl;
using namespace flowrl::testing;

namespace {

double population_std(const std::vector<double>& a) {
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(a.size()));
}

// Three-by-three mazes with a policy small enough to train inside a test.
PolicyConfig small_maze_config() {
  PolicyConfig c = maze_policy_config(9, 3, 32);
  c.time_features = 4;
  return c;
}

std::vector<Task> small_suite(const PolicyConfig& c, int count) {
  std::vector<Task> suite;
  for (int i = 0; i < count; ++i) suite.push_back(make_task(gen_regular_maze(100 + i, 3, 3), c));
  return suite;
}

GrpoConfig small_grpo() {
  GrpoConfig cfg;
  cfg.group_size = 4;
  cfg.s_train = 6;
  cfg.s_infer = 10;
  cfg.iterations = 3;
  cfg.batch_size = 2;
  cfg.learning_rate = 1e-3;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("advantage identities") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Eigen::VectorXd r = random_vector(seed, 2 + static_cast<Eigen::Index>(seed % 9));
    const std::vector<double> rewards(r.data(), r.data() + r.size());
    const std::vector<double> a = advantages(rewards);
    CHECK(std::accumulate(a.begin(), a.end(), 0.0) == 0.0);
    CHECK(population_std(a) == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (int g : {2, 4, 8}) {
    std::vector<double> rewards(static_cast<std::size_t>(g), 0.0);
    rewards[1] = 1.0;
    const std::vector<double> a = advantages(rewards);
    CHECK(a[1] == doctest::Approx(std::sqrt(g - 1.0)).epsilon(1e-14));
    CHECK(a[0] == doctest::Approx(-1.0 / std::sqrt(g - 1.0)).epsilon(1e-14));
  }
  for (double tie : {0.0, 0.37, 1.0}) {
    for (double x : advantages(std::vector<double>(6, tie))) CHECK(x == 0.0);
  }
  // Invariant to positive affine maps of the rewards.
  const std::vector<double> base{0.1, 0.9, 0.4, 0.4};
  std::vector<double> moved;
  for (double x : base) moved.push_back(3.0 * x - 7.0);
  const auto a = advantages(base), b = advantages(moved);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK_THROWS_AS(advantages(std::vector<double>{1.0}), Error);
}

TEST_CASE("clipped surrogate") {
  CHECK(clip_objective(1.0, 2.0, 0.2) == 2.0);
  CHECK(clip_objective(1.5, 2.0, 0.2) == doctest::Approx(2.4));
  CHECK(clip_objective(0.5, 2.0, 0.2) == doctest::Approx(1.0));
  CHECK(clip_objective(1.5, -2.0, 0.2) == doctest::Approx(-3.0));
  CHECK(clip_objective(0.5, -2.0, 0.2) == doctest::Approx(-1.6));
  CHECK_THROWS_AS(clip_objective(0.0, 1.0, 0.2), Error);
}

TEST_CASE("kl_step is non-negative, zero at the reference and matches finite differences") {
  const PolicyConfig c = tiny_config();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Policy p = random_policy(c, seed), ref = random_policy(c, seed + 100);
    const Eigen::VectorXd cond = random_vector(seed + 200, c.cond_dim());
    const SdeRollout r = sde_sample(p, cond, 8, 0.7, seed);
    for (int k : {0, 3, 7}) {
      const SdeStep step = step_record(r, k);
      CHECK(kl_step(p, p, cond, step).value == 0.0);
      const ValueAndGradient vg = kl_step(p, ref, cond, step);
      CHECK(vg.value > 0.0);
      const auto f = [&](const Eigen::VectorXd& theta) {
        return kl_step(Policy{c, theta}, ref, cond, step).value;
      };
      CHECK(relative_error(vg.gradient, central_difference(f, p.params)) <= 1e-5);
    }
  }
}

TEST_CASE("GRPO objective matches finite differences") {
  const PolicyConfig c = tiny_config();
  GrpoConfig cfg;
  cfg.beta_kl = 0.1;
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 8; ++seed) {
    const Policy p = random_policy(c, seed);
    Policy behaviour = p;
    behaviour.params += random_vector(seed + 50, p.params.size(), 0.05);
    const Policy ref = random_policy(c, seed + 100);
    const Eigen::VectorXd cond = random_vector(seed + 200, c.cond_dim());
    const std::vector<GroupRollout> groups{synthetic_group(behaviour, ref, cond, 3, 5, 0.6, seed),
                                           synthetic_group(behaviour, ref, cond, 3, 5, 0.6, seed + 1)};
    if (std::min(clip_margin(p, groups[0], cfg.clip_eps), clip_margin(p, groups[1], cfg.clip_eps)) < 1e-3)
      continue;
    const GrpoObjective obj = grpo_objective(p, groups, cfg);
    const auto f = [&](const Eigen::VectorXd& theta) {
      return grpo_objective(Policy{c, theta}, groups, cfg).value;
    };
    CHECK(relative_error(obj.gradient, central_difference(f, p.params)) <= 1e-5);
    ++checked;
  }
}

TEST_CASE("ratios are exactly one for the collecting policy") {
  const PolicyConfig c = small_maze_config();
  const Policy p = init_policy(c, 3);
  const Task task = make_task(gen_regular_maze(5, 3, 3), c);
  const auto reward = make_reward({});
  GrpoConfig cfg = small_grpo();
  cfg.beta_kl = 0.0;
  const GroupRollout g = sample_group(p, p, task, 0, *reward, cfg, 9);
  for (int i = 0; i < g.size(); ++i) {
    const SdeRollout& r = g.rollouts[static_cast<std::size_t>(i)];
    CHECK((rollout_logprobs(r, rollout_means(p, task.cond, r)) - g.old_logprobs[static_cast<std::size_t>(i)])
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  const GrpoObjective obj = grpo_objective(p, std::span(&g, 1), cfg);
  CHECK(obj.diagnostics.clip_fraction == 0.0);
  CHECK(obj.diagnostics.mean_kl == 0.0);
  // With unit ratios the surrogate is the mean advantage, which is zero.
  CHECK(std::abs(obj.value) <= 1e-12);
}

TEST_CASE("training") {
  const PolicyConfig c = small_maze_config();
  const std::vector<Task> suite = small_suite(c, 4);
  // A short warm start, so that rewards within a group are not all tied.
  FmBatch demos{Eigen::MatrixXd(c.state_dim(), 4), Eigen::MatrixXd(c.cond_dim(), 4)};
  for (int i = 0; i < 4; ++i) {
    demos.data.col(i) = encode_latent(c, make_demo(*suite[i].maze, suite[i].optimal, c.frames));
    demos.conds.col(i) = suite[i].cond;
  }
  const Policy init = sft_train(init_policy(c, 5), demos, SftConfig{.epochs = 200, .batch_size = 4, .learning_rate = 3e-3}).policy;

  SUBCASE("zero iterations return the initial policy") {
    GrpoConfig cfg = small_grpo();
    cfg.iterations = 0;
    const TrainResult r = train(cfg, suite, init);
    CHECK(r.policy.params == init.params);
    CHECK(r.history.empty());
  }

  SUBCASE("deterministic and independent of the worker count") {
    GrpoConfig cfg = small_grpo();
    std::ostringstream log1, log2;
    const TrainResult a = train(cfg, suite, init, {&log1});
    cfg.workers = 3;
    const TrainResult b = train(cfg, suite, init, {&log2});
    CHECK(a.policy.params == b.policy.params);
    CHECK(log1.str() == log2.str());
    CHECK(a.policy.params != init.params);
    CHECK(a.history.size() == 3);
  }

  SUBCASE("periodic checkpoints") {
    GrpoConfig cfg = small_grpo();
    cfg.iterations = 4;
    cfg.checkpoint_every = 2;
    std::vector<int> seen;
    train(cfg, suite, init, {nullptr, nullptr, [&](int it, const Policy&) { seen.push_back(it); }});
    CHECK(seen == std::vector<int>{2, 4});
  }
}

TEST_CASE("configuration validation") {
  const auto rejects = [](auto mutate) {
    GrpoConfig cfg;
    mutate(cfg);
    try {
      cfg.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::ConfigError;
    }
    return false;
  };
  CHECK_NOTHROW(GrpoConfig{}.validate());
  CHECK(rejects([](GrpoConfig& g) { g.group_size = 1; }));
  CHECK(rejects([](GrpoConfig& g) { g.s_train = 60; }));
  CHECK(rejects([](GrpoConfig& g) { g.noise_scale = 0; }));
  CHECK(rejects([](GrpoConfig& g) { g.clip_eps = 1.5; }));
  CHECK(rejects([](GrpoConfig& g) { g.beta_kl = -1; }));
  CHECK(rejects([](GrpoConfig& g) { g.learning_rate = 0; }));
  CHECK(rejects([](GrpoConfig& g) { g.workers = 0; }));
}

TEST_CASE("supervised warm start") {
  const PolicyConfig c = small_maze_config();
  const Maze m = gen_regular_maze(8, 3, 3);
  const CellPath path = solve_optimal(m);
  FmBatch one{encode_latent(c, make_demo(m, path, c.frames)), encode_condition(m, 3)};

  SUBCASE("deterministic given the seed") {
    SftConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 4;
    const Policy init = init_policy(c, 1);
    CHECK(sft_train(init, one, cfg).policy.params == sft_train(init, one, cfg).policy.params);
    cfg.seed = 5;
    CHECK(sft_train(init, one, cfg).losses != sft_train(init, one, SftConfig{.epochs = 20, .seed = 4}).losses);
  }

  SUBCASE("one demonstration is memorized") {
    PolicyConfig big = c;
    big.hidden = 64;
    big.pos_std = 0.1;
    one.data = encode_latent(big, make_demo(m, path, big.frames));
    SftConfig cfg;
    cfg.epochs = 3000;
    cfg.learning_rate = 3e-3;
    const SftResult r = sft_train(init_policy(big, 2), one, cfg);
    const auto head = std::accumulate(r.losses.begin(), r.losses.begin() + 100, 0.0);
    const auto tail = std::accumulate(r.losses.end() - 100, r.losses.end(), 0.0);
    CHECK(tail < 0.5 * head);
    const Task task = make_task(m, big);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const TrajectoryLatent sample = ode_sample(r.policy, task.cond, 50, seed);
      CHECK(extract_trajectory(task.render(sample)) == path);
    }
  }

  SUBCASE("divergence is reported") {
    SftConfig cfg;
    cfg.epochs = 400;
    cfg.learning_rate = 50.0;
    cfg.cosine_decay = false;
    try {
      sft_train(init_policy(c, 1), one, cfg);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TrainingDiverged);
    }
  }

  SUBCASE("rejects empty data") {
    CHECK_THROWS_AS(sft_train(init_policy(c, 1), FmBatch{}, SftConfig{}), Error);
  }
}
