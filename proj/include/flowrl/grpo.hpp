// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowrl/envgen.hpp"
#include "flowrl/flowgen.hpp"
#include "flowrl/render.hpp"
#include "flowrl/rewards.hpp"

namespace flowrl {

// ---------------------------------------------------------------------------
// Tasks

// One environment together with everything a reward needs to score samples
// generated for it.
struct Task {
  TaskKind kind = TaskKind::Maze;
  std::optional<Maze> maze;
  CellPath optimal;
  Frame canonical_bg;
  std::optional<NavScene> scene;
  Video reference;
  Eigen::VectorXd cond;

  SampleContext context(const Video& video) const;
  Video render(const TrajectoryLatent& latent) const;
};

Task make_task(const Maze& maze, const PolicyConfig& config);
Task make_task(const NavScene& scene, const PolicyConfig& config);

// Runs body(i) for i in [0, n) on up to `workers` threads. Each index writes
// only its own slot, so results do not depend on the worker count. The first
// exception thrown by any body is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

// ---------------------------------------------------------------------------
// Configuration

struct GrpoConfig {
  int group_size = 8;       // G
  int s_train = 30;
  int s_infer = 50;
  double noise_scale = 0.5;  // a
  double clip_eps = 0.2;
  double beta_kl = 0.04;
  double learning_rate = 1e-4;
  int iterations = 0;
  int batch_size = 4;        // prompts per iteration
  std::uint64_t seed = 0;
  RewardSpec reward;
  double eps_adv = 1e-8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  int workers = 1;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Group statistics

// (r - mean) / max(std, eps) with the population std; all zeros when the
// std falls below eps. The last entry absorbs rounding so that the values sum
// to exactly zero in index order.
std::vector<double> advantages(std::span<const double> rewards, double eps_guard = 1e-8);

double clip_objective(double ratio, double advantage, double eps);

// ||m_theta - m_ref||^2 / (2 sigma^2 dt) for one transition, with its
// gradient in the policy parameters.
ValueAndGradient kl_step(const Policy& policy, const Policy& reference, const Eigen::VectorXd& cond,
                         const SdeStep& step);

// ---------------------------------------------------------------------------
// Rollouts

struct GroupRollout {
  std::size_t task_index = 0;
  Eigen::VectorXd cond;
  std::vector<SdeRollout> rollouts;
  std::vector<Video> videos;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<Eigen::VectorXd> old_logprobs;  // per member, one entry per step
  std::vector<Eigen::MatrixXd> ref_means;     // per member, D x S

  int size() const { return static_cast<int>(rollouts.size()); }
};

// Transition means of every step of a rollout under `policy`, as a D x S
// matrix. All steps go through the network as one batch.
Eigen::MatrixXd rollout_means(const Policy& policy, const Eigen::VectorXd& cond,
                              const SdeRollout& rollout);

// Per-step Gaussian transition log-densities of a rollout given its means.
Eigen::VectorXd rollout_logprobs(const SdeRollout& rollout, const Eigen::MatrixXd& means);

// G SDE samples at s_train steps, rendered, tracked and scored; member seeds
// are derived from `seed`. `reference` supplies the cached KL anchor means.
GroupRollout sample_group(const Policy& policy, const Policy& reference, const Task& task,
                          std::size_t task_index, const RewardFunction& reward,
                          const GrpoConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Objective and update

struct GrpoDiagnostics {
  double objective = 0.0;
  double mean_reward = 0.0;
  double max_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
};

struct GrpoObjective {
  double value = 0.0;
  Eigen::VectorXd gradient;
  GrpoDiagnostics diagnostics;
};

// Mean over prompts, then members, then steps of clip(ratio, A) - beta KL.
GrpoObjective grpo_objective(const Policy& policy, std::span<const GroupRollout> groups,
                             const GrpoConfig& cfg);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long steps = 0;

  // Moves params along +direction (ascent).
  void ascend(Eigen::VectorXd& params, const Eigen::VectorXd& direction, double lr, double beta1,
              double beta2, double eps);
};

// One Adam ascent step on the objective. Throws NumericError when the
// gradient is not finite.
GrpoDiagnostics grpo_update(Policy& policy, std::span<const GroupRollout> groups,
                            const GrpoConfig& cfg, AdamState& adam);

// ---------------------------------------------------------------------------
// Supervised warm start

struct SftConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  bool cosine_decay = true;  // anneal the step size to zero over the run
  std::uint64_t seed = 0;
};

struct SftResult {
  Policy policy;
  std::vector<double> losses;  // one per optimizer step
};

// Adam on the flow-matching loss over demonstration latents. Throws
// TrainingDiverged when the loss stays above ten times its initial value for
// 100 consecutive steps.
SftResult sft_train(const Policy& init, const FmBatch& demos, const SftConfig& cfg,
                    std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Training loop

struct TrainOptions {
  std::ostream* log = nullptr;     // JSONL, one record per iteration
  std::ostream* timing = nullptr;  // JSONL wall-clock times, kept apart from the log
  std::function<void(int iteration, const Policy&)> checkpoint;
};

struct TrainResult {
  Policy policy;
  std::vector<GrpoDiagnostics> history;
  double collect_seconds = 0.0;  // wall time spent sampling and scoring groups
};

// The reference policy is `init`, frozen for the whole run.
TrainResult train(const GrpoConfig& cfg, std::span<const Task> suite, const Policy& init,
                  const TrainOptions& options = {});

}  // namespace flowrl
