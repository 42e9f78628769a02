// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/grpo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "flowrl/error.hpp"
#include "flowrl/random.hpp"

namespace flowrl {

// ---------------------------------------------------------------------------
// Tasks

SampleContext Task::context(const Video& video) const {
  SampleContext ctx{video};
  if (kind == TaskKind::Maze) {
    ctx.maze = &*maze;
    ctx.optimal = &optimal;
    ctx.canonical_bg = &canonical_bg;
  } else {
    ctx.reference = &reference;
  }
  return ctx;
}

Video Task::render(const TrajectoryLatent& latent) const {
  return kind == TaskKind::Maze ? render_video(*maze, latent) : render_video(*scene, latent);
}

Task make_task(const Maze& maze, const PolicyConfig& config) {
  require(config.task == TaskKind::Maze, "make_task: policy config is not a maze config");
  require(maze.width() <= config.grid && maze.height() <= config.grid,
          "make_task: maze exceeds the condition grid");
  Task task;
  task.kind = TaskKind::Maze;
  task.maze = maze;
  task.optimal = solve_optimal(maze);
  task.canonical_bg = render_background(maze);
  task.cond = encode_condition(maze, config.grid);
  return task;
}

Task make_task(const NavScene& scene, const PolicyConfig& config) {
  require(config.task == TaskKind::Nav, "make_task: policy config is not a navigation config");
  Task task;
  task.kind = TaskKind::Nav;
  task.scene = scene;
  task.reference = render_reference(scene);
  task.cond = encode_condition(scene);
  return task;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(run);
  pool.clear();
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Configuration

void GrpoConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::ConfigError, what);
  };
  check(group_size >= 2, "grpo.group_size must be at least 2");
  check(s_train >= 2, "grpo.s_train must be at least 2");
  check(s_train <= s_infer, "grpo.s_train must not exceed grpo.s_infer");
  check(noise_scale > 0, "grpo.noise_scale must be positive for training");
  check(clip_eps > 0 && clip_eps < 1, "grpo.clip_eps must lie in (0, 1)");
  check(beta_kl >= 0, "grpo.beta_kl must be non-negative");
  check(learning_rate > 0, "grpo.learning_rate must be positive");
  check(iterations >= 0, "grpo.iterations must be non-negative");
  check(batch_size >= 1, "grpo.batch_size must be positive");
  check(eps_adv > 0, "grpo.eps_adv must be positive");
  check(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
        "grpo adam moment constants must lie in [0, 1)");
  check(adam_eps > 0, "grpo.adam_eps must be positive");
  check(checkpoint_every >= 0, "grpo.checkpoint_every must be non-negative");
  check(workers >= 1, "workers must be positive");
}

// ---------------------------------------------------------------------------
// Group statistics

std::vector<double> advantages(std::span<const double> rewards, double eps_guard) {
  require(rewards.size() >= 2, "advantages: a group needs at least two rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_pop = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (!(std_pop >= eps_guard)) return out;
  double partial = 0.0;
  for (std::size_t i = 0; i + 1 < rewards.size(); ++i) {
    out[i] = (rewards[i] - mean) / std_pop;
    partial += out[i];
  }
  out.back() = -partial;
  return out;
}

double clip_objective(double ratio, double advantage, double eps) {
  require(ratio > 0, "clip_objective: ratio must be positive");
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

ValueAndGradient kl_step(const Policy& policy, const Policy& reference, const Eigen::VectorXd& cond,
                         const SdeStep& step) {
  const double var = step.sigma * step.sigma * step.dt;
  if (!(var > 0)) fail(ErrorKind::InvalidArgument, "kl_step: transition std is zero");
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(1, step.t);
  MlpTape<double> tape;
  const Eigen::MatrixXd v = velocity<double>(policy, step.state, t, cond, &tape);
  const Eigen::VectorXd mean = sde_mean(step.state, v.col(0), step.t, step.sigma, step.dt);
  const Eigen::VectorXd diff = mean - recompute_mean(reference, cond, step);
  const double gain = mean_velocity_gain(step.t, step.sigma, step.dt);
  const Eigen::MatrixXd upstream = (gain / var) * diff;
  return {diff.squaredNorm() / (2.0 * var), velocity_backward<double>(policy, tape, upstream)};
}

// ---------------------------------------------------------------------------
// Rollouts

namespace {

struct RolloutForward {
  Eigen::MatrixXd means;  // D x S
  MlpTape<double> tape;
};

RolloutForward forward_rollout(const Policy& policy, const Eigen::VectorXd& cond,
                               const SdeRollout& rollout, bool keep_tape) {
  const int steps = rollout.steps();
  const Eigen::MatrixXd states = rollout.states.leftCols(steps);
  const Eigen::VectorXd times = rollout.grid.head(steps);
  RolloutForward f;
  const Eigen::MatrixXd v =
      velocity<double>(policy, states, times, cond, keep_tape ? &f.tape : nullptr);
  f.means.resize(states.rows(), steps);
  for (int k = 0; k < steps; ++k) {
    f.means.col(k) = sde_mean(states.col(k), v.col(k), rollout.grid(k), rollout.sigmas(k),
                              rollout.dts(k));
  }
  return f;
}

double transition_var(const SdeRollout& rollout, int k) {
  const double var = rollout.sigmas(k) * rollout.sigmas(k) * rollout.dts(k);
  if (!(var > 0)) fail(ErrorKind::InvalidArgument, "transition std is zero; use a positive noise scale");
  return var;
}

double gaussian_logpdf(const Eigen::Ref<const Eigen::VectorXd>& diff, double var) {
  const double dim = static_cast<double>(diff.size());
  return -diff.squaredNorm() / (2.0 * var) - 0.5 * dim * std::log(2.0 * std::numbers::pi * var);
}

}  // namespace

Eigen::MatrixXd rollout_means(const Policy& policy, const Eigen::VectorXd& cond,
                              const SdeRollout& rollout) {
  return forward_rollout(policy, cond, rollout, false).means;
}

Eigen::VectorXd rollout_logprobs(const SdeRollout& rollout, const Eigen::MatrixXd& means) {
  Eigen::VectorXd lp(rollout.steps());
  for (int k = 0; k < rollout.steps(); ++k) {
    lp(k) = gaussian_logpdf(rollout.states.col(k + 1) - means.col(k), transition_var(rollout, k));
  }
  return lp;
}

GroupRollout sample_group(const Policy& policy, const Policy& reference, const Task& task,
                          std::size_t task_index, const RewardFunction& reward,
                          const GrpoConfig& cfg, std::uint64_t seed) {
  require(cfg.group_size >= 2, "sample_group: group size must be at least 2");
  GroupRollout g;
  g.task_index = task_index;
  g.cond = task.cond;
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.group_size));
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(seed, i);

  const PolicyField<double> field(policy, task.cond);
  g.rollouts = sde_sample_batch<double>(field, field.dim(), cfg.s_train, cfg.noise_scale, seeds);
  for (const SdeRollout& r : g.rollouts) {
    const TrajectoryLatent latent = decode_latent(policy.config, r.sample());
    g.videos.push_back(task.render(latent));
    g.breakdowns.push_back(reward.evaluate(task.context(g.videos.back())));
    g.rewards.push_back(g.breakdowns.back().combined);
    g.old_logprobs.push_back(rollout_logprobs(r, rollout_means(policy, task.cond, r)));
    g.ref_means.push_back(rollout_means(reference, task.cond, r));
  }
  g.advantages = advantages(g.rewards, cfg.eps_adv);
  return g;
}

// ---------------------------------------------------------------------------
// Objective and update

GrpoObjective grpo_objective(const Policy& policy, std::span<const GroupRollout> groups,
                             const GrpoConfig& cfg) {
  require(!groups.empty(), "grpo_objective: no groups");
  GrpoObjective out;
  out.gradient = Eigen::VectorXd::Zero(policy.config.param_count());
  GrpoDiagnostics& diag = out.diagnostics;
  diag.max_reward = -std::numeric_limits<double>::infinity();
  long transitions = 0, clipped = 0, samples = 0;
  const double per_prompt = 1.0 / static_cast<double>(groups.size());

  for (const GroupRollout& g : groups) {
    require(g.size() >= 1 && g.advantages.size() == g.rollouts.size(),
            "grpo_objective: malformed group");
    const double per_member = per_prompt / static_cast<double>(g.size());
    for (int i = 0; i < g.size(); ++i) {
      const SdeRollout& r = g.rollouts[static_cast<std::size_t>(i)];
      const double adv = g.advantages[static_cast<std::size_t>(i)];
      const Eigen::VectorXd& old_lp = g.old_logprobs[static_cast<std::size_t>(i)];
      const Eigen::MatrixXd& ref = g.ref_means[static_cast<std::size_t>(i)];
      const double w = per_member / static_cast<double>(r.steps());

      RolloutForward f = forward_rollout(policy, g.cond, r, true);
      Eigen::MatrixXd upstream(f.means.rows(), r.steps());
      for (int k = 0; k < r.steps(); ++k) {
        const double var = transition_var(r, k);
        const double gain = mean_velocity_gain(r.grid(k), r.sigmas(k), r.dts(k));
        const Eigen::VectorXd diff = r.states.col(k + 1) - f.means.col(k);
        const Eigen::VectorXd drift = f.means.col(k) - ref.col(k);
        const double ratio = std::exp(gaussian_logpdf(diff, var) - old_lp(k));
        const double surrogate = clip_objective(ratio, adv, cfg.clip_eps);
        const bool unclipped = ratio * adv <= surrogate;
        const double kl = drift.squaredNorm() / (2.0 * var);
        out.value += w * (surrogate - cfg.beta_kl * kl);
        diag.mean_kl += kl;
        upstream.col(k) = (-w * cfg.beta_kl * gain / var) * drift;
        if (unclipped) {
          upstream.col(k) += (w * adv * ratio * gain / var) * diff;
        } else {
          ++clipped;
        }
        ++transitions;
      }
      out.gradient += velocity_backward<double>(policy, f.tape, upstream);
      diag.mean_reward += g.rewards[static_cast<std::size_t>(i)];
      diag.max_reward = std::max(diag.max_reward, g.rewards[static_cast<std::size_t>(i)]);
      diag.mean_abs_advantage += std::abs(adv);
      ++samples;
    }
  }
  diag.objective = out.value;
  diag.mean_reward /= static_cast<double>(samples);
  diag.mean_abs_advantage /= static_cast<double>(samples);
  diag.mean_kl /= static_cast<double>(transitions);
  diag.clip_fraction = static_cast<double>(clipped) / static_cast<double>(transitions);
  return out;
}

void AdamState::ascend(Eigen::VectorXd& params, const Eigen::VectorXd& direction, double lr,
                       double beta1, double beta2, double eps) {
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
    steps = 0;
  }
  ++steps;
  m = beta1 * m + (1.0 - beta1) * direction;
  v = beta2 * v + (1.0 - beta2) * direction.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  params.array() += lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

GrpoDiagnostics grpo_update(Policy& policy, std::span<const GroupRollout> groups,
                            const GrpoConfig& cfg, AdamState& adam) {
  const GrpoObjective obj = grpo_objective(policy, groups, cfg);
  if (!obj.gradient.allFinite() || !std::isfinite(obj.value)) {
    const auto d = obj.diagnostics;
    Eigen::Index bad = 0;
    for (Eigen::Index i = 0; i < obj.gradient.size(); ++i) {
      if (!std::isfinite(obj.gradient(i))) {
        bad = i;
        break;
      }
    }
    throw NumericError("grpo_update: non-finite gradient (objective " + std::to_string(d.objective) +
                           ", mean reward " + std::to_string(d.mean_reward) + ", mean kl " +
                           std::to_string(d.mean_kl) + ", first bad parameter " +
                           std::to_string(bad) + ")",
                       bad);
  }
  adam.ascend(policy.params, obj.gradient, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
              cfg.adam_eps);
  return obj.diagnostics;
}

// ---------------------------------------------------------------------------
// Supervised warm start

SftResult sft_train(const Policy& init, const FmBatch& demos, const SftConfig& cfg, std::ostream* log) {
  const Eigen::Index n = demos.data.cols();
  require(n > 0, "sft_train: no demonstrations");
  require(cfg.epochs >= 0 && cfg.batch_size >= 1 && cfg.learning_rate > 0,
          "sft_train: epochs, batch size and learning rate must be positive");
  SftResult result{init, {}};
  AdamState adam;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double initial = 0.0;
  int above = 0;
  std::uint64_t step = 0;
  const double total_steps = static_cast<double>(cfg.epochs) * static_cast<double>((n + cfg.batch_size - 1) / cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(cfg.batch_size, n - start);
      FmBatch batch{Eigen::MatrixXd(demos.data.rows(), count), Eigen::MatrixXd(demos.conds.rows(), count)};
      for (Eigen::Index j = 0; j < count; ++j) {
        batch.data.col(j) = demos.data.col(order[static_cast<std::size_t>(start + j)]);
        batch.conds.col(j) = demos.conds.col(order[static_cast<std::size_t>(start + j)]);
      }
      const ValueAndGradient vg =
          fm_loss(result.policy, batch, derive_seed(cfg.seed, (std::uint64_t{1} << 32) + step));
      ++step;
      result.losses.push_back(vg.value);
      if (result.losses.size() == 1) initial = vg.value;
      above = vg.value > 10.0 * initial ? above + 1 : 0;
      if (above >= 100) {
        fail(ErrorKind::TrainingDiverged,
             "sft_train: loss above ten times its initial value for 100 consecutive steps");
      }
      const double lr = cfg.cosine_decay
                            ? 0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step - 1) / total_steps))
                            : cfg.learning_rate;
      adam.ascend(result.policy.params, -vg.gradient, lr, 0.9, 0.999, 1e-8);
      epoch_loss += vg.value;
      ++batches;
    }
    if (log) {
      nlohmann::ordered_json rec;
      rec["epoch"] = epoch;
      rec["steps"] = step;
      rec["loss"] = epoch_loss / batches;
      *log << rec.dump() << '\n';
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

nlohmann::ordered_json iteration_record(int it, std::uint64_t seed, const GrpoDiagnostics& d,
                                        std::span<const GroupRollout> groups) {
  nlohmann::ordered_json rec;
  rec["iteration"] = it;
  rec["seed"] = seed;
  rec["mean_reward"] = d.mean_reward;
  rec["max_reward"] = d.max_reward;
  std::vector<std::pair<std::string, double>> sums;
  int empty = 0;
  long count = 0;
  for (const GroupRollout& g : groups) {
    for (const RewardBreakdown& b : g.breakdowns) {
      if (sums.empty()) {
        for (const auto& [name, value] : b.components) sums.emplace_back(name, 0.0);
      }
      for (std::size_t c = 0; c < sums.size(); ++c) sums[c].second += b.components[c].second;
      empty += b.empty_trajectory ? 1 : 0;
      ++count;
    }
  }
  nlohmann::ordered_json comps = nlohmann::ordered_json::object();
  for (const auto& [name, sum] : sums) comps[name] = sum / static_cast<double>(count);
  rec["components"] = comps;
  rec["empty_trajectories"] = empty;
  rec["mean_abs_advantage"] = d.mean_abs_advantage;
  rec["clip_fraction"] = d.clip_fraction;
  rec["mean_kl"] = d.mean_kl;
  rec["objective"] = d.objective;
  return rec;
}

}  // namespace

TrainResult train(const GrpoConfig& cfg, std::span<const Task> suite, const Policy& init,
                  const TrainOptions& options) {
  cfg.validate();
  require(!suite.empty(), "train: the task suite is empty");
  TrainResult result{init, {}, 0.0};
  const Policy& reference = init;
  const auto reward = make_reward(cfg.reward);
  AdamState adam;
  std::vector<std::size_t> order(suite.size());

  for (int it = 0; it < cfg.iterations; ++it) {
    const std::uint64_t iter_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(it));
    try {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(iter_seed);
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t prompts = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), suite.size());

      const auto start = std::chrono::steady_clock::now();
      std::vector<GroupRollout> groups(prompts);
      parallel_for(prompts, cfg.workers, [&](std::size_t b) {
        groups[b] = sample_group(result.policy, reference, suite[order[b]], order[b], *reward, cfg,
                                 derive_seed(iter_seed, b + 1));
      });
      const double collect = seconds_since(start);
      result.collect_seconds += collect;

      const auto update_start = std::chrono::steady_clock::now();
      const GrpoDiagnostics d = grpo_update(result.policy, groups, cfg, adam);
      result.history.push_back(d);
      if (options.log) *options.log << iteration_record(it, iter_seed, d, groups).dump() << '\n';
      if (options.timing) {
        nlohmann::ordered_json t;
        t["iteration"] = it;
        t["collect_seconds"] = collect;
        t["update_seconds"] = seconds_since(update_start);
        *options.timing << t.dump() << '\n';
      }
      if (options.checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
        options.checkpoint(it + 1, result.policy);
      }
    } catch (const std::exception& e) {
      if (options.log) {
        nlohmann::ordered_json rec;
        rec["iteration"] = it;
        rec["error"] = e.what();
        *options.log << rec.dump() << '\n';
      }
      if (options.checkpoint) options.checkpoint(it, result.policy);
      throw;
    }
  }
  return result;
}

}  // namespace flowrl
