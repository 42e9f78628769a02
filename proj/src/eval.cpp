// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/eval.hpp"

#include <algorithm>
#include <ostream>

#include "flowrl/error.hpp"
#include "flowrl/track.hpp"

namespace flowrl {

int metric_sr(const CellPath& pred, const Maze& maze) {
  for (const Cell& c : pred) {
    if (maze.contains(c) && maze.trap(c)) return 0;
    if (c == maze.goal()) return 1;
  }
  return 0;
}

std::optional<double> metric_sd(const CellPath& pred, const CellPath& gt, bool success) {
  if (!success) return std::nullopt;
  require(gt.size() >= 2, "metric_sd: ground truth needs at least one step");
  const auto goal = std::find(pred.begin(), pred.end(), gt.back());
  require(goal != pred.end(), "metric_sd: successful path never reaches the goal");
  const double steps = static_cast<double>(goal - pred.begin());
  const double optimal = static_cast<double>(gt.size() - 1);
  return 100.0 * (steps - optimal) / optimal;
}

VrSample score_vr(const Task& task, const Video& video, const FidelityOptions& fidelity) {
  require(task.kind == TaskKind::Maze, "score_vr: not a maze task");
  VrSample s;
  CellPath pred;
  try {
    pred = extract_trajectory(video);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyTrajectory) throw;
    s.empty_trajectory = true;
  }
  s.em = reward_em(pred, task.optimal);
  s.sr = metric_sr(pred, *task.maze);
  s.pr = reward_pr(pred, task.optimal);
  s.sd = metric_sd(pred, task.optimal, s.sr == 1);
  s.mf = reward_mf(video, task.canonical_bg, fidelity);
  return s;
}

VrReport aggregate_vr(std::vector<VrSample> samples, int excluded) {
  VrReport r;
  r.samples = static_cast<int>(samples.size());
  r.excluded = excluded;
  // Excluded samples count as failures in every percentage.
  const double total = static_cast<double>(samples.size() + static_cast<std::size_t>(excluded));
  if (total == 0) {
    r.per_sample = std::move(samples);
    return r;
  }
  double sd_sum = 0.0;
  int sd_count = 0;
  for (const VrSample& s : samples) {
    r.em += s.em;
    r.sr += s.sr;
    r.pr += s.pr;
    r.mf += s.mf;
    r.empty_trajectories += s.empty_trajectory ? 1 : 0;
    if (s.sd) {
      sd_sum += *s.sd;
      ++sd_count;
    }
  }
  r.em *= 100.0 / total;
  r.sr *= 100.0 / total;
  r.pr *= 100.0 / total;
  r.mf *= 100.0 / total;
  if (sd_count > 0) r.sd = sd_sum / sd_count;
  r.per_sample = std::move(samples);
  return r;
}

Video generate_video(const Policy& policy, const Task& task, int steps, double noise_scale,
                     std::uint64_t seed) {
  const SdeRollout r = sde_sample(policy, task.cond, steps, noise_scale, seed);
  return task.render(decode_latent(policy.config, r.sample()));
}

VrReport evaluate_vr(const Policy& policy, std::span<const Task> suite, const EvalConfig& cfg) {
  require(!suite.empty(), "evaluate_vr: the suite is empty");
  std::vector<std::optional<VrSample>> slots(suite.size());
  parallel_for(suite.size(), cfg.workers, [&](std::size_t i) {
    try {
      const Video v = generate_video(policy, suite[i], cfg.steps, cfg.noise_scale,
                                     sample_seed(cfg.seed, i, 0));
      slots[i] = score_vr(suite[i], v, cfg.fidelity);
    } catch (const NumericError&) {
      slots[i].reset();
    }
  });
  std::vector<VrSample> samples;
  int excluded = 0;
  for (auto& s : slots) {
    if (s) {
      samples.push_back(*s);
    } else {
      ++excluded;
    }
  }
  return aggregate_vr(std::move(samples), excluded);
}

VrReport evaluate_vr(std::span<const Task> suite, std::span<const Video> videos,
                     const FidelityOptions& fidelity) {
  require(suite.size() == videos.size(), "evaluate_vr: one video per maze is required");
  std::vector<VrSample> samples;
  for (std::size_t i = 0; i < suite.size(); ++i) samples.push_back(score_vr(suite[i], videos[i], fidelity));
  return aggregate_vr(std::move(samples), 0);
}

// ---------------------------------------------------------------------------
// Navigation

NavReport nav_metrics(const Path2<double>& pred, const Path2<double>& gt, const NavOptions& opts) {
  NavReport r;
  r.ade = metric_ade(pred, gt);
  r.fde = metric_fde(pred, gt);
  r.mr = metric_mr(r.fde, opts.miss_threshold);
  r.se = metric_se(r.fde, opts.soft_sigma);
  r.ac = metric_ac(pred, gt, opts.corridor);
  r.wo = weighted_overall(r.ac, r.se, r.mr, r.ade, r.fde, opts.weights);
  r.samples = 1;
  return r;
}

Path2<double> track_nav_path(const Video& video) {
  std::vector<Eigen::Vector2d> pts;
  for (const auto& p : track_positions(video)) {
    if (p) pts.push_back(*p);
  }
  Path2<double> out(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

NavReport evaluate_nav(const Policy& policy, std::span<const Task> suite, const EvalConfig& cfg,
                       const NavOptions& opts) {
  require(!suite.empty(), "evaluate_nav: the suite is empty");
  std::vector<std::optional<NavReport>> slots(suite.size());
  parallel_for(suite.size(), cfg.workers, [&](std::size_t i) {
    const Task& task = suite[i];
    require(task.kind == TaskKind::Nav, "evaluate_nav: not a navigation task");
    try {
      const Video v = generate_video(policy, task, cfg.steps, cfg.noise_scale, sample_seed(cfg.seed, i, 0));
      const Path2<double> pred = track_nav_path(v);
      if (pred.rows() > 0) slots[i] = nav_metrics(pred, task.scene->reference, opts);
    } catch (const NumericError&) {
      slots[i].reset();
    }
  });
  NavReport r;
  for (const auto& s : slots) {
    if (!s) {
      ++r.excluded;
      continue;
    }
    r.ade += s->ade;
    r.fde += s->fde;
    r.mr += s->mr;
    r.se += s->se;
    r.ac += s->ac;
    r.wo += s->wo;
    ++r.samples;
  }
  if (r.samples > 0) {
    const double n = r.samples;
    r.ade /= n;
    r.fde /= n;
    r.mr /= n;
    r.se /= n;
    r.ac /= n;
    r.wo /= n;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Test-time scaling

BestOfK best_of_k(const Policy& policy, const Task& task, std::size_t task_index,
                  std::span<const int> ks, const RewardFunction& reward, const EvalConfig& cfg) {
  require(!ks.empty(), "best_of_k: no K values");
  for (int k : ks) require(k >= 1, "best_of_k: K must be at least 1");
  BestOfK out;
  out.ks.assign(ks.begin(), ks.end());
  const int k_max = *std::max_element(ks.begin(), ks.end());
  std::vector<RewardBreakdown> breakdowns;
  for (int j = 0; j < k_max; ++j) {
    const Video v = generate_video(policy, task, cfg.steps, cfg.noise_scale,
                                   sample_seed(cfg.seed, task_index, static_cast<std::size_t>(j)));
    breakdowns.push_back(reward.evaluate(task.context(v)));
    out.rewards.push_back(breakdowns.back().combined);
  }
  for (int k : ks) {
    const auto first = out.rewards.begin();
    out.curve.push_back(*std::max_element(first, first + k));
  }
  out.best_index = static_cast<int>(std::max_element(out.rewards.begin(), out.rewards.end()) -
                                    out.rewards.begin());
  out.best = breakdowns[static_cast<std::size_t>(out.best_index)];
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

nlohmann::ordered_json sampling_json(const EvalConfig& cfg) {
  nlohmann::ordered_json j;
  j["steps"] = cfg.steps;
  j["noise_scale"] = cfg.noise_scale;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

nlohmann::ordered_json to_json(const VrReport& report, const EvalConfig& cfg) {
  nlohmann::ordered_json j;
  j["task"] = "maze";
  j["sampling"] = sampling_json(cfg);
  j["samples"] = report.samples;
  j["excluded"] = report.excluded;
  j["empty_trajectories"] = report.empty_trajectories;
  j["em"] = report.em;
  j["sr"] = report.sr;
  j["pr"] = report.pr;
  j["sd"] = report.sd ? nlohmann::ordered_json(*report.sd) : nlohmann::ordered_json("--");
  j["mf"] = report.mf;
  nlohmann::ordered_json d;
  d["sr"] = "goal visited with no trap cell before the first goal visit";
  d["sd"] = "100*(steps to first goal visit - optimal steps)/optimal steps, successful samples only";
  d["pr"] = "consecutive correct prefix length / optimal path length";
  d["mf"] = "mean over " + std::to_string(cfg.fidelity.samples) +
            " strided frames of the share of non-agent pixels within " +
            std::to_string(static_cast<int>(cfg.fidelity.tau)) + " of the canonical background";
  d["excluded"] = "numerically failed samples count as failures in every percentage";
  d["tracking"] = "blue-blob centroid per frame, consecutive duplicate cells collapsed";
  j["decisions"] = d;
  return j;
}

nlohmann::ordered_json to_json(const NavReport& report, const EvalConfig& cfg, const NavOptions& opts) {
  nlohmann::ordered_json j;
  j["task"] = "nav";
  j["sampling"] = sampling_json(cfg);
  j["samples"] = report.samples;
  j["excluded"] = report.excluded;
  j["ade"] = report.ade;
  j["fde"] = report.fde;
  j["mr"] = report.mr;
  j["se"] = report.se;
  j["ac"] = report.ac;
  j["wo"] = report.wo;
  nlohmann::ordered_json d;
  d["alignment"] = "shorter path linearly resampled to the longer";
  d["mr"] = "fde > " + nlohmann::ordered_json(opts.miss_threshold).dump() + " m (boundary passes)";
  d["se"] = "exp(-fde^2 / (2 * " + nlohmann::ordered_json(opts.soft_sigma).dump() + "^2))";
  d["ac"] = "share of points within " + nlohmann::ordered_json(opts.corridor.base).dump() + " + " +
            nlohmann::ordered_json(opts.corridor.growth).dump() + " * progress meters of the reference";
  d["wo"] = nlohmann::ordered_json{{"ac", opts.weights.ac},
                                   {"se", opts.weights.se},
                                   {"one_minus_mr", opts.weights.mr},
                                   {"exp_neg_ade_over_scale", opts.weights.ade},
                                   {"exp_neg_fde_over_scale", opts.weights.fde},
                                   {"scale_m", opts.weights.scale}};
  j["decisions"] = d;
  return j;
}

void write_vr_csv(std::ostream& out, const VrReport& report) {
  out << "index,em,sr,pr,sd,mf,empty_trajectory\n";
  for (std::size_t i = 0; i < report.per_sample.size(); ++i) {
    const VrSample& s = report.per_sample[i];
    out << i << ',' << s.em << ',' << s.sr << ',' << s.pr << ',';
    if (s.sd) out << *s.sd;
    out << ',' << s.mf << ',' << (s.empty_trajectory ? 1 : 0) << '\n';
  }
}

}  // namespace flowrl
