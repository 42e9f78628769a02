// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "flowrl/envgen.hpp"
#include "flowrl/flowgen.hpp"
#include "flowrl/grpo.hpp"
#include "flowrl/rewards.hpp"

namespace flowrl {

// ---------------------------------------------------------------------------
// Maze metrics

// 1 iff the goal appears in pred with no trap cell before its first visit.
int metric_sr(const CellPath& pred, const Maze& maze);

// Percentage length redundancy of pred (cut at its first goal visit) over gt.
// Empty when the sample did not succeed.
std::optional<double> metric_sd(const CellPath& pred, const CellPath& gt, bool success);

struct VrSample {
  int em = 0;
  int sr = 0;
  double pr = 0.0;
  std::optional<double> sd;
  double mf = 0.0;
  bool empty_trajectory = false;
};

struct VrReport {
  double em = 0.0;  // percentages
  double sr = 0.0;
  double pr = 0.0;
  std::optional<double> sd;  // mean over successful samples
  double mf = 0.0;
  int samples = 0;
  int excluded = 0;  // samples whose generation failed numerically
  int empty_trajectories = 0;
  std::vector<VrSample> per_sample;
};

VrSample score_vr(const Task& task, const Video& video, const FidelityOptions& fidelity = {});
VrReport aggregate_vr(std::vector<VrSample> samples, int excluded);

struct EvalConfig {
  int steps = 50;            // S_infer
  double noise_scale = 0.5;  // a; 0 gives ODE sampling
  std::uint64_t seed = 0;
  int workers = 1;
  FidelityOptions fidelity;
};

// Seed of the j-th sample drawn for suite entry `task_index`.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t task_index, std::size_t j) {
  return derive_seed(derive_seed(seed, task_index), j);
}

// One sample of the policy for a task, decoded and rendered.
Video generate_video(const Policy& policy, const Task& task, int steps, double noise_scale,
                     std::uint64_t seed);

// One sample per maze at cfg.steps.
VrReport evaluate_vr(const Policy& policy, std::span<const Task> suite, const EvalConfig& cfg);
// Scores given videos, one per maze, bypassing the policy.
VrReport evaluate_vr(std::span<const Task> suite, std::span<const Video> videos,
                     const FidelityOptions& fidelity = {});

// ---------------------------------------------------------------------------
// Navigation metrics

template <typename Scalar>
using Path2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

// Linear interpolation of a polyline at `count` uniform fractional indices.
template <typename Scalar>
Path2<Scalar> resample_path(const Path2<Scalar>& path, Eigen::Index count) {
  require(path.rows() >= 1 && count >= 1, "resample_path: empty input");
  if (path.rows() == count) return path;
  Path2<Scalar> out(count, 2);
  const Eigen::Index last = path.rows() - 1;
  for (Eigen::Index j = 0; j < count; ++j) {
    if (count == 1 || last == 0) {
      out.row(j) = path.row(count == 1 ? last : 0);
      continue;
    }
    const Eigen::Index num = j * last;
    const Eigen::Index i = num / (count - 1);
    const Scalar frac = Scalar(num % (count - 1)) / Scalar(count - 1);
    out.row(j) = frac == Scalar(0) ? path.row(i).eval()
                                   : ((1 - frac) * path.row(i) + frac * path.row(i + 1)).eval();
  }
  return out;
}

namespace detail {

template <typename Scalar>
std::pair<Path2<Scalar>, Path2<Scalar>> aligned(const Path2<Scalar>& pred, const Path2<Scalar>& gt) {
  if (pred.rows() == 0 || gt.rows() == 0) fail(ErrorKind::InvalidArgument, "navigation metric on an empty path");
  const Eigen::Index n = std::max(pred.rows(), gt.rows());
  return {resample_path(pred, n), resample_path(gt, n)};
}

}  // namespace detail

template <typename Scalar>
Scalar metric_ade(const Path2<Scalar>& pred, const Path2<Scalar>& gt) {
  const auto [p, g] = detail::aligned(pred, gt);
  return (p - g).rowwise().norm().mean();
}

template <typename Scalar>
Scalar metric_fde(const Path2<Scalar>& pred, const Path2<Scalar>& gt) {
  if (pred.rows() == 0 || gt.rows() == 0) fail(ErrorKind::InvalidArgument, "navigation metric on an empty path");
  return (pred.row(pred.rows() - 1) - gt.row(gt.rows() - 1)).norm();
}

// A final error exactly at tau counts as a pass.
template <typename Scalar>
int metric_mr(Scalar fde, Scalar tau = Scalar(2.0)) {
  return fde > tau ? 1 : 0;
}

template <typename Scalar>
Scalar metric_se(Scalar fde, Scalar sigma = Scalar(0.6)) {
  return std::exp(-fde * fde / (2 * sigma * sigma));
}

struct Corridor {
  double base = 0.5;    // meters at progress 0
  double growth = 1.5;  // extra meters at progress 1
};

// Share of aligned points within base + growth * s of the reference point at
// the same progress fraction s.
template <typename Scalar>
Scalar metric_ac(const Path2<Scalar>& pred, const Path2<Scalar>& gt, const Corridor& c = {}) {
  const auto [p, g] = detail::aligned(pred, gt);
  const Eigen::Index n = p.rows();
  Eigen::Index inside = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar s = n == 1 ? Scalar(1) : Scalar(j) / Scalar(n - 1);
    if ((p.row(j) - g.row(j)).norm() <= Scalar(c.base) + Scalar(c.growth) * s) ++inside;
  }
  return Scalar(inside) / Scalar(n);
}

struct NavWeights {
  double ac = 0.35;
  double se = 0.30;
  double mr = 0.15;   // applied to 1 - MR
  double ade = 0.10;  // applied to exp(-ADE / scale)
  double fde = 0.10;  // applied to exp(-FDE / scale)
  double scale = 2.0;  // meters
};

// Normalized by the weight total, so a perfect prediction scores exactly 1
// despite rounding in the decimal weights.
template <typename Scalar>
Scalar weighted_overall(Scalar ac, Scalar se, Scalar mr, Scalar ade, Scalar fde, const NavWeights& w = {}) {
  const Scalar value = Scalar(w.ac) * ac + Scalar(w.se) * se + Scalar(w.mr) * (1 - mr) +
                       Scalar(w.ade) * std::exp(-ade / Scalar(w.scale)) +
                       Scalar(w.fde) * std::exp(-fde / Scalar(w.scale));
  const Scalar total = Scalar(w.ac) + Scalar(w.se) + Scalar(w.mr) + Scalar(w.ade) + Scalar(w.fde);
  return std::clamp(value / total, Scalar(0), Scalar(1));
}

struct NavOptions {
  double miss_threshold = 2.0;  // meters
  double soft_sigma = 0.6;      // meters
  Corridor corridor;
  NavWeights weights;
};

struct NavReport {
  double ade = 0.0;
  double fde = 0.0;
  double mr = 0.0;
  double se = 0.0;
  double ac = 0.0;
  double wo = 0.0;
  int samples = 0;
  int excluded = 0;
};

NavReport nav_metrics(const Path2<double>& pred, const Path2<double>& gt, const NavOptions& opts = {});

// Agent positions tracked from a navigation video, in meters; frames without
// a detection are dropped.
Path2<double> track_nav_path(const Video& video);

NavReport evaluate_nav(const Policy& policy, std::span<const Task> suite, const EvalConfig& cfg,
                       const NavOptions& opts = {});

// ---------------------------------------------------------------------------
// Test-time scaling

struct BestOfK {
  std::vector<int> ks;
  std::vector<double> curve;    // best reward among the first K samples
  std::vector<double> rewards;  // every sample, in draw order
  int best_index = 0;
  RewardBreakdown best;
};

// Draws max(ks) samples with sample_seed(cfg.seed, task_index, j); the first
// sample is the one evaluate_vr draws for the same task.
BestOfK best_of_k(const Policy& policy, const Task& task, std::size_t task_index,
                  std::span<const int> ks, const RewardFunction& reward, const EvalConfig& cfg);

// ---------------------------------------------------------------------------
// Reports

nlohmann::ordered_json to_json(const VrReport& report, const EvalConfig& cfg);
nlohmann::ordered_json to_json(const NavReport& report, const EvalConfig& cfg, const NavOptions& opts);
void write_vr_csv(std::ostream& out, const VrReport& report);

}  // namespace flowrl
