// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

// Shared oracles and fixtures for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "flowrl/flowgen.hpp"
#include "flowrl/grpo.hpp"
#include "flowrl/random.hpp"

namespace flowrl::testing {

// A policy small enough for finite differences: D = 12, H = 5.
inline PolicyConfig tiny_config(int frames = 2, int hidden = 5) {
  PolicyConfig c = maze_policy_config(frames, 2, hidden);
  c.time_features = 4;
  return c;
}

// Every parameter drawn from N(0, scale^2), so no layer starts at zero.
inline Policy random_policy(const PolicyConfig& c, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  return {c, scale * standard_normal(rng, c.param_count())};
}

inline Eigen::VectorXd random_vector(std::uint64_t seed, Eigen::Index n, double scale = 1.0) {
  Rng rng(seed);
  return scale * standard_normal(rng, n);
}

// Central differences of f at x.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          Eigen::VectorXd x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = f(x);
    x(i) = keep - h;
    const double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// 1-D Gaussian mixture data law with its exact rectified-flow velocity.
struct Mixture {
  std::vector<double> weight, mean, sd;

  double cdf(double x) const {
    double c = 0.0;
    for (std::size_t k = 0; k < weight.size(); ++k)
      c += weight[k] * 0.5 * std::erfc(-(x - mean[k]) / (sd[k] * std::numbers::sqrt2));
    return c;
  }

  // E[x1 - x0 | x_t = x] for x_t = (1 - t) x0 + t x1, x1 ~ N(0, 1).
  double velocity(double x, double t) const {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      const double m = (1 - t) * mean[k];
      const double var = (1 - t) * (1 - t) * sd[k] * sd[k] + t * t;
      const double dens = weight[k] * std::exp(-(x - m) * (x - m) / (2 * var)) / std::sqrt(var);
      const double cov = t - (1 - t) * sd[k] * sd[k];
      num += dens * (-mean[k] + cov / var * (x - m));
      den += dens;
    }
    return num / den;
  }

  // Callable as a batched field: field(states, t).
  auto field() const {
    return [this](const Eigen::Ref<const Eigen::MatrixXd>& x, double t) {
      Eigen::MatrixXd v(x.rows(), x.cols());
      for (Eigen::Index j = 0; j < x.cols(); ++j) v(0, j) = velocity(x(0, j), t);
      return v;
    };
  }
};

inline Mixture two_bumps() { return {{0.3, 0.7}, {-1.5, 1.0}, {0.4, 0.6}}; }

// One-sample Kolmogorov-Smirnov test; returns the asymptotic p-value.
inline double ks_pvalue(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2 * (k % 2 ? 1 : -1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

// Precision rate written straight from its definition: the mean over
// prefixes of gt of the indicator that pred agrees on the whole prefix.
inline double pr_oracle(const CellPath& pred, const CellPath& gt) {
  const std::size_t n = gt.size();
  double sum = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    double prod = 1.0;
    for (std::size_t k = 1; k <= j && prod != 0.0; ++k) prod *= (k <= pred.size() && pred[k - 1] == gt[k - 1]) ? 1.0 : 0.0;
    sum += prod;
  }
  return sum / static_cast<double>(n);
}

inline int em_oracle(const CellPath& pred, const CellPath& gt) {
  if (pred.size() != gt.size()) return 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (!(pred[i] == gt[i])) return 0;
  return 1;
}

// G rollouts collected by `behaviour` with random rewards. Ratios for any
// other policy differ from 1.
inline GroupRollout synthetic_group(const Policy& behaviour, const Policy& reference,
                                    const Eigen::VectorXd& cond, int members, int steps,
                                    double noise, std::uint64_t seed) {
  GroupRollout g;
  g.cond = cond;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < members; ++i) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  const PolicyField<double> field(behaviour, cond);
  g.rollouts = sde_sample_batch<double>(field, field.dim(), steps, noise, seeds);
  Rng rng(derive_seed(seed, 999));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const SdeRollout& r : g.rollouts) {
    g.rewards.push_back(unit(rng));
    g.old_logprobs.push_back(rollout_logprobs(r, rollout_means(behaviour, cond, r)));
    g.ref_means.push_back(rollout_means(reference, cond, r));
  }
  g.advantages = advantages(g.rewards);
  return g;
}

// Smallest distance of any importance ratio from the clip edges 1 +- eps.
// Finite differences are only meaningful away from those kinks.
inline double clip_margin(const Policy& policy, const GroupRollout& g, double eps) {
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < g.size(); ++i) {
    const SdeRollout& r = g.rollouts[static_cast<std::size_t>(i)];
    const Eigen::VectorXd lp = rollout_logprobs(r, rollout_means(policy, g.cond, r));
    const Eigen::ArrayXd ratio = (lp - g.old_logprobs[static_cast<std::size_t>(i)]).array().exp();
    margin = std::min({margin, (ratio - (1 - eps)).abs().minCoeff(), (ratio - (1 + eps)).abs().minCoeff()});
  }
  return margin;
}

}  // namespace flowrl::testing
