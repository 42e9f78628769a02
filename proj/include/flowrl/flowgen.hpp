// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowrl/envgen.hpp"
#include "flowrl/error.hpp"
#include "flowrl/latent.hpp"
#include "flowrl/random.hpp"

namespace flowrl {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kTimeMin = 1e-3;  // grid and training times live in [kTimeMin, 1 - kTimeMin]

enum class TaskKind { Maze, Nav };

// Shape of the velocity network and of the latent <-> state codec.
struct PolicyConfig {
  TaskKind task = TaskKind::Maze;
  int frames = 36;        // F
  int grid = 6;           // largest maze side the condition encoding covers
  int hidden = 128;       // H
  int time_features = 16;
  double pos_center = 3.0;  // state = (position - center) / scale
  double pos_scale = 3.0;
  double bg_scale = 40.0;   // state = brightness / bg_scale
  double pos_std = 0.5;     // assumed spread of position coordinates in state units
  double bg_std = 0.05;     // assumed spread of background coordinates in state units

  int state_dim() const { return frames * (2 + kBgBands); }
  int cond_dim() const { return task == TaskKind::Maze ? 6 * grid * grid : 4 + 4 * kMaxObstacles; }
  int input_dim() const { return state_dim() + time_features + cond_dim(); }
  int param_count() const {
    return hidden * input_dim() + hidden + hidden * hidden + hidden + state_dim() * hidden +
           state_dim();
  }

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

PolicyConfig maze_policy_config(int frames, int grid, int hidden = 128);
PolicyConfig nav_policy_config(int frames, int hidden = 128);

// Velocity field v(x_t, t, cond) = c_skip(t) x_t + c_out(t) N(x_t, t, cond)
// where N is a two-hidden-layer tanh perceptron and c_skip, c_out are the
// Gaussian-data preconditioning gains (see precondition()). The flat
// parameter vector of N is laid out as [W1 | b1 | W2 | b2 | W3 | b3],
// matrices column-major, with W1 acting on [state ; time features ; condition].
template <typename Scalar>
struct BasicPolicy {
  PolicyConfig config;
  VectorX<Scalar> params;
};

using Policy = BasicPolicy<double>;

Policy init_policy(const PolicyConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Codec and conditioning

Eigen::VectorXd encode_latent(const PolicyConfig& config, const TrajectoryLatent& latent);
TrajectoryLatent decode_latent(const PolicyConfig& config, const Eigen::Ref<const Eigen::VectorXd>& state);

// Fixed binary featurization: per cell of a grid x grid canvas, [inside maze,
// wall to the right, wall below, start, goal, trap].
Eigen::VectorXd encode_condition(const Maze& maze, int grid);
// Start, landmark, then (present, x, y, radius) per obstacle slot, all scaled
// by the room extent.
Eigen::VectorXd encode_condition(const NavScene& scene);

// ---------------------------------------------------------------------------
// Network

template <typename Scalar>
struct MlpLayers {
  Eigen::Map<const MatrixX<Scalar>> w1;
  Eigen::Map<const VectorX<Scalar>> b1;
  Eigen::Map<const MatrixX<Scalar>> w2;
  Eigen::Map<const VectorX<Scalar>> b2;
  Eigen::Map<const MatrixX<Scalar>> w3;
  Eigen::Map<const VectorX<Scalar>> b3;
};

template <typename Scalar>
MlpLayers<Scalar> layers(const PolicyConfig& c, const VectorX<Scalar>& params) {
  const Eigen::Index h = c.hidden, in = c.input_dim(), d = c.state_dim();
  const Scalar* p = params.data();
  const Scalar* w1 = p;
  const Scalar* b1 = w1 + h * in;
  const Scalar* w2 = b1 + h;
  const Scalar* b2 = w2 + h * h;
  const Scalar* w3 = b2 + h;
  const Scalar* b3 = w3 + d * h;
  return {{w1, h, in}, {b1, h}, {w2, h, h}, {b2, h}, {w3, d, h}, {b3, d}};
}

template <typename Scalar>
VectorX<Scalar> time_features(Scalar t, int count) {
  VectorX<Scalar> f(count);
  for (int k = 0; k < count / 2; ++k) {
    const Scalar w = std::numbers::pi_v<Scalar> * static_cast<Scalar>(k + 1);
    f(2 * k) = std::sin(w * t);
    f(2 * k + 1) = std::cos(w * t);
  }
  if (count % 2) f(count - 1) = t;
  return f;
}

// Activations kept for the backward pass.
template <typename Scalar>
struct MlpTape {
  MatrixX<Scalar> input;
  MatrixX<Scalar> h1;
  MatrixX<Scalar> h2;
  MatrixX<Scalar> out_gain;  // 2 x n: c_out of position and background rows
};

// Gains of the best linear predictor of v = x1 - x0 from x_t when x0 has
// per-coordinate spread sd and x1 is standard normal: skip is the regression
// coefficient, out the residual standard deviation.
template <typename Scalar>
struct Precondition {
  Scalar skip;
  Scalar out;
};

template <typename Scalar>
Precondition<Scalar> precondition(Scalar t, Scalar sd) {
  const Scalar var0 = sd * sd;
  const Scalar var_x = (1 - t) * (1 - t) * var0 + t * t;
  const Scalar cov = t - (1 - t) * var0;
  const Scalar skip = cov / var_x;
  return {skip, std::sqrt(std::max(Scalar(1) + var0 - skip * cov, Scalar(0)))};
}

// [states ; time features ; conditions], one column per evaluation.
template <typename Scalar>
MatrixX<Scalar> assemble_input(const PolicyConfig& c, const Eigen::Ref<const MatrixX<Scalar>>& states,
                               const Eigen::Ref<const VectorX<Scalar>>& times,
                               const Eigen::Ref<const MatrixX<Scalar>>& conds) {
  const Eigen::Index n = states.cols();
  MatrixX<Scalar> in(c.input_dim(), n);
  in.topRows(c.state_dim()) = states;
  for (Eigen::Index j = 0; j < n; ++j)
    in.col(j).segment(c.state_dim(), c.time_features) = time_features(times(j), c.time_features);
  if (conds.cols() == n) {
    in.bottomRows(c.cond_dim()) = conds;
  } else {
    in.bottomRows(c.cond_dim()) = conds.col(0).replicate(1, n);
  }
  return in;
}

template <typename Scalar>
MatrixX<Scalar> mlp_forward(const BasicPolicy<Scalar>& policy, MatrixX<Scalar> input,
                            MlpTape<Scalar>* tape = nullptr) {
  const auto L = layers(policy.config, policy.params);
  MatrixX<Scalar> h1 = ((L.w1 * input).colwise() + L.b1).array().tanh().matrix();
  MatrixX<Scalar> h2 = ((L.w2 * h1).colwise() + L.b2).array().tanh().matrix();
  MatrixX<Scalar> out = (L.w3 * h2).colwise() + L.b3;
  if (tape) {
    tape->input = std::move(input);
    tape->h1 = std::move(h1);
    tape->h2 = std::move(h2);
  }
  return out;
}

// Vector-Jacobian product: gradient of sum(upstream .* output) in the params.
template <typename Scalar>
VectorX<Scalar> mlp_backward(const BasicPolicy<Scalar>& policy, const MlpTape<Scalar>& tape,
                             const Eigen::Ref<const MatrixX<Scalar>>& upstream) {
  const PolicyConfig& c = policy.config;
  const auto L = layers(c, policy.params);
  const Eigen::Index h = c.hidden, in = c.input_dim(), d = c.state_dim();
  VectorX<Scalar> grad(c.param_count());
  Scalar* g = grad.data();
  Eigen::Map<MatrixX<Scalar>> gw1(g, h, in);
  Eigen::Map<VectorX<Scalar>> gb1(g + h * in, h);
  Eigen::Map<MatrixX<Scalar>> gw2(g + h * in + h, h, h);
  Eigen::Map<VectorX<Scalar>> gb2(g + h * in + h + h * h, h);
  Eigen::Map<MatrixX<Scalar>> gw3(g + h * in + 2 * h + h * h, d, h);
  Eigen::Map<VectorX<Scalar>> gb3(g + h * in + 2 * h + h * h + d * h, d);

  gw3.noalias() = upstream * tape.h2.transpose();
  gb3 = upstream.rowwise().sum();
  MatrixX<Scalar> d2 = (L.w3.transpose() * upstream).array() * (1 - tape.h2.array().square());
  gw2.noalias() = d2 * tape.h1.transpose();
  gb2 = d2.rowwise().sum();
  MatrixX<Scalar> d1 = (L.w2.transpose() * d2).array() * (1 - tape.h1.array().square());
  gw1.noalias() = d1 * tape.input.transpose();
  gb1 = d1.rowwise().sum();
  return grad;
}

namespace detail {

// In place: raw network output -> velocity, column j at time t.
template <typename Scalar, typename OutCol, typename StateCol>
void apply_precondition(const PolicyConfig& c, OutCol&& out, const StateCol& state, Scalar t,
                        Scalar* gains = nullptr) {
  const Eigen::Index np = 2 * c.frames, nb = c.state_dim() - np;
  const auto pos = precondition(t, Scalar(c.pos_std));
  const auto bg = precondition(t, Scalar(c.bg_std));
  out.head(np) = pos.skip * state.head(np) + pos.out * out.head(np);
  out.tail(nb) = bg.skip * state.tail(nb) + bg.out * out.tail(nb);
  if (gains) {
    gains[0] = pos.out;
    gains[1] = bg.out;
  }
}

}  // namespace detail

template <typename Scalar>
MatrixX<Scalar> velocity(const BasicPolicy<Scalar>& policy,
                         const Eigen::Ref<const MatrixX<Scalar>>& states,
                         const Eigen::Ref<const VectorX<Scalar>>& times,
                         const Eigen::Ref<const MatrixX<Scalar>>& conds,
                         MlpTape<Scalar>* tape = nullptr) {
  MatrixX<Scalar> v = mlp_forward(policy, assemble_input<Scalar>(policy.config, states, times, conds), tape);
  if (tape) tape->out_gain.resize(2, v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    detail::apply_precondition(policy.config, v.col(j), states.col(j), times(j),
                               tape ? tape->out_gain.col(j).data() : nullptr);
  }
  return v;
}

// Vector-Jacobian product of velocity(): gradient of sum(upstream .* v) in
// the params, for a tape recorded by velocity().
template <typename Scalar>
VectorX<Scalar> velocity_backward(const BasicPolicy<Scalar>& policy, const MlpTape<Scalar>& tape,
                                  const Eigen::Ref<const MatrixX<Scalar>>& upstream) {
  const Eigen::Index np = 2 * policy.config.frames, nb = policy.config.state_dim() - np;
  MatrixX<Scalar> scaled(upstream.rows(), upstream.cols());
  scaled.topRows(np) = upstream.topRows(np) * tape.out_gain.row(0).asDiagonal();
  scaled.bottomRows(nb) = upstream.bottomRows(nb) * tape.out_gain.row(1).asDiagonal();
  return mlp_backward<Scalar>(policy, tape, scaled);
}

// Velocity field of a policy under one fixed condition; callable as
// field(states, t) for a batch of states sharing the time t. The condition's
// share of the first layer is computed once.
template <typename Scalar>
class PolicyField {
 public:
  PolicyField(const BasicPolicy<Scalar>& policy, const Eigen::Ref<const VectorX<Scalar>>& cond)
      : policy_(policy) {
    const PolicyConfig& c = policy.config;
    require(cond.size() == c.cond_dim(), "condition has the wrong dimension");
    const auto L = layers(c, policy.params);
    cond_bias_ = L.w1.rightCols(c.cond_dim()) * cond + L.b1;
  }

  Eigen::Index dim() const { return policy_.config.state_dim(); }

  MatrixX<Scalar> operator()(const Eigen::Ref<const MatrixX<Scalar>>& states, Scalar t) const {
    const PolicyConfig& c = policy_.config;
    const auto L = layers(c, policy_.params);
    const VectorX<Scalar> bias =
        cond_bias_ + L.w1.middleCols(c.state_dim(), c.time_features) * time_features(t, c.time_features);
    MatrixX<Scalar> h1 =
        ((L.w1.leftCols(c.state_dim()) * states).colwise() + bias).array().tanh().matrix();
    MatrixX<Scalar> h2 = ((L.w2 * h1).colwise() + L.b2).array().tanh().matrix();
    MatrixX<Scalar> v = (L.w3 * h2).colwise() + L.b3;
    for (Eigen::Index j = 0; j < v.cols(); ++j) detail::apply_precondition(c, v.col(j), states.col(j), t);
    return v;
  }

 private:
  const BasicPolicy<Scalar>& policy_;
  VectorX<Scalar> cond_bias_;
};

// ---------------------------------------------------------------------------
// Schedules and the score identity

// sigma_t = a * sqrt(t / (1 - t)), capped at 10 a.
template <typename Scalar>
Scalar sigma_schedule(Scalar t, Scalar a) {
  if (!(t > 0 && t < 1)) fail(ErrorKind::InvalidArgument, "sigma_schedule: t must lie in (0, 1)");
  require(a >= 0, "sigma_schedule: noise scale must be non-negative");
  return std::min(a * std::sqrt(t / (1 - t)), 10 * a);
}

// Conditional-Gaussian score implied by x_t = (1 - t) x0 + t x1 and v = x1 - x0.
template <typename DerivedX, typename DerivedV>
auto score_from_velocity(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedV>& v,
                         typename DerivedX::Scalar t,
                         typename DerivedX::Scalar t_min = typename DerivedX::Scalar(kTimeMin)) {
  using Scalar = typename DerivedX::Scalar;
  if (!(t >= t_min)) fail(ErrorKind::InvalidArgument, "score_from_velocity: t below t_min");
  return (-(x + (Scalar(1) - t) * v) / t).eval();
}

// Mean of one reverse-time Euler-Maruyama step of length dt > 0 from time t.
template <typename DerivedX, typename DerivedV>
auto sde_mean(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedV>& v,
              typename DerivedX::Scalar t, typename DerivedX::Scalar sigma,
              typename DerivedX::Scalar dt) {
  using Scalar = typename DerivedX::Scalar;
  const Scalar half_var = sigma * sigma / 2;
  return (x - dt * (v - half_var * score_from_velocity(x, v, t))).eval();
}

// d(mean)/d(v), a scalar multiple of the identity.
template <typename Scalar>
Scalar mean_velocity_gain(Scalar t, Scalar sigma, Scalar dt) {
  return -dt * (1 + sigma * sigma * (1 - t) / (2 * t));
}

// S uniform steps from 1 - t_min down to t_min (S + 1 points).
template <typename Scalar = double>
VectorX<Scalar> time_grid(int steps, Scalar t_min = Scalar(kTimeMin)) {
  require(steps >= 2, "at least two sampling steps are required");
  VectorX<Scalar> grid(steps + 1);
  const Scalar span = 1 - 2 * t_min;
  for (int k = 0; k <= steps; ++k) grid(k) = (1 - t_min) - span * k / steps;
  grid(steps) = t_min;
  return grid;
}

// ---------------------------------------------------------------------------
// Samplers

template <typename Scalar>
struct BasicSdeRollout {
  VectorX<Scalar> grid;      // S + 1 times, strictly decreasing
  MatrixX<Scalar> states;    // D x (S + 1); last column is the sample
  MatrixX<Scalar> means;     // D x S
  MatrixX<Scalar> noise;     // D x S
  VectorX<Scalar> sigmas;    // S
  VectorX<Scalar> dts;       // S, positive step lengths

  int steps() const { return static_cast<int>(sigmas.size()); }
  auto sample() const { return states.col(states.cols() - 1); }
};

using SdeRollout = BasicSdeRollout<double>;

namespace detail {

template <typename Scalar>
void check_finite(const MatrixX<Scalar>& x, int step) {
  if (!x.allFinite()) throw NumericError("non-finite sampler state at step " + std::to_string(step), step);
}

}  // namespace detail

// Euler integration of dx = v dt from t = 1 - t_min to t_min. Columns of the
// batch are seeded independently from `seeds`.
template <typename Scalar, typename Field>
MatrixX<Scalar> ode_sample_batch(const Field& field, Eigen::Index dim, int steps,
                                 std::span<const std::uint64_t> seeds) {
  const VectorX<Scalar> grid = time_grid<Scalar>(steps);
  MatrixX<Scalar> x(dim, static_cast<Eigen::Index>(seeds.size()));
  for (std::size_t j = 0; j < seeds.size(); ++j) {
    Rng rng(seeds[j]);
    x.col(static_cast<Eigen::Index>(j)) = standard_normal<Scalar>(rng, dim);
  }
  for (int k = 0; k < steps; ++k) {
    const Scalar t = grid(k);
    const Scalar dt = grid(k) - grid(k + 1);
    const MatrixX<Scalar> v = field(x, t);
    x = (x - dt * v).eval();
    detail::check_finite(x, k);
  }
  return x;
}

template <typename Scalar, typename Field>
std::vector<BasicSdeRollout<Scalar>> sde_sample_batch(const Field& field, Eigen::Index dim, int steps,
                                                      Scalar noise_scale,
                                                      std::span<const std::uint64_t> seeds) {
  require(noise_scale >= 0, "SDE noise scale must be non-negative");
  const VectorX<Scalar> grid = time_grid<Scalar>(steps);
  const auto n = static_cast<Eigen::Index>(seeds.size());
  std::vector<Rng> rngs;
  std::vector<BasicSdeRollout<Scalar>> out(seeds.size());
  MatrixX<Scalar> x(dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    rngs.emplace_back(seeds[static_cast<std::size_t>(j)]);
    x.col(j) = standard_normal<Scalar>(rngs.back(), dim);
    auto& r = out[static_cast<std::size_t>(j)];
    r.grid = grid;
    r.states.resize(dim, steps + 1);
    r.means.resize(dim, steps);
    r.noise.resize(dim, steps);
    r.sigmas.resize(steps);
    r.dts.resize(steps);
    r.states.col(0) = x.col(j);
  }
  for (int k = 0; k < steps; ++k) {
    const Scalar t = grid(k);
    const Scalar dt = grid(k) - grid(k + 1);
    const Scalar sigma = sigma_schedule(t, noise_scale);
    const Scalar noise_std = sigma * std::sqrt(dt);
    const MatrixX<Scalar> v = field(x, t);
    const MatrixX<Scalar> mean = sde_mean(x, v, t, sigma, dt);
    for (Eigen::Index j = 0; j < n; ++j) {
      auto& r = out[static_cast<std::size_t>(j)];
      r.noise.col(k) = standard_normal<Scalar>(rngs[static_cast<std::size_t>(j)], dim);
      r.means.col(k) = mean.col(j);
      r.sigmas(k) = sigma;
      r.dts(k) = dt;
      x.col(j) = mean.col(j) + noise_std * r.noise.col(k);
      r.states.col(k + 1) = x.col(j);
    }
    detail::check_finite(x, k);
  }
  return out;
}

template <typename Scalar, typename Field>
VectorX<Scalar> ode_sample(const Field& field, Eigen::Index dim, int steps, std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return ode_sample_batch<Scalar>(field, dim, steps, seeds).col(0);
}

template <typename Scalar, typename Field>
BasicSdeRollout<Scalar> sde_sample(const Field& field, Eigen::Index dim, int steps, Scalar noise_scale,
                                   std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return std::move(sde_sample_batch<Scalar>(field, dim, steps, noise_scale, seeds).front());
}

// Policy conveniences returning decoded latents.
TrajectoryLatent ode_sample(const Policy& policy, const Eigen::VectorXd& cond, int steps,
                            std::uint64_t seed);
SdeRollout sde_sample(const Policy& policy, const Eigen::VectorXd& cond, int steps,
                      double noise_scale, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Losses and transition densities

struct ValueAndGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

struct FmBatch {
  Eigen::MatrixXd data;   // D x N clean latents (x0)
  Eigen::MatrixXd conds;  // C x N
};

struct FmNoise {
  Eigen::VectorXd times;  // N
  Eigen::MatrixXd noise;  // D x N (x1)
};

// Draw order per item: t ~ U(t_min, 1 - t_min), then D standard normals.
FmNoise draw_fm_noise(std::uint64_t seed, Eigen::Index items, Eigen::Index dim);

// Mean squared error between (x1 - x0) and v(x_t, t, cond), averaged over
// items and state dimensions, with its exact gradient.
ValueAndGradient fm_loss(const Policy& policy, const FmBatch& batch, std::uint64_t seed);
ValueAndGradient fm_loss(const Policy& policy, const FmBatch& batch, const FmNoise& noise);

// One recorded transition of an SDE rollout.
struct SdeStep {
  Eigen::VectorXd state;
  Eigen::VectorXd next;
  double t = 0.0;
  double sigma = 0.0;
  double dt = 0.0;
};

SdeStep step_record(const SdeRollout& rollout, int k);

Eigen::VectorXd recompute_mean(const Policy& policy, const Eigen::VectorXd& cond, const SdeStep& step);

// log N(next; mean_theta(state), sigma^2 dt I) and its gradient in the params.
ValueAndGradient step_logprob(const Policy& policy, const Eigen::VectorXd& cond, const SdeStep& step);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Policy& policy, const std::filesystem::path& path);
Policy load_checkpoint(const std::filesystem::path& path);

}  // namespace flowrl
