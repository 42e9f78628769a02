// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/flowgen.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace flowrl {

PolicyConfig maze_policy_config(int frames, int grid, int hidden) {
  PolicyConfig c;
  c.task = TaskKind::Maze;
  c.frames = frames;
  c.grid = grid;
  c.hidden = hidden;
  // Cell units: a unit of state error is one cell, so sampling noise stays
  // small relative to the spacing the tracker has to resolve.
  c.pos_center = grid / 2.0;
  c.pos_scale = 1.0;
  // Given the maze the target path is nearly deterministic, so the
  // preconditioner assumes a conditional spread well below one cell.
  c.pos_std = 0.1;
  return c;
}

PolicyConfig nav_policy_config(int frames, int hidden) {
  PolicyConfig c;
  c.task = TaskKind::Nav;
  c.frames = frames;
  c.grid = 0;
  c.hidden = hidden;
  c.pos_center = kRoomSize / 2.0;
  c.pos_scale = kRoomSize / 2.0;
  return c;
}

Policy init_policy(const PolicyConfig& config, std::uint64_t seed) {
  require(config.frames >= 2 && config.hidden >= 1, "policy needs frames >= 2 and hidden >= 1");
  Policy p{config, Eigen::VectorXd::Zero(config.param_count())};
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index h = config.hidden, in = config.input_dim(), d = config.state_dim();
  double* w = p.params.data();
  auto fill = [&](double* dst, Eigen::Index count, double scale) {
    for (Eigen::Index i = 0; i < count; ++i) dst[i] = scale * normal(rng);
  };
  fill(w, h * in, 1.0 / std::sqrt(static_cast<double>(in)));
  w += h * in + h;
  fill(w, h * h, 1.0 / std::sqrt(static_cast<double>(h)));
  w += h * h + h;
  fill(w, d * h, 1.0 / std::sqrt(static_cast<double>(h)));
  return p;
}

Eigen::VectorXd encode_latent(const PolicyConfig& c, const TrajectoryLatent& latent) {
  require(latent.frames() == c.frames, "latent frame count does not match the policy");
  Eigen::VectorXd s(c.state_dim());
  for (int k = 0; k < c.frames; ++k) {
    s(2 * k) = (latent.waypoints(k, 0) - c.pos_center) / c.pos_scale;
    s(2 * k + 1) = (latent.waypoints(k, 1) - c.pos_center) / c.pos_scale;
    for (int b = 0; b < kBgBands; ++b)
      s(2 * c.frames + kBgBands * k + b) = latent.bg_field(k, b) / c.bg_scale;
  }
  return s;
}

TrajectoryLatent decode_latent(const PolicyConfig& c, const Eigen::Ref<const Eigen::VectorXd>& s) {
  require(s.size() == c.state_dim(), "state has the wrong dimension");
  TrajectoryLatent latent(c.frames);
  for (int k = 0; k < c.frames; ++k) {
    latent.waypoints(k, 0) = s(2 * k) * c.pos_scale + c.pos_center;
    latent.waypoints(k, 1) = s(2 * k + 1) * c.pos_scale + c.pos_center;
    for (int b = 0; b < kBgBands; ++b)
      latent.bg_field(k, b) = s(2 * c.frames + kBgBands * k + b) * c.bg_scale;
  }
  return latent;
}

Eigen::VectorXd encode_condition(const Maze& maze, int grid) {
  require(maze.width() <= grid && maze.height() <= grid, "maze exceeds the condition grid");
  const int cells = grid * grid;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(6 * cells);
  for (int r = 0; r < maze.height(); ++r) {
    for (int c = 0; c < maze.width(); ++c) {
      const Cell cell{r, c};
      const int i = r * grid + c;
      f(i) = 1.0;
      f(cells + i) = maze.wall(cell, {r, c + 1}) ? 1.0 : 0.0;
      f(2 * cells + i) = maze.wall(cell, {r + 1, c}) ? 1.0 : 0.0;
      f(3 * cells + i) = cell == maze.start() ? 1.0 : 0.0;
      f(4 * cells + i) = cell == maze.goal() ? 1.0 : 0.0;
      f(5 * cells + i) = maze.trap(cell) ? 1.0 : 0.0;
    }
  }
  return f;
}

Eigen::VectorXd encode_condition(const NavScene& scene) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(4 + 4 * kMaxObstacles);
  const double s = scene.extent;
  f.segment<2>(0) = scene.reference.row(0).transpose() / s;
  f.segment<2>(2) = scene.landmark / s;
  for (std::size_t i = 0; i < scene.obstacles.size() && i < kMaxObstacles; ++i) {
    const Disc& d = scene.obstacles[i];
    f.segment<4>(4 + 4 * static_cast<Eigen::Index>(i)) << 1.0, d.center.x() / s,
        d.center.y() / s, d.radius / s;
  }
  return f;
}

TrajectoryLatent ode_sample(const Policy& policy, const Eigen::VectorXd& cond, int steps,
                            std::uint64_t seed) {
  PolicyField<double> field(policy, cond);
  return decode_latent(policy.config, ode_sample<double>(field, field.dim(), steps, seed));
}

SdeRollout sde_sample(const Policy& policy, const Eigen::VectorXd& cond, int steps,
                      double noise_scale, std::uint64_t seed) {
  PolicyField<double> field(policy, cond);
  return sde_sample<double>(field, field.dim(), steps, noise_scale, seed);
}

FmNoise draw_fm_noise(std::uint64_t seed, Eigen::Index items, Eigen::Index dim) {
  Rng rng(seed);
  std::uniform_real_distribution<double> time(kTimeMin, 1.0 - kTimeMin);
  FmNoise n{Eigen::VectorXd(items), Eigen::MatrixXd(dim, items)};
  for (Eigen::Index i = 0; i < items; ++i) {
    n.times(i) = time(rng);
    n.noise.col(i) = standard_normal(rng, dim);
  }
  return n;
}

ValueAndGradient fm_loss(const Policy& policy, const FmBatch& batch, std::uint64_t seed) {
  return fm_loss(policy, batch, draw_fm_noise(seed, batch.data.cols(), batch.data.rows()));
}

ValueAndGradient fm_loss(const Policy& policy, const FmBatch& batch, const FmNoise& noise) {
  const Eigen::Index n = batch.data.cols();
  require(n > 0, "fm_loss needs a non-empty batch");
  require(batch.data.rows() == policy.config.state_dim(), "batch latents have the wrong dimension");
  require(batch.conds.cols() == n && batch.conds.rows() == policy.config.cond_dim(),
          "batch conditions have the wrong shape");

  const Eigen::RowVectorXd t = noise.times.transpose();
  const Eigen::MatrixXd xt = batch.data.array().rowwise() * (1.0 - t.array()) +
                             noise.noise.array().rowwise() * t.array();
  const Eigen::MatrixXd target = noise.noise - batch.data;
  MlpTape<double> tape;
  const Eigen::MatrixXd pred = velocity<double>(policy, xt, noise.times, batch.conds, &tape);
  const Eigen::MatrixXd residual = pred - target;

  const double scale = 1.0 / static_cast<double>(n * batch.data.rows());
  const Eigen::RowVectorXd per_item = residual.colwise().squaredNorm();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(per_item(i))) {
      throw NumericError("fm_loss: non-finite loss for batch item " + std::to_string(i), i);
    }
  }
  return {per_item.sum() * scale, velocity_backward<double>(policy, tape, 2.0 * scale * residual)};
}

SdeStep step_record(const SdeRollout& rollout, int k) {
  require(k >= 0 && k < rollout.steps(), "step index out of range");
  return {rollout.states.col(k), rollout.states.col(k + 1), rollout.grid(k), rollout.sigmas(k),
          rollout.dts(k)};
}

Eigen::VectorXd recompute_mean(const Policy& policy, const Eigen::VectorXd& cond, const SdeStep& step) {
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(1, step.t);
  const Eigen::MatrixXd v = velocity<double>(policy, step.state, t, cond);
  return sde_mean(step.state, v.col(0), step.t, step.sigma, step.dt);
}

ValueAndGradient step_logprob(const Policy& policy, const Eigen::VectorXd& cond, const SdeStep& step) {
  const double var = step.sigma * step.sigma * step.dt;
  if (!(var > 0)) fail(ErrorKind::InvalidArgument, "step_logprob: transition std is zero");
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(1, step.t);
  MlpTape<double> tape;
  const Eigen::MatrixXd v = velocity<double>(policy, step.state, t, cond, &tape);
  const Eigen::VectorXd mean = sde_mean(step.state, v.col(0), step.t, step.sigma, step.dt);
  const Eigen::VectorXd diff = step.next - mean;
  const double dim = static_cast<double>(diff.size());
  const double value =
      -diff.squaredNorm() / (2.0 * var) - 0.5 * dim * std::log(2.0 * std::numbers::pi * var);
  const double gain = mean_velocity_gain(step.t, step.sigma, step.dt);
  const Eigen::MatrixXd upstream = (gain / var) * diff;
  return {value, velocity_backward<double>(policy, tape, upstream)};
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'L', 'O', 'W', 'R', 'L', 'C', 'K'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& where) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::FormatError, "truncated checkpoint " + where);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in, const std::string& where) {
  return std::bit_cast<double>(get_u64(in, where));
}

}  // namespace

void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  const PolicyConfig& c = policy.config;
  out.write(kMagic.data(), kMagic.size());
  put_u64(out, kCheckpointVersion);
  put_u64(out, c.task == TaskKind::Maze ? 0 : 1);
  put_u64(out, static_cast<std::uint64_t>(c.frames));
  put_u64(out, static_cast<std::uint64_t>(c.grid));
  put_u64(out, static_cast<std::uint64_t>(c.hidden));
  put_u64(out, static_cast<std::uint64_t>(c.time_features));
  put_f64(out, c.pos_center);
  put_f64(out, c.pos_scale);
  put_f64(out, c.bg_scale);
  put_f64(out, c.pos_std);
  put_f64(out, c.bg_std);
  put_u64(out, static_cast<std::uint64_t>(policy.params.size()));
  for (Eigen::Index i = 0; i < policy.params.size(); ++i) put_f64(out, policy.params(i));
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

Policy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open checkpoint " + path.string());
  const std::string where = path.string();
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    fail(ErrorKind::FormatError, where + " is not a flowrl checkpoint");
  }
  const std::uint64_t version = get_u64(in, where);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::FormatError, where + ": checkpoint version " + std::to_string(version) +
                                     " does not match expected " +
                                     std::to_string(kCheckpointVersion));
  }
  Policy p;
  PolicyConfig& c = p.config;
  c.task = get_u64(in, where) == 0 ? TaskKind::Maze : TaskKind::Nav;
  c.frames = static_cast<int>(get_u64(in, where));
  c.grid = static_cast<int>(get_u64(in, where));
  c.hidden = static_cast<int>(get_u64(in, where));
  c.time_features = static_cast<int>(get_u64(in, where));
  c.pos_center = get_f64(in, where);
  c.pos_scale = get_f64(in, where);
  c.bg_scale = get_f64(in, where);
  c.pos_std = get_f64(in, where);
  c.bg_std = get_f64(in, where);
  const std::uint64_t count = get_u64(in, where);
  if (count != static_cast<std::uint64_t>(c.param_count())) {
    fail(ErrorKind::FormatError, where + ": parameter count does not match the layout");
  }
  p.params.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) p.params(static_cast<Eigen::Index>(i)) = get_f64(in, where);
  if (!p.params.allFinite()) fail(ErrorKind::FormatError, where + ": non-finite parameters");
  return p;
}

}  // namespace flowrl
