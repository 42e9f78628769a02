// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/rewards.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>

#include "flowrl/error.hpp"
#include "flowrl/random.hpp"
#include "flowrl/track.hpp"

namespace flowrl {

void validate(const GameRewardWeights& w) {
  require(w.alpha >= 0 && w.beta >= 0 && w.gamma >= 0, "game reward weights must be non-negative");
  require(w.alpha + w.beta + w.gamma > 0, "game reward weights must not all be zero");
}

void validate(const EmbedRewardWeights& w) {
  require(w.alpha_emb >= 0 && w.beta_emb >= 0 && w.gamma_emb >= 0,
          "embedding reward weights must be non-negative");
  require(std::abs(w.alpha_emb + w.beta_emb + w.gamma_emb - 1.0) <= 1e-9,
          "embedding reward weights must sum to 1");
  require(w.epsilon > 0, "embedding reward epsilon must be positive");
}

double RewardBreakdown::component(const std::string& name) const {
  for (const auto& [key, value] : components)
    if (key == name) return value;
  fail(ErrorKind::InvalidArgument, "reward " + reward + " has no component '" + name + "'");
}

// ---------------------------------------------------------------------------
// Game rewards

int reward_em(const CellPath& pred, const CellPath& gt) {
  require(!gt.empty(), "reward_em: ground truth path is empty");
  return pred == gt ? 1 : 0;
}

double reward_pr(const CellPath& pred, const CellPath& gt) {
  require(!gt.empty(), "reward_pr: ground truth path is empty");
  std::size_t prefix = 0;
  while (prefix < gt.size() && prefix < pred.size() && pred[prefix] == gt[prefix]) ++prefix;
  return static_cast<double>(prefix) / static_cast<double>(gt.size());
}

std::vector<int> fidelity_frame_indices(int frames, int samples) {
  require(samples >= 1, "reward_mf: sample count must be at least 1");
  require(frames >= 1, "reward_mf: video has no frames");
  std::vector<int> idx;
  if (samples == 1) return {frames - 1};
  for (int m = 0; m < samples; ++m) {
    idx.push_back(static_cast<int>(
        std::lround(static_cast<double>(m) * (frames - 1) / static_cast<double>(samples - 1))));
  }
  return idx;
}

double reward_mf(const Video& video, const Frame& canonical_bg, const FidelityOptions& opts) {
  const int frames = static_cast<int>(video.frames.size());
  const double mask_radius = video.geometry.agent_radius_px + 1.0;
  double total = 0.0;
  const auto indices = fidelity_frame_indices(frames, opts.samples);
  for (int idx : indices) {
    const Frame& f = video.frames[static_cast<std::size_t>(idx)];
    require(f.width == canonical_bg.width && f.height == canonical_bg.height,
            "reward_mf: frame and canonical background differ in size");
    const auto agent = locate_agent(f);
    long valid = 0, changed = 0;
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) {
        if (agent && (Eigen::Vector2d(x + 0.5, y + 0.5) - *agent).norm() <= mask_radius) continue;
        ++valid;
        int diff = 0;
        for (int ch = 0; ch < 3; ++ch)
          diff = std::max(diff, std::abs(int{f.at(x, y, ch)} - int{canonical_bg.at(x, y, ch)}));
        if (diff > opts.tau) ++changed;
      }
    }
    if (valid == 0) fail(ErrorKind::DegenerateMask, "reward_mf: agent mask covers the whole frame");
    total += 1.0 - static_cast<double>(changed) / static_cast<double>(valid);
  }
  return total / static_cast<double>(indices.size());
}

RewardBreakdown reward_game_combined(const CellPath& pred, const CellPath& gt, const Video& video,
                                     const Frame& canonical_bg, const GameRewardWeights& w,
                                     const FidelityOptions& opts) {
  validate(w);
  const double em = reward_em(pred, gt);
  const double pr = reward_pr(pred, gt);
  const double mf = reward_mf(video, canonical_bg, opts);
  RewardBreakdown b;
  b.reward = "game";
  b.components = {{"em", em}, {"pr", pr}, {"mf", mf}};
  b.weights = {{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}};
  b.combined = w.alpha * em + w.beta * pr + w.gamma * mf;
  b.empty_trajectory = pred.empty();
  return b;
}

// ---------------------------------------------------------------------------
// Embeddings

namespace {

// Rows: output cells; columns: pixels along one axis. Gaussian weights with
// sigma equal to one output cell, each row normalized to sum 1.
Eigen::MatrixXd downsample_weights(int pixels) {
  Eigen::MatrixXd w(kEmbedGrid, pixels);
  const double cell = static_cast<double>(pixels) / kEmbedGrid;
  for (int i = 0; i < kEmbedGrid; ++i) {
    const double center = (i + 0.5) * cell;
    for (int p = 0; p < pixels; ++p) {
      const double d = (p + 0.5 - center) / cell;
      w(i, p) = std::exp(-0.5 * d * d);
    }
    w.row(i) /= w.row(i).sum();
  }
  return w;
}

Eigen::VectorXd canonical_unit() {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(kEmbedDim);
  e(0) = 1.0;
  return e;
}

Eigen::VectorXd normalized_or_canonical(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0) || !std::isfinite(n)) return canonical_unit();
  return v / n;
}

double unit_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a == b) return 1.0;
  return std::clamp(a.dot(b), -1.0, 1.0);
}

void require_same_shape(const Eigen::MatrixXd& e, const Eigen::MatrixXd& e_star, const char* who) {
  if (e.cols() != e_star.cols() || e.rows() != e_star.rows()) {
    fail(ErrorKind::InvalidArgument, std::string(who) + ": sequence lengths differ");
  }
  require(e.cols() >= 1, std::string(who) + ": empty sequence");
}

}  // namespace

FrameEmbedder::FrameEmbedder(std::uint64_t seed) : seed_(seed) {
  Rng rng(derive_seed(seed, 0x656d62));
  Eigen::MatrixXd g(kEmbedDim, kEmbedDim);
  for (Eigen::Index j = 0; j < g.cols(); ++j) g.col(j) = standard_normal(rng, kEmbedDim);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  projection_ = qr.householderQ() * Eigen::MatrixXd::Identity(kEmbedDim, kEmbedDim);
}

Eigen::VectorXd FrameEmbedder::operator()(const Frame& frame) const {
  Eigen::MatrixXd gray(frame.height, frame.width);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      gray(y, x) = (0.299 * frame.at(x, y, 0) + 0.587 * frame.at(x, y, 1) +
                    0.114 * frame.at(x, y, 2)) / 255.0;
  const Eigen::MatrixXd small =
      downsample_weights(frame.height) * gray * downsample_weights(frame.width).transpose();
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(small.data(), kEmbedDim);
  return normalized_or_canonical(projection_ * flat);
}

Eigen::MatrixXd FrameEmbedder::operator()(const Video& video) const {
  Eigen::MatrixXd e(kEmbedDim, static_cast<Eigen::Index>(video.frames.size()));
  for (std::size_t i = 0; i < video.frames.size(); ++i)
    e.col(static_cast<Eigen::Index>(i)) = (*this)(video.frames[i]);
  return e;
}

Eigen::VectorXd embed_frame(const Frame& frame, std::uint64_t embed_seed) {
  return FrameEmbedder(embed_seed)(frame);
}

Eigen::MatrixXd interp_embeddings(const Eigen::MatrixXd& seq, int target_len) {
  if (seq.cols() < 2 || target_len < 2) {
    fail(ErrorKind::InvalidArgument, "interp_embeddings: lengths must be at least 2");
  }
  if (seq.cols() == target_len) return seq;
  Eigen::MatrixXd out(seq.rows(), target_len);
  const Eigen::Index last = seq.cols() - 1;
  for (int j = 0; j < target_len; ++j) {
    // Exact rational fractional index so the endpoints land on the inputs.
    const long num = static_cast<long>(j) * last;
    const Eigen::Index i = num / (target_len - 1);
    const double frac = static_cast<double>(num % (target_len - 1)) / (target_len - 1);
    if (frac == 0.0) {
      out.col(j) = seq.col(i);
    } else {
      out.col(j) = normalized_or_canonical((1.0 - frac) * seq.col(i) + frac * seq.col(i + 1));
    }
  }
  return out;
}

double reward_cos(const Eigen::MatrixXd& e, const Eigen::MatrixXd& e_star) {
  require_same_shape(e, e_star, "reward_cos");
  double sum = 0.0;
  for (Eigen::Index t = 0; t < e.cols(); ++t) sum += unit_dot(e.col(t), e_star.col(t));
  return sum / static_cast<double>(e.cols());
}

double reward_end(const Eigen::MatrixXd& e, const Eigen::MatrixXd& e_star) {
  require_same_shape(e, e_star, "reward_end");
  const Eigen::Index last = e.cols() - 1;
  return 0.5 * (unit_dot(e.col(0), e_star.col(0)) + unit_dot(e.col(last), e_star.col(last)));
}

Eigen::VectorXd cum_progress(const Eigen::MatrixXd& e, double epsilon) {
  require(e.cols() >= 2, "cum_progress: sequence needs at least two frames");
  const Eigen::Index steps = e.cols() - 1;
  Eigen::VectorXd c(steps);
  double run = 0.0;
  for (Eigen::Index k = 0; k < steps; ++k) {
    run += (e.col(k + 1) - e.col(k)).norm();
    c(k) = run;
  }
  return c / (run + epsilon);
}

double reward_temp(const Eigen::MatrixXd& e, const Eigen::MatrixXd& e_star, double epsilon) {
  require_same_shape(e, e_star, "reward_temp");
  require(e.cols() >= 2, "reward_temp: sequences need at least two frames");
  const double dev = (cum_progress(e, epsilon) - cum_progress(e_star, epsilon)).cwiseAbs().mean();
  return std::clamp(1.0 - dev, 0.0, 1.0);
}

RewardBreakdown reward_emb(const Video& gen, const Video& ref, const EmbedRewardWeights& w,
                           const FrameEmbedder& embedder) {
  validate(w);
  require(gen.frames.size() >= 2 && ref.frames.size() >= 2,
          "reward_emb: both videos need at least two frames");
  Eigen::MatrixXd e = embedder(gen);
  Eigen::MatrixXd e_star = embedder(ref);
  const int tc = static_cast<int>(std::max(e.cols(), e_star.cols()));
  if (e.cols() < tc) e = interp_embeddings(e, tc);
  if (e_star.cols() < tc) e_star = interp_embeddings(e_star, tc);

  RewardBreakdown b;
  b.reward = "emb";
  const double cos = reward_cos(e, e_star);
  const double temp = reward_temp(e, e_star, w.epsilon);
  const double end = reward_end(e, e_star);
  b.components = {{"cos", cos}, {"temp", temp}, {"end", end}};
  b.weights = {{"alpha_emb", w.alpha_emb}, {"beta_emb", w.beta_emb}, {"gamma_emb", w.gamma_emb}};
  b.combined = w.alpha_emb * cos + w.beta_emb * temp + w.gamma_emb * end;
  return b;
}

RewardBreakdown reward_emb(const Video& gen, const Video& ref, const EmbedRewardWeights& w,
                           std::uint64_t embed_seed) {
  return reward_emb(gen, ref, w, FrameEmbedder(embed_seed));
}

// ---------------------------------------------------------------------------
// Registry

namespace {

class GameReward final : public RewardFunction {
 public:
  GameReward(std::string name, GameRewardWeights w, FidelityOptions f)
      : name_(std::move(name)), weights_(w), fidelity_(f) {
    validate(weights_);
  }

  std::string name() const override { return name_; }

  RewardBreakdown evaluate(const SampleContext& ctx) const override {
    if (!ctx.maze || !ctx.optimal || !ctx.canonical_bg) {
      fail(ErrorKind::InvalidArgument, "reward " + name_ + " needs a maze sample");
    }
    CellPath pred;
    try {
      pred = extract_trajectory(ctx.video);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyTrajectory) throw;
    }
    RewardBreakdown b =
        reward_game_combined(pred, *ctx.optimal, ctx.video, *ctx.canonical_bg, weights_, fidelity_);
    b.reward = name_;
    return b;
  }

 private:
  std::string name_;
  GameRewardWeights weights_;
  FidelityOptions fidelity_;
};

class EmbeddingReward final : public RewardFunction {
 public:
  EmbeddingReward(EmbedRewardWeights w, std::uint64_t seed) : weights_(w), embedder_(seed) {
    validate(weights_);
  }

  std::string name() const override { return "emb"; }

  RewardBreakdown evaluate(const SampleContext& ctx) const override {
    if (!ctx.reference) fail(ErrorKind::InvalidArgument, "reward emb needs a reference video");
    return reward_emb(ctx.video, *ctx.reference, weights_, embedder_);
  }

 private:
  EmbedRewardWeights weights_;
  FrameEmbedder embedder_;
};

}  // namespace

std::unique_ptr<RewardFunction> make_reward(const RewardSpec& spec) {
  if (spec.name == "game") return std::make_unique<GameReward>("game", spec.game, spec.fidelity);
  if (spec.name == "em_only") {
    return std::make_unique<GameReward>("em_only", GameRewardWeights{1.0, 0.0, 0.0}, spec.fidelity);
  }
  if (spec.name == "emb") return std::make_unique<EmbeddingReward>(spec.embed, spec.embed_seed);
  for (const char* reserved : kReservedRewards) {
    if (spec.name == reserved) {
      fail(ErrorKind::ConfigError, "reward '" + spec.name + "' is reserved and not implemented");
    }
  }
  fail(ErrorKind::ConfigError, "unknown reward '" + spec.name + "'");
}

}  // namespace flowrl
