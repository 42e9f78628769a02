// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flowrl/envgen.hpp"
#include "flowrl/render.hpp"

namespace flowrl {

struct GameRewardWeights {
  double alpha = 0.3;  // exact match
  double beta = 0.5;   // precision
  double gamma = 0.2;  // maze fidelity
};

struct EmbedRewardWeights {
  double alpha_emb = 0.5;  // mean cosine
  double beta_emb = 0.2;   // temporal order
  double gamma_emb = 0.3;  // endpoints
  double epsilon = 1e-8;
};

void validate(const GameRewardWeights& w);
void validate(const EmbedRewardWeights& w);

struct RewardBreakdown {
  std::string reward;
  std::vector<std::pair<std::string, double>> components;
  std::vector<std::pair<std::string, double>> weights;
  double combined = 0.0;
  bool empty_trajectory = false;

  // Throws InvalidArgument for an unknown component name.
  double component(const std::string& name) const;
};

// ---------------------------------------------------------------------------
// Game rewards

// 1 iff pred equals gt step for step (same length).
int reward_em(const CellPath& pred, const CellPath& gt);

// Mean over j = 1..n of the indicator that the first j predicted steps are
// correct; predicted steps past the end of pred count as wrong.
double reward_pr(const CellPath& pred, const CellPath& gt);

struct FidelityOptions {
  int samples = 8;     // M
  double tau = 25.0;   // max-channel difference threshold, 8-bit units
};

// Indices of the M frames inspected by reward_mf.
std::vector<int> fidelity_frame_indices(int frames, int samples);

// Mean over M sampled frames of the fraction of background pixels (outside a
// disc of radius agent_radius + 1 around the tracked agent) that stay within
// tau of the canonical background.
double reward_mf(const Video& video, const Frame& canonical_bg, const FidelityOptions& opts = {});

RewardBreakdown reward_game_combined(const CellPath& pred, const CellPath& gt, const Video& video,
                                     const Frame& canonical_bg, const GameRewardWeights& weights = {},
                                     const FidelityOptions& opts = {});

// ---------------------------------------------------------------------------
// Embedding rewards

inline constexpr int kEmbedDim = 64;
inline constexpr int kEmbedGrid = 8;

// Frozen frame encoder: Gaussian-weighted 8x8 grayscale downsample, fixed
// seeded orthogonal projection, l2 normalization.
class FrameEmbedder {
 public:
  explicit FrameEmbedder(std::uint64_t seed);

  Eigen::VectorXd operator()(const Frame& frame) const;
  // One column per frame.
  Eigen::MatrixXd operator()(const Video& video) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  Eigen::MatrixXd projection_;  // 64 x 64 orthogonal
};

Eigen::VectorXd embed_frame(const Frame& frame, std::uint64_t embed_seed);

// Sequences are E x T matrices of unit columns.
Eigen::MatrixXd interp_embeddings(const Eigen::MatrixXd& seq, int target_len);
double reward_cos(const Eigen::MatrixXd& e, const Eigen::MatrixXd& e_star);
double reward_end(const Eigen::MatrixXd& e, const Eigen::MatrixXd& e_star);
Eigen::VectorXd cum_progress(const Eigen::MatrixXd& e, double epsilon = 1e-8);
double reward_temp(const Eigen::MatrixXd& e, const Eigen::MatrixXd& e_star, double epsilon = 1e-8);

RewardBreakdown reward_emb(const Video& gen, const Video& ref, const EmbedRewardWeights& weights,
                           const FrameEmbedder& embedder);
RewardBreakdown reward_emb(const Video& gen, const Video& ref, const EmbedRewardWeights& weights,
                           std::uint64_t embed_seed);

// ---------------------------------------------------------------------------
// Pluggable reward interface

// Everything a reward may look at for one generated sample. Maze fields are
// set for maze tasks, `reference` for navigation tasks.
struct SampleContext {
  const Video& video;
  const Maze* maze = nullptr;
  const CellPath* optimal = nullptr;
  const Frame* canonical_bg = nullptr;
  const Video* reference = nullptr;
};

class RewardFunction {
 public:
  virtual ~RewardFunction() = default;
  virtual std::string name() const = 0;
  // Pure and deterministic in (context, configuration).
  virtual RewardBreakdown evaluate(const SampleContext& ctx) const = 0;
};

struct RewardSpec {
  std::string name = "game";  // game | em_only | emb
  GameRewardWeights game;
  EmbedRewardWeights embed;
  FidelityOptions fidelity;
  std::uint64_t embed_seed = 7;
};

// Names reserved for rewards that have no implementation here.
inline constexpr const char* kReservedRewards[] = {"vlm_judge"};

// Throws ConfigError for unknown or reserved names.
std::unique_ptr<RewardFunction> make_reward(const RewardSpec& spec);

}  // namespace flowrl
