// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowrl/envgen.hpp"
#include "flowrl/eval.hpp"
#include "flowrl/flowgen.hpp"
#include "flowrl/grpo.hpp"

namespace flowrl {

// ---------------------------------------------------------------------------
// Configuration

struct DataConfig {
  std::uint64_t seed = 0;
  int train = 40;
  int heldout = 20;
  int demos = 1000;
  int min_size = 4;
  int max_size = 6;
  MazeKind maze_kind = MazeKind::Regular;
  double trap_fraction = 0.2;
};

struct ModelConfig {
  int frames = 36;
  int grid = 6;
  int hidden = 128;
  std::uint64_t init_seed = 0;
};

struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 1;
  TaskKind task = TaskKind::Maze;
  int workers = 1;
  DataConfig data;
  ModelConfig model;
  SftConfig sft;
  GrpoConfig grpo;
  EvalConfig eval;
  std::vector<int> scale_ks = {1, 4, 8, 12, 16};
  NavOptions nav;

  PolicyConfig policy_config() const;
};

// Defaults fill every absent key; sub-seeds default to values derived from
// the top-level seed. Throws ConfigError naming the offending field for
// missing required keys, unknown keys and ill-typed values.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Round-trips through parse_config.
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

// Re-derives every seed that the source config left implicit.
ExperimentConfig with_seed(const nlohmann::json& source, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  std::vector<Maze> train;
  std::vector<Maze> heldout;
  std::vector<Maze> demos;
  std::vector<NavScene> nav_train;
  std::vector<NavScene> nav_heldout;
  std::vector<NavScene> nav_demos;
};

// Train, held-out and demonstration layouts are pairwise distinct.
Dataset generate_dataset(const DataConfig& cfg, TaskKind task);
void write_dataset(const Dataset& data, const nlohmann::ordered_json& manifest_extra,
                   const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// Reference rollout positions resampled to `frames` waypoints, zero background.
TrajectoryLatent nav_demo(const NavScene& scene, int frames);

FmBatch demo_batch(const Dataset& data, const PolicyConfig& config);
std::vector<Task> make_tasks(const std::vector<Maze>& mazes, const PolicyConfig& config);
std::vector<Task> make_tasks(const std::vector<NavScene>& scenes, const PolicyConfig& config);

// ---------------------------------------------------------------------------
// Artifacts

const char* git_describe();

// run.json: command, full config, git describe string and seeds.
void write_run_json(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& cfg, const nlohmann::ordered_json& inputs);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG line chart, one polyline and one marker per point.
std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label);

// Every numeric top-level field (and numeric entry of a "components" object)
// of a JSONL log, against "iteration" or "epoch" when present.
std::vector<Series> log_series(const std::vector<nlohmann::json>& rows);

}  // namespace flowrl
