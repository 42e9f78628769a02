// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "flowrl/envgen.hpp"
#include "flowrl/render.hpp"

namespace flowrl {

// Agent-blue classification rule.
inline bool is_agent_pixel(Rgb c) { return c[2] >= 180 && c[0] <= 90 && c[1] <= 90; }

// Centroid, in continuous pixel coordinates, of all agent-blue pixels. Several
// disjoint blobs yield the centroid of their union. Not found below 3 pixels.
std::optional<Eigen::Vector2d> locate_agent(const Frame& frame);

// Per-frame agent position in scene units (cells or meters), or nullopt.
std::vector<std::optional<Eigen::Vector2d>> track_positions(const Video& video);

// Cell sequence visited by the agent: per-frame centroids mapped to cells,
// missing frames dropped, consecutive duplicates collapsed. Throws
// EmptyTrajectory when the agent is never found.
CellPath extract_trajectory(const Video& video);

}  // namespace flowrl
