// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/track.hpp"

#include <cmath>

#include "flowrl/error.hpp"

namespace flowrl {

std::optional<Eigen::Vector2d> locate_agent(const Frame& frame) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int count = 0;
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      if (!is_agent_pixel(frame.rgb(x, y))) continue;
      sum += Eigen::Vector2d(x + 0.5, y + 0.5);
      ++count;
    }
  }
  if (count < 3) return std::nullopt;
  return sum / count;
}

std::vector<std::optional<Eigen::Vector2d>> track_positions(const Video& video) {
  std::vector<std::optional<Eigen::Vector2d>> out;
  out.reserve(video.frames.size());
  for (const Frame& f : video.frames) {
    auto c = locate_agent(f);
    if (c) *c /= video.geometry.cell_px;
    out.push_back(c);
  }
  return out;
}

CellPath extract_trajectory(const Video& video) {
  CellPath path;
  for (const Frame& f : video.frames) {
    const auto c = locate_agent(f);
    if (!c) continue;
    const Cell cell{static_cast<int>(std::floor(c->y() / video.geometry.cell_px)),
                    static_cast<int>(std::floor(c->x() / video.geometry.cell_px))};
    if (path.empty() || path.back() != cell) path.push_back(cell);
  }
  if (path.empty()) fail(ErrorKind::EmptyTrajectory, "agent not found in any frame");
  return path;
}

}  // namespace flowrl
