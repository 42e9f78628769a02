// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

#include <Eigen/Core>

namespace flowrl {

inline constexpr int kBgBands = 4;

using Waypoints = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using BgField = Eigen::Matrix<double, Eigen::Dynamic, kBgBands, Eigen::RowMajor>;

// The generated object: one agent position per frame (x = column axis,
// y = row axis, in maze cells or meters) and a per-frame brightness offset for
// each image quadrant, in 8-bit units.
struct TrajectoryLatent {
  Waypoints waypoints;
  BgField bg_field;

  TrajectoryLatent() = default;
  explicit TrajectoryLatent(Eigen::Index frames)
      : waypoints(Waypoints::Zero(frames, 2)), bg_field(BgField::Zero(frames, kBgBands)) {}

  Eigen::Index frames() const { return waypoints.rows(); }

  bool all_finite() const {
    return waypoints.allFinite() && bg_field.allFinite();
  }

  friend bool operator==(const TrajectoryLatent& a, const TrajectoryLatent& b) {
    return a.waypoints.rows() == b.waypoints.rows() &&
           a.bg_field.rows() == b.bg_field.rows() && a.waypoints == b.waypoints &&
           a.bg_field == b.bg_field;
  }
};

// One line per frame: "x y b0 b1 b2 b3", preceded by "LATENT frames".
void write_latent(std::ostream& out, const TrajectoryLatent& latent);
TrajectoryLatent read_latent(std::istream& in);

}  // namespace flowrl
