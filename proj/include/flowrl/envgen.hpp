// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowrl/latent.hpp"

namespace flowrl {

struct Cell {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

using CellPath = std::vector<Cell>;

enum class MazeKind { Regular, Trapfield };

const char* to_string(MazeKind kind);
MazeKind maze_kind_from_string(const std::string& name);

// Grid maze. Walls are stored once per interior edge, so the wall relation is
// symmetric by construction; the outer border is always closed.
class Maze {
 public:
  Maze() = default;
  Maze(int width, int height, MazeKind kind, std::uint64_t seed);

  int width() const { return width_; }
  int height() const { return height_; }
  MazeKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }

  Cell start() const { return start_; }
  Cell goal() const { return goal_; }
  void set_start(Cell c) { start_ = c; }
  void set_goal(Cell c) { goal_ = c; }

  bool contains(Cell c) const {
    return c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_;
  }

  // Wall between the two cells. Non-adjacent or out-of-grid pairs count as
  // blocked.
  bool wall(Cell a, Cell b) const;
  void set_wall(Cell a, Cell b, bool present);

  bool trap(Cell c) const { return traps_[index(c)] != 0; }
  void set_trap(Cell c, bool present) { traps_[index(c)] = present ? 1 : 0; }
  std::vector<Cell> traps() const;

  // Passable neighbours in the canonical expansion order: up, right, down, left.
  std::vector<Cell> open_neighbors(Cell c) const;

  int index(Cell c) const { return c.row * width_ + c.col; }

  friend bool operator==(const Maze&, const Maze&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  MazeKind kind_ = MazeKind::Regular;
  std::uint64_t seed_ = 0;
  Cell start_{};
  Cell goal_{};
  std::vector<std::uint8_t> right_walls_;  // (r, c) | (r, c + 1)
  std::vector<std::uint8_t> down_walls_;   // (r, c) | (r + 1, c)
  std::vector<std::uint8_t> traps_;
};

// Throws InvalidArgument describing the first violated invariant.
void validate(const Maze& maze);

// True when consecutive cells are wall-free orthogonal neighbours and no cell
// is a trap.
bool is_valid_path(const Maze& maze, const CellPath& path);

Maze gen_regular_maze(std::uint64_t seed, int width, int height);
Maze gen_trapfield(std::uint64_t seed, int width, int height, double trap_fraction);

// Breadth-first shortest path with up/right/down/left expansion order.
CellPath solve_optimal(const Maze& maze);

// Shortest-path length in cells, or 0 when the goal is unreachable.
int shortest_path_cells(const Maze& maze);

// Demonstration latent: `path` resampled to `frames` points by nearest index,
// so every waypoint is a cell center; zero background field.
TrajectoryLatent make_demo(const Maze& maze, const CellPath& path, int frames);

inline Eigen::Vector2d cell_center(Cell c) { return {c.col + 0.5, c.row + 0.5}; }

// Text serialization, see docs/formats.md.
void write_maze(std::ostream& out, const Maze& maze);
Maze read_maze(std::istream& in);
void save_maze(const std::string& path, const Maze& maze);
Maze load_maze(const std::string& path);

// ---------------------------------------------------------------------------
// Navigation scenes

struct Disc {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
  friend bool operator==(const Disc&, const Disc&) = default;
};

inline constexpr double kRoomSize = 10.0;        // meters, square room
inline constexpr double kLandmarkTolerance = 0.5;  // reference end to landmark
inline constexpr int kMaxObstacles = 3;

struct NavScene {
  std::uint64_t seed = 0;
  double extent = kRoomSize;
  std::vector<Disc> obstacles;
  Eigen::Vector2d landmark = Eigen::Vector2d::Zero();
  // T* x 2 positions in meters.
  Eigen::Matrix<double, Eigen::Dynamic, 2> reference;

  friend bool operator==(const NavScene& a, const NavScene& b);
};

NavScene gen_nav_scene(std::uint64_t seed);

// Throws InvalidArgument when the reference rollout leaves the room, touches
// an obstacle, or misses the landmark.
void validate(const NavScene& scene);

void write_nav_scene(std::ostream& out, const NavScene& scene);
NavScene read_nav_scene(std::istream& in);

}  // namespace flowrl
