// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "flowrl/envgen.hpp"
#include "flowrl/latent.hpp"

namespace flowrl {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr int kDefaultImagePx = 32;

namespace palette {
inline constexpr Rgb kWall{0, 0, 0};
inline constexpr Rgb kCorridor{200, 200, 200};
inline constexpr Rgb kTrap{220, 40, 40};
inline constexpr Rgb kGoal{40, 200, 70};
inline constexpr Rgb kAgent{20, 40, 240};
inline constexpr Rgb kObstacle{70, 70, 70};
}  // namespace palette

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  Frame() = default;
  Frame(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w * h * 3), 0) {}

  std::uint8_t& at(int x, int y, int ch) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
  std::uint8_t at(int x, int y, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  Rgb rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set(int x, int y, Rgb c) {
    for (int ch = 0; ch < 3; ++ch) at(x, y, ch) = c[ch];
  }

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Pixel geometry shared by every frame of a video. `cell_px` is pixels per
// maze cell (or per meter for navigation scenes).
struct Geometry {
  int width = kDefaultImagePx;
  int height = kDefaultImagePx;
  double cell_px = 1.0;
  double agent_radius_px = 1.2;
  int frames = 0;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

struct Video {
  std::vector<Frame> frames;
  Geometry geometry;
  int clamp_warnings = 0;  // agent positions clamped into the extent

  friend bool operator==(const Video& a, const Video& b) {
    return a.frames == b.frames && a.geometry == b.geometry;
  }
};

struct RenderStats {
  int clamped = 0;
};

Geometry maze_geometry(const Maze& maze, int image_px = kDefaultImagePx);
Geometry nav_geometry(const NavScene& scene, int image_px = kDefaultImagePx);

// Agent-free, unperturbed rendering; the reference for maze fidelity.
Frame render_background(const Maze& maze, int image_px = kDefaultImagePx);
Frame render_background(const NavScene& scene, int image_px = kDefaultImagePx);

// Positions are in maze cells (x = column, y = row); offsets are 8-bit
// brightness deltas added to the corridor pixels of each image quadrant
// (top-left, top-right, bottom-left, bottom-right).
Frame render_frame(const Maze& maze, const Eigen::Vector2d& agent_pos,
                   std::span<const double> bg_offsets, RenderStats* stats = nullptr,
                   int image_px = kDefaultImagePx);
Frame render_frame(const NavScene& scene, const Eigen::Vector2d& agent_pos,
                   std::span<const double> bg_offsets, RenderStats* stats = nullptr,
                   int image_px = kDefaultImagePx);

Video render_video(const Maze& maze, const TrajectoryLatent& latent,
                   int image_px = kDefaultImagePx);
Video render_video(const NavScene& scene, const TrajectoryLatent& latent,
                   int image_px = kDefaultImagePx);

// Reference rollout of a navigation scene, rendered with a clean background.
Video render_reference(const NavScene& scene, int image_px = kDefaultImagePx);

// Quadrant index of pixel (x, y): 0 TL, 1 TR, 2 BL, 3 BR.
inline int quadrant(int x, int y, int width, int height) {
  return (y >= height / 2 ? 2 : 0) + (x >= width / 2 ? 1 : 0);
}

// On-disk layout: frame_00000.ppm ... (binary P6) plus a `geometry` sidecar
// holding "GEOM w h cell_px agent_radius_px frames".
void write_video(const Video& video, const std::filesystem::path& dir);
Video read_video(const std::filesystem::path& dir);

void write_ppm(const Frame& frame, const std::filesystem::path& path);
Frame read_ppm(const std::filesystem::path& path);

}  // namespace flowrl
