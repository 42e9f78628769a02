// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "flowrl/error.hpp"

namespace flowrl {

namespace fs = std::filesystem;

namespace {

constexpr double kLandmarkRadius = 0.4;  // meters
constexpr double kNavAgentRadius = 0.4;  // meters

std::uint8_t offset_channel(std::uint8_t base, double offset) {
  if (!std::isfinite(offset)) offset = 0.0;
  const double v = std::clamp(static_cast<double>(base) + std::round(offset), 0.0, 255.0);
  return static_cast<std::uint8_t>(v);
}

Rgb shaded_corridor(int x, int y, const Frame& f, std::span<const double> bg_offsets) {
  Rgb c = palette::kCorridor;
  if (bg_offsets.empty()) return c;
  const double off = bg_offsets[static_cast<std::size_t>(quadrant(x, y, f.width, f.height))];
  for (auto& ch : c) ch = offset_channel(ch, off);
  return c;
}

// Clamps `pos` into [0, extent] and returns the agent center in pixel space,
// snapped to the half-pixel lattice so the rasterized disc is symmetric.
Eigen::Vector2d agent_pixel_center(Eigen::Vector2d pos, double extent_x, double extent_y,
                                   double scale, RenderStats* stats) {
  bool clamped = false;
  for (int i = 0; i < 2; ++i) {
    const double hi = i == 0 ? extent_x : extent_y;
    if (!std::isfinite(pos[i])) {
      pos[i] = 0.0;
      clamped = true;
    } else if (pos[i] < 0.0 || pos[i] > hi) {
      pos[i] = std::clamp(pos[i], 0.0, hi);
      clamped = true;
    }
  }
  if (clamped && stats) ++stats->clamped;
  Eigen::Vector2d px;
  for (int i = 0; i < 2; ++i) {
    const double hi = (i == 0 ? extent_x : extent_y) * scale;
    px[i] = std::clamp(std::round(2.0 * pos[i] * scale) / 2.0, 0.5, std::max(0.5, hi - 0.5));
  }
  return px;
}

void draw_disc(Frame& f, const Eigen::Vector2d& center, double radius, Rgb color) {
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x() - radius)) - 1);
  const int x1 = std::min(f.width - 1, static_cast<int>(std::ceil(center.x() + radius)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y() - radius)) - 1);
  const int y1 = std::min(f.height - 1, static_cast<int>(std::ceil(center.y() + radius)) + 1);
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - center.x();
      const double dy = y + 0.5 - center.y();
      if (dx * dx + dy * dy <= r2) f.set(x, y, color);
    }
  }
}

Frame maze_scene(const Maze& maze, std::span<const double> bg_offsets, int image_px) {
  require(bg_offsets.empty() || bg_offsets.size() == kBgBands, "expected 4 background offsets");
  const int k = image_px / std::max(maze.width(), maze.height());
  require(k >= 3, "image too small for maze: fewer than 3 pixels per cell");
  Frame f(image_px, image_px);
  for (int y = 0; y < image_px; ++y) {
    for (int x = 0; x < image_px; ++x) {
      const int c = x / k, r = y / k;
      if (c >= maze.width() || r >= maze.height()) {
        f.set(x, y, palette::kWall);
        continue;
      }
      const int lx = x % k, ly = y % k;
      const bool right_edge = lx == k - 1;
      const bool bottom_edge = ly == k - 1;
      const bool wall = (right_edge && bottom_edge) ||
                        (right_edge && maze.wall({r, c}, {r, c + 1})) ||
                        (bottom_edge && maze.wall({r, c}, {r + 1, c}));
      if (wall) {
        f.set(x, y, palette::kWall);
      } else if (maze.trap({r, c})) {
        f.set(x, y, palette::kTrap);
      } else if (Cell{r, c} == maze.goal()) {
        f.set(x, y, palette::kGoal);
      } else {
        f.set(x, y, shaded_corridor(x, y, f, bg_offsets));
      }
    }
  }
  return f;
}

Frame nav_scene_frame(const NavScene& scene, std::span<const double> bg_offsets, int image_px) {
  require(bg_offsets.empty() || bg_offsets.size() == kBgBands, "expected 4 background offsets");
  const double scale = image_px / scene.extent;
  Frame f(image_px, image_px);
  for (int y = 0; y < image_px; ++y) {
    for (int x = 0; x < image_px; ++x) {
      const Eigen::Vector2d p((x + 0.5) / scale, (y + 0.5) / scale);
      bool obstacle = false;
      for (const Disc& d : scene.obstacles) obstacle = obstacle || (p - d.center).norm() <= d.radius;
      if (obstacle) {
        f.set(x, y, palette::kObstacle);
      } else if ((p - scene.landmark).norm() <= kLandmarkRadius) {
        f.set(x, y, palette::kGoal);
      } else {
        f.set(x, y, shaded_corridor(x, y, f, bg_offsets));
      }
    }
  }
  return f;
}

template <typename Env, typename FrameFn>
Video render_latent(const Env& env, const TrajectoryLatent& latent, const Geometry& geometry,
                    FrameFn&& frame_fn) {
  require(latent.bg_field.rows() == latent.waypoints.rows(), "latent field lengths differ");
  Video video;
  video.geometry = geometry;
  video.geometry.frames = static_cast<int>(latent.frames());
  RenderStats stats;
  video.frames.reserve(static_cast<std::size_t>(latent.frames()));
  for (Eigen::Index k = 0; k < latent.frames(); ++k) {
    const Eigen::Vector2d pos = latent.waypoints.row(k).transpose();
    const std::array<double, kBgBands> bg{latent.bg_field(k, 0), latent.bg_field(k, 1),
                                          latent.bg_field(k, 2), latent.bg_field(k, 3)};
    video.frames.push_back(frame_fn(env, pos, bg, &stats));
  }
  video.clamp_warnings = stats.clamped;
  return video;
}

}  // namespace

Geometry maze_geometry(const Maze& maze, int image_px) {
  const int k = image_px / std::max(maze.width(), maze.height());
  return {image_px, image_px, static_cast<double>(k), std::max(1.2, 0.3 * k), 0};
}

Geometry nav_geometry(const NavScene& scene, int image_px) {
  const double scale = image_px / scene.extent;
  return {image_px, image_px, scale, std::max(1.2, kNavAgentRadius * scale), 0};
}

Frame render_background(const Maze& maze, int image_px) { return maze_scene(maze, {}, image_px); }

Frame render_background(const NavScene& scene, int image_px) {
  return nav_scene_frame(scene, {}, image_px);
}

Frame render_frame(const Maze& maze, const Eigen::Vector2d& agent_pos,
                   std::span<const double> bg_offsets, RenderStats* stats, int image_px) {
  Frame f = maze_scene(maze, bg_offsets, image_px);
  const Geometry g = maze_geometry(maze, image_px);
  const Eigen::Vector2d c =
      agent_pixel_center(agent_pos, maze.width(), maze.height(), g.cell_px, stats);
  draw_disc(f, c, g.agent_radius_px, palette::kAgent);
  return f;
}

Frame render_frame(const NavScene& scene, const Eigen::Vector2d& agent_pos,
                   std::span<const double> bg_offsets, RenderStats* stats, int image_px) {
  Frame f = nav_scene_frame(scene, bg_offsets, image_px);
  const Geometry g = nav_geometry(scene, image_px);
  const Eigen::Vector2d c =
      agent_pixel_center(agent_pos, scene.extent, scene.extent, g.cell_px, stats);
  draw_disc(f, c, g.agent_radius_px, palette::kAgent);
  return f;
}

Video render_video(const Maze& maze, const TrajectoryLatent& latent, int image_px) {
  return render_latent(maze, latent, maze_geometry(maze, image_px),
                       [image_px](const Maze& m, const Eigen::Vector2d& p,
                                  std::span<const double> bg, RenderStats* s) {
                         return render_frame(m, p, bg, s, image_px);
                       });
}

Video render_video(const NavScene& scene, const TrajectoryLatent& latent, int image_px) {
  return render_latent(scene, latent, nav_geometry(scene, image_px),
                       [image_px](const NavScene& n, const Eigen::Vector2d& p,
                                  std::span<const double> bg, RenderStats* s) {
                         return render_frame(n, p, bg, s, image_px);
                       });
}

Video render_reference(const NavScene& scene, int image_px) {
  TrajectoryLatent latent(scene.reference.rows());
  latent.waypoints = scene.reference;
  return render_video(scene, latent, image_px);
}

// ---------------------------------------------------------------------------
// Disk I/O

void write_ppm(const Frame& frame, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.pixels.data()),
            static_cast<std::streamsize>(frame.pixels.size()));
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  while (in) {
    int ch = in.get();
    if (ch == '#') {
      while (in && in.get() != '\n') {
      }
      continue;
    }
    if (ch == EOF) break;
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int ppm_int(std::istream& in, const fs::path& path) {
  const std::string tok = ppm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used == tok.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::FormatError, "malformed PPM header in " + path.string());
}

}  // namespace

Frame read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  if (ppm_token(in) != "P6") fail(ErrorKind::FormatError, path.string() + " is not a P6 PPM");
  const int w = ppm_int(in, path);
  const int h = ppm_int(in, path);
  if (ppm_int(in, path) != 255) {
    fail(ErrorKind::FormatError, path.string() + ": only maxval 255 is supported");
  }
  Frame f(w, h);
  in.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(f.pixels.size())) {
    fail(ErrorKind::FormatError, path.string() + ": truncated pixel data");
  }
  return f;
}

void write_video(const Video& video, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < video.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.ppm", i);
    write_ppm(video.frames[i], dir / name);
  }
  std::ofstream side(dir / "geometry");
  if (!side) fail(ErrorKind::IoError, "cannot write " + (dir / "geometry").string());
  const Geometry& g = video.geometry;
  side << std::setprecision(17) << "GEOM " << g.width << ' ' << g.height << ' ' << g.cell_px << ' '
       << g.agent_radius_px << ' ' << video.frames.size() << '\n';
}

Video read_video(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::IoError, "no such video directory " + dir.string());
  std::ifstream side(dir / "geometry");
  if (!side) fail(ErrorKind::FormatError, "missing geometry sidecar in " + dir.string());
  Video video;
  Geometry& g = video.geometry;
  std::string tag;
  if (!(side >> tag >> g.width >> g.height >> g.cell_px >> g.agent_radius_px >> g.frames) ||
      tag != "GEOM" || g.frames < 0) {
    fail(ErrorKind::FormatError, "malformed geometry sidecar in " + dir.string());
  }
  int on_disk = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("frame_") && name.ends_with(".ppm")) ++on_disk;
  }
  if (on_disk != g.frames) {
    fail(ErrorKind::FormatError, "geometry declares " + std::to_string(g.frames) +
                                     " frames but " + std::to_string(on_disk) + " are present");
  }
  for (int i = 0; i < g.frames; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05d.ppm", i);
    Frame f = read_ppm(dir / name);
    if (f.width != g.width || f.height != g.height) {
      fail(ErrorKind::FormatError, std::string(name) + " does not match geometry dimensions");
    }
    video.frames.push_back(std::move(f));
  }
  return video;
}

}  // namespace flowrl
