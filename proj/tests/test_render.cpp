// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>

#include "flowrl/envgen.hpp"
#include "flowrl/error.hpp"
#include "flowrl/render.hpp"
#include "flowrl/track.hpp"

using namespace flowrl;
namespace fs = std::filesystem;

namespace {

const std::array<double, kBgBands> kZero{0, 0, 0, 0};

fs::path scratch_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "flowrl_test_render" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Pixel-center centroid of blue pixels, written out independently of the tracker.
Eigen::Vector2d blue_centroid(const Frame& f) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int n = 0;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      if (f.at(x, y, 2) >= 180 && f.at(x, y, 0) <= 90 && f.at(x, y, 1) <= 90) {
        sum += Eigen::Vector2d(x + 0.5, y + 0.5);
        ++n;
      }
  REQUIRE(n > 0);
  return sum / n;
}

}  // namespace

TEST_CASE("zero offsets reproduce the canonical background outside the agent") {
  const Maze m = gen_regular_maze(2, 5, 5);
  const Frame bg = render_background(m);
  const Frame f = render_frame(m, cell_center({2, 3}), kZero);
  int changed = 0;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      if (f.rgb(x, y) != bg.rgb(x, y)) {
        ++changed;
        CHECK(f.rgb(x, y) == palette::kAgent);
      }
  CHECK(changed >= 3);
}

TEST_CASE("palette") {
  Maze m = gen_trapfield(3, 4, 4, 0.25);
  const Frame bg = render_background(m);
  const Geometry g = maze_geometry(m);
  const auto px = [&](Cell c) {
    return bg.rgb(static_cast<int>((c.col + 0.5) * g.cell_px), static_cast<int>((c.row + 0.5) * g.cell_px));
  };
  CHECK(px(m.goal()) == palette::kGoal);
  CHECK(px(m.start()) == palette::kCorridor);
  for (const Cell& t : m.traps()) CHECK(px(t) == palette::kTrap);
  CHECK(bg.rgb(0, 0) == palette::kCorridor);
  CHECK(bg.rgb(bg.width - 1, bg.height - 1) == palette::kWall);
}

TEST_CASE("agent at a cell center renders centered on that cell") {
  const Maze m = gen_regular_maze(5, 6, 6);
  const Geometry g = maze_geometry(m);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      const Frame f = render_frame(m, cell_center({r, c}), kZero);
      const Eigen::Vector2d expect = cell_center({r, c}) * g.cell_px;
      CHECK((blue_centroid(f) - expect).cwiseAbs().maxCoeff() <= 0.5);
    }
}

TEST_CASE("a large quadrant offset exceeds the fidelity threshold there") {
  const Maze m = gen_regular_maze(7, 4, 4);
  const Frame bg = render_background(m);
  const std::array<double, kBgBands> off{0, 60, 0, 0};
  const Frame f = render_frame(m, cell_center({3, 0}), off);
  int checked = 0;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      if (bg.rgb(x, y) != palette::kCorridor) continue;
      const int diff = std::abs(static_cast<int>(f.at(x, y, 0)) - bg.at(x, y, 0));
      if (quadrant(x, y, f.width, f.height) == 1) {
        CHECK(diff > 25);
        ++checked;
      } else if (f.rgb(x, y) != palette::kAgent) {
        CHECK(diff == 0);
      }
    }
  CHECK(checked > 0);
}

TEST_CASE("offsets saturate at the 8-bit range") {
  const Maze m = gen_regular_maze(7, 4, 4);
  const std::array<double, kBgBands> off{500, -500, 0, 0};
  const Frame f = render_frame(m, cell_center({3, 3}), off);
  CHECK(f.rgb(0, 0) == Rgb{255, 255, 255});
  CHECK(f.rgb(f.width - 2, 0) == Rgb{0, 0, 0});
}

TEST_CASE("out-of-extent positions are clamped and counted") {
  const Maze m = gen_regular_maze(1, 4, 4);
  RenderStats stats;
  const Frame f = render_frame(m, Eigen::Vector2d(-3.0, 9.0), kZero, &stats);
  CHECK(stats.clamped == 1);
  CHECK(locate_agent(f).has_value());
  TrajectoryLatent lat(3);
  lat.waypoints << 0.5, 0.5, 40, 0.5, 0.5, 0.5;
  const Video v = render_video(m, lat);
  CHECK(v.clamp_warnings == 1);
  CHECK(v.frames.size() == 3);
}

TEST_CASE("rendering is deterministic") {
  const Maze m = gen_regular_maze(3, 6, 6);
  const TrajectoryLatent d = make_demo(m, solve_optimal(m), 36);
  CHECK(render_video(m, d) == render_video(m, d));
  const NavScene s = gen_nav_scene(3);
  CHECK(render_reference(s) == render_reference(s));
}

TEST_CASE("PPM and video round trip") {
  const fs::path dir = scratch_dir("roundtrip");
  const Maze m = gen_trapfield(4, 5, 5, 0.2);
  const Video v = render_video(m, make_demo(m, solve_optimal(m), 12));
  write_ppm(v.frames[3], dir / "one.ppm");
  CHECK(read_ppm(dir / "one.ppm") == v.frames[3]);
  write_video(v, dir / "video");
  CHECK(read_video(dir / "video") == v);
}

TEST_CASE("PPM errors") {
  const fs::path dir = scratch_dir("errors");
  const auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidArgument;
  };
  CHECK(kind_of([&] { read_ppm(dir / "missing.ppm"); }) == ErrorKind::IoError);
  std::ofstream(dir / "p3.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK(kind_of([&] { read_ppm(dir / "p3.ppm"); }) == ErrorKind::FormatError);
  std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n4 4\n255\nabc";
  CHECK(kind_of([&] { read_ppm(dir / "short.ppm"); }) == ErrorKind::FormatError);
  CHECK(kind_of([&] { read_video(dir / "nothing"); }) == ErrorKind::IoError);
}

TEST_CASE("navigation frames") {
  const NavScene s = gen_nav_scene(11);
  const Frame bg = render_background(s);
  const Geometry g = nav_geometry(s);
  const Eigen::Vector2d lm = s.landmark * g.cell_px;
  CHECK(bg.rgb(static_cast<int>(lm.x()), static_cast<int>(lm.y())) == palette::kGoal);
  const Video ref = render_reference(s);
  CHECK(ref.frames.size() == static_cast<std::size_t>(s.reference.rows()));
  const Eigen::Vector2d start = s.reference.row(0).transpose() * g.cell_px;
  CHECK((blue_centroid(ref.frames.front()) - start).norm() <= 1.0);
}
