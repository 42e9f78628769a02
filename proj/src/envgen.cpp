// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/envgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <queue>
#include <sstream>

#include "flowrl/error.hpp"
#include "flowrl/random.hpp"

namespace flowrl {

namespace {

constexpr std::array<Cell, 4> kSteps = {{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

bool adjacent(Cell a, Cell b) {
  return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1;
}

void check_dims(int width, int height) {
  if (width < 3 || height < 3) {
    fail(ErrorKind::InvalidArgument,
         "maze dimensions must be at least 3x3, got " + std::to_string(width) + "x" +
             std::to_string(height));
  }
}

// Returns the BFS predecessor table (-1 = unvisited, self index for the
// start).
std::vector<int> bfs_parents(const Maze& maze) {
  std::vector<int> parent(static_cast<std::size_t>(maze.width() * maze.height()), -1);
  std::queue<Cell> frontier;
  parent[maze.index(maze.start())] = maze.index(maze.start());
  frontier.push(maze.start());
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop();
    if (c == maze.goal()) break;
    for (Cell n : maze.open_neighbors(c)) {
      if (parent[maze.index(n)] != -1) continue;
      parent[maze.index(n)] = maze.index(c);
      frontier.push(n);
    }
  }
  return parent;
}

}  // namespace

const char* to_string(MazeKind kind) {
  switch (kind) {
    case MazeKind::Regular: return "regular";
    case MazeKind::Trapfield: return "trapfield";
  }
  return "unknown";
}

MazeKind maze_kind_from_string(const std::string& name) {
  if (name == "regular") return MazeKind::Regular;
  if (name == "trapfield") return MazeKind::Trapfield;
  fail(ErrorKind::FormatError, "unknown maze kind '" + name + "'");
}

Maze::Maze(int width, int height, MazeKind kind, std::uint64_t seed)
    : width_(width),
      height_(height),
      kind_(kind),
      seed_(seed),
      start_{0, 0},
      goal_{height - 1, width - 1},
      right_walls_(static_cast<std::size_t>(width * height), 0),
      down_walls_(static_cast<std::size_t>(width * height), 0),
      traps_(static_cast<std::size_t>(width * height), 0) {}

bool Maze::wall(Cell a, Cell b) const {
  if (!contains(a) || !contains(b) || !adjacent(a, b)) return true;
  if (b < a) std::swap(a, b);
  if (a.row == b.row) return right_walls_[index(a)] != 0;
  return down_walls_[index(a)] != 0;
}

void Maze::set_wall(Cell a, Cell b, bool present) {
  require(contains(a) && contains(b) && adjacent(a, b), "set_wall needs adjacent in-grid cells");
  if (b < a) std::swap(a, b);
  auto& bits = (a.row == b.row) ? right_walls_ : down_walls_;
  bits[index(a)] = present ? 1 : 0;
}

std::vector<Cell> Maze::traps() const {
  std::vector<Cell> out;
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      if (traps_[index({r, c})]) out.push_back({r, c});
  return out;
}

std::vector<Cell> Maze::open_neighbors(Cell c) const {
  std::vector<Cell> out;
  out.reserve(4);
  for (Cell d : kSteps) {
    Cell n{c.row + d.row, c.col + d.col};
    if (!wall(c, n) && !trap(n)) out.push_back(n);
  }
  return out;
}

void validate(const Maze& maze) {
  require(maze.width() >= 3 && maze.height() >= 3, "maze smaller than 3x3");
  require(maze.contains(maze.start()) && maze.contains(maze.goal()), "start/goal outside grid");
  require(maze.start() != maze.goal(), "start equals goal");
  require(!maze.trap(maze.start()) && !maze.trap(maze.goal()), "start or goal is a trap");
  require(shortest_path_cells(maze) > 0, "goal unreachable from start");
}

bool is_valid_path(const Maze& maze, const CellPath& path) {
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!maze.contains(path[i]) || maze.trap(path[i])) return false;
    if (i > 0 && maze.wall(path[i - 1], path[i])) return false;
  }
  return true;
}

Maze gen_regular_maze(std::uint64_t seed, int width, int height) {
  check_dims(width, height);
  Maze maze(width, height, MazeKind::Regular, seed);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (c + 1 < width) maze.set_wall({r, c}, {r, c + 1}, true);
      if (r + 1 < height) maze.set_wall({r, c}, {r + 1, c}, true);
    }
  }

  // Randomized depth-first carving from the start cell.
  Rng rng(seed);
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(width * height), 0);
  std::vector<Cell> stack{maze.start()};
  visited[maze.index(maze.start())] = 1;
  while (!stack.empty()) {
    Cell c = stack.back();
    std::vector<Cell> fresh;
    for (Cell d : kSteps) {
      Cell n{c.row + d.row, c.col + d.col};
      if (maze.contains(n) && !visited[maze.index(n)]) fresh.push_back(n);
    }
    if (fresh.empty()) {
      stack.pop_back();
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, fresh.size() - 1);
    Cell n = fresh[pick(rng)];
    maze.set_wall(c, n, false);
    visited[maze.index(n)] = 1;
    stack.push_back(n);
  }
  return maze;
}

Maze gen_trapfield(std::uint64_t seed, int width, int height, double trap_fraction) {
  check_dims(width, height);
  if (!(trap_fraction >= 0.0 && trap_fraction <= 0.4)) {
    fail(ErrorKind::InvalidArgument, "trap_fraction must lie in [0, 0.4]");
  }
  constexpr int kRetryBudget = 1000;
  const int cells = width * height;
  const int trap_count = static_cast<int>(std::lround(trap_fraction * cells));

  Rng rng(seed);
  for (int attempt = 0; attempt < kRetryBudget; ++attempt) {
    Maze maze(width, height, MazeKind::Trapfield, seed);
    std::vector<Cell> candidates;
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        if (Cell{r, c} != maze.start() && Cell{r, c} != maze.goal()) candidates.push_back({r, c});
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (int i = 0; i < trap_count; ++i) maze.set_trap(candidates[i], true);
    if (shortest_path_cells(maze) > 0) return maze;
  }
  fail(ErrorKind::GenerationFailure,
       "trapfield rejection sampling exhausted its retry budget (seed " + std::to_string(seed) +
           ")");
}

CellPath solve_optimal(const Maze& maze) {
  std::vector<int> parent = bfs_parents(maze);
  if (parent[maze.index(maze.goal())] == -1) {
    fail(ErrorKind::InvalidArgument, "maze has no start-goal path");
  }
  CellPath path;
  int at = maze.index(maze.goal());
  while (true) {
    path.push_back({at / maze.width(), at % maze.width()});
    if (at == parent[at]) break;
    at = parent[at];
  }
  std::reverse(path.begin(), path.end());
  return path;
}

int shortest_path_cells(const Maze& maze) {
  if (maze.trap(maze.start()) || maze.trap(maze.goal())) return 0;
  std::vector<int> parent = bfs_parents(maze);
  int at = maze.index(maze.goal());
  if (parent[at] == -1) return 0;
  int n = 1;
  while (at != parent[at]) {
    at = parent[at];
    ++n;
  }
  return n;
}

TrajectoryLatent make_demo(const Maze& maze, const CellPath& path, int frames) {
  require(!path.empty(), "make_demo needs a non-empty path");
  if (frames < static_cast<int>(path.size())) {
    fail(ErrorKind::InvalidArgument, "frame count " + std::to_string(frames) +
                                         " is shorter than the path (" +
                                         std::to_string(path.size()) + " cells)");
  }
  (void)maze;
  TrajectoryLatent latent(frames);
  const int n = static_cast<int>(path.size());
  for (int k = 0; k < frames; ++k) {
    // Nearest path index to the exact rational position k (n - 1) / (F - 1),
    // halves rounded up, so every frame sits on a cell center.
    const long num = static_cast<long>(k) * (n - 1);
    const long den = std::max(frames - 1, 1);
    const int i = static_cast<int>((2 * num + den) / (2 * den));
    latent.waypoints.row(k) = cell_center(path[static_cast<std::size_t>(i)]).transpose();
  }
  return latent;
}

// ---------------------------------------------------------------------------
// Serialization

void write_maze(std::ostream& out, const Maze& maze) {
  out << "MAZE " << to_string(maze.kind()) << ' ' << maze.width() << ' ' << maze.height() << ' '
      << maze.seed() << '\n';
  out << "RIGHT\n";
  for (int r = 0; r < maze.height(); ++r) {
    for (int c = 0; c + 1 < maze.width(); ++c) out << (maze.wall({r, c}, {r, c + 1}) ? '1' : '0');
    out << '\n';
  }
  out << "DOWN\n";
  for (int r = 0; r + 1 < maze.height(); ++r) {
    for (int c = 0; c < maze.width(); ++c) out << (maze.wall({r, c}, {r + 1, c}) ? '1' : '0');
    out << '\n';
  }
  out << "START " << maze.start().row << ' ' << maze.start().col << '\n';
  out << "GOAL " << maze.goal().row << ' ' << maze.goal().col << '\n';
  for (Cell t : maze.traps()) out << "TRAP " << t.row << ' ' << t.col << '\n';
}

namespace {

std::string expect_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::FormatError, std::string("maze: missing ") + what);
  return line;
}

std::vector<bool> parse_bits(const std::string& line, int n) {
  if (static_cast<int>(line.size()) != n) {
    fail(ErrorKind::FormatError, "maze: wall row '" + line + "' has wrong length");
  }
  std::vector<bool> bits;
  for (char ch : line) {
    if (ch != '0' && ch != '1') fail(ErrorKind::FormatError, "maze: bad wall bit in '" + line + "'");
    bits.push_back(ch == '1');
  }
  return bits;
}

}  // namespace

Maze read_maze(std::istream& in) {
  std::istringstream header(expect_line(in, "header"));
  std::string tag, kind;
  int w = 0, h = 0;
  std::uint64_t seed = 0;
  if (!(header >> tag >> kind >> w >> h >> seed) || tag != "MAZE" || w < 1 || h < 1) {
    fail(ErrorKind::FormatError, "maze: malformed header");
  }
  Maze maze(w, h, maze_kind_from_string(kind), seed);
  if (expect_line(in, "RIGHT") != "RIGHT") fail(ErrorKind::FormatError, "maze: expected RIGHT");
  for (int r = 0; r < h; ++r) {
    auto bits = parse_bits(expect_line(in, "right-wall row"), w - 1);
    for (int c = 0; c + 1 < w; ++c) maze.set_wall({r, c}, {r, c + 1}, bits[c]);
  }
  if (expect_line(in, "DOWN") != "DOWN") fail(ErrorKind::FormatError, "maze: expected DOWN");
  for (int r = 0; r + 1 < h; ++r) {
    auto bits = parse_bits(expect_line(in, "down-wall row"), w);
    for (int c = 0; c < w; ++c) maze.set_wall({r, c}, {r + 1, c}, bits[c]);
  }
  std::string line;
  bool have_start = false, have_goal = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    Cell c;
    if (!(ls >> key >> c.row >> c.col) || !maze.contains(c)) {
      fail(ErrorKind::FormatError, "maze: bad cell line '" + line + "'");
    }
    if (key == "START") {
      maze.set_start(c);
      have_start = true;
    } else if (key == "GOAL") {
      maze.set_goal(c);
      have_goal = true;
    } else if (key == "TRAP") {
      maze.set_trap(c, true);
    } else {
      fail(ErrorKind::FormatError, "maze: unknown record '" + key + "'");
    }
  }
  if (!have_start || !have_goal) fail(ErrorKind::FormatError, "maze: missing START or GOAL");
  return maze;
}

void save_maze(const std::string& path, const Maze& maze) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path + " for writing");
  write_maze(out, maze);
  if (!out) fail(ErrorKind::IoError, "write failed: " + path);
}

Maze load_maze(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  return read_maze(in);
}

void write_latent(std::ostream& out, const TrajectoryLatent& latent) {
  out << "LATENT " << latent.frames() << '\n' << std::setprecision(17);
  for (Eigen::Index k = 0; k < latent.frames(); ++k) {
    out << latent.waypoints(k, 0) << ' ' << latent.waypoints(k, 1);
    for (int b = 0; b < kBgBands; ++b) out << ' ' << latent.bg_field(k, b);
    out << '\n';
  }
}

TrajectoryLatent read_latent(std::istream& in) {
  std::string tag;
  Eigen::Index frames = 0;
  if (!(in >> tag >> frames) || tag != "LATENT" || frames < 1) {
    fail(ErrorKind::FormatError, "latent: malformed header");
  }
  TrajectoryLatent latent(frames);
  for (Eigen::Index k = 0; k < frames; ++k) {
    if (!(in >> latent.waypoints(k, 0) >> latent.waypoints(k, 1))) {
      fail(ErrorKind::FormatError, "latent: truncated at frame " + std::to_string(k));
    }
    for (int b = 0; b < kBgBands; ++b) {
      if (!(in >> latent.bg_field(k, b))) {
        fail(ErrorKind::FormatError, "latent: truncated at frame " + std::to_string(k));
      }
    }
  }
  return latent;
}

// ---------------------------------------------------------------------------
// Navigation scenes

namespace {

constexpr double kClearance = 0.3;  // rollout-to-obstacle margin, meters
constexpr double kWallMargin = 0.4;

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b, Eigen::Vector2d* closest = nullptr) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double s = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  const Eigen::Vector2d q = a + s * ab;
  if (closest) *closest = q;
  return (p - q).norm();
}

bool segment_clear(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                   const std::vector<Disc>& obstacles, double clearance) {
  for (const Disc& d : obstacles)
    if (segment_distance(d.center, a, b) <= d.radius + clearance) return false;
  return true;
}

// Inserts detour points around the first obstacle blocking each segment.
std::vector<Eigen::Vector2d> plan_polyline(const Eigen::Vector2d& from, const Eigen::Vector2d& to,
                                           const std::vector<Disc>& obstacles, int depth) {
  if (depth > 4 || segment_clear(from, to, obstacles, kClearance)) return {from, to};
  const Disc* blocking = nullptr;
  double best = 1e300;
  for (const Disc& d : obstacles) {
    if (segment_distance(d.center, from, to) > d.radius + kClearance) continue;
    const double along = (d.center - from).dot((to - from).normalized());
    if (along < best) {
      best = along;
      blocking = &d;
    }
  }
  Eigen::Vector2d closest;
  segment_distance(blocking->center, from, to, &closest);
  Eigen::Vector2d away = closest - blocking->center;
  if (away.norm() < 1e-9) {
    const Eigen::Vector2d dir = (to - from).normalized();
    away = Eigen::Vector2d(-dir.y(), dir.x());
  }
  Eigen::Vector2d detour =
      blocking->center + away.normalized() * (blocking->radius + kClearance + 0.35);
  detour = detour.cwiseMax(kWallMargin).cwiseMin(kRoomSize - kWallMargin);
  auto head = plan_polyline(from, detour, obstacles, depth + 1);
  auto tail = plan_polyline(detour, to, obstacles, depth + 1);
  head.insert(head.end(), tail.begin() + 1, tail.end());
  return head;
}

Eigen::Matrix<double, Eigen::Dynamic, 2> resample_polyline(
    const std::vector<Eigen::Vector2d>& pts, int count) {
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < pts.size(); ++i)
    cumulative.push_back(cumulative.back() + (pts[i] - pts[i - 1]).norm());
  const double total = cumulative.back();
  Eigen::Matrix<double, Eigen::Dynamic, 2> out(count, 2);
  std::size_t seg = 0;
  for (int k = 0; k < count; ++k) {
    const double s = total * k / (count - 1);
    while (seg + 2 < pts.size() && cumulative[seg + 1] < s) ++seg;
    const double len = cumulative[seg + 1] - cumulative[seg];
    const double f = len > 0 ? std::clamp((s - cumulative[seg]) / len, 0.0, 1.0) : 0.0;
    out.row(k) = ((1.0 - f) * pts[seg] + f * pts[seg + 1]).transpose();
  }
  out.row(count - 1) = pts.back().transpose();
  return out;
}

}  // namespace

bool operator==(const NavScene& a, const NavScene& b) {
  return a.seed == b.seed && a.extent == b.extent && a.obstacles == b.obstacles &&
         a.landmark == b.landmark && a.reference.rows() == b.reference.rows() &&
         a.reference == b.reference;
}

NavScene gen_nav_scene(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> coord(1.0, kRoomSize - 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> obstacle_count(0, kMaxObstacles);
  std::uniform_int_distribution<int> length(20, 40);

  for (int attempt = 0;; ++attempt) {
    NavScene scene;
    scene.seed = seed;
    Eigen::Vector2d start(coord(rng), coord(rng));
    scene.landmark = Eigen::Vector2d(coord(rng), coord(rng));
    const int steps = length(rng);
    const int n_obs = obstacle_count(rng);
    if ((scene.landmark - start).norm() < 4.0) continue;

    // Obstacles are dropped near the straight line so that detours happen.
    for (int i = 0; i < n_obs; ++i) {
      for (int tries = 0; tries < 50; ++tries) {
        Disc d;
        d.radius = 0.5 + 0.5 * unit(rng);
        const double along = 0.25 + 0.5 * unit(rng);
        const Eigen::Vector2d dir = (scene.landmark - start).normalized();
        const Eigen::Vector2d normal(-dir.y(), dir.x());
        d.center = start + along * (scene.landmark - start) + (unit(rng) - 0.5) * 2.0 * normal;
        const bool inside = (d.center.array() - d.radius > kWallMargin).all() &&
                            (d.center.array() + d.radius < kRoomSize - kWallMargin).all();
        bool ok = inside && (d.center - start).norm() > d.radius + 0.8 &&
                  (d.center - scene.landmark).norm() > d.radius + 0.8;
        for (const Disc& o : scene.obstacles)
          ok = ok && (o.center - d.center).norm() > o.radius + d.radius + 1.2;
        if (ok) {
          scene.obstacles.push_back(d);
          break;
        }
      }
    }

    auto polyline = plan_polyline(start, scene.landmark, scene.obstacles, 0);
    bool clear = true;
    for (std::size_t i = 1; i < polyline.size(); ++i)
      clear = clear && segment_clear(polyline[i - 1], polyline[i], scene.obstacles, 0.05);
    if (!clear) continue;
    scene.reference = resample_polyline(polyline, steps);
    try {
      validate(scene);
    } catch (const Error&) {
      continue;
    }
    return scene;
  }
}

void validate(const NavScene& scene) {
  const auto& ref = scene.reference;
  require(ref.rows() >= 2, "reference rollout needs at least two positions");
  require((ref.array() >= 0.0).all() && (ref.array() <= scene.extent).all(),
          "reference rollout leaves the room");
  for (Eigen::Index k = 0; k < ref.rows(); ++k)
    for (const Disc& d : scene.obstacles)
      require((ref.row(k).transpose() - d.center).norm() > d.radius,
              "reference rollout enters an obstacle");
  for (Eigen::Index k = 1; k < ref.rows(); ++k)
    require(segment_clear(ref.row(k - 1).transpose(), ref.row(k).transpose(), scene.obstacles, 0.0),
            "reference rollout crosses an obstacle");
  require((ref.row(ref.rows() - 1).transpose() - scene.landmark).norm() <= kLandmarkTolerance,
          "reference rollout does not reach the landmark");
}

void write_nav_scene(std::ostream& out, const NavScene& scene) {
  out << std::setprecision(17);
  out << "NAV " << scene.seed << '\n';
  out << "EXTENT " << scene.extent << '\n';
  out << "LANDMARK " << scene.landmark.x() << ' ' << scene.landmark.y() << '\n';
  for (const Disc& d : scene.obstacles)
    out << "OBSTACLE " << d.center.x() << ' ' << d.center.y() << ' ' << d.radius << '\n';
  out << "REFERENCE " << scene.reference.rows() << '\n';
  for (Eigen::Index k = 0; k < scene.reference.rows(); ++k)
    out << scene.reference(k, 0) << ' ' << scene.reference(k, 1) << '\n';
}

NavScene read_nav_scene(std::istream& in) {
  NavScene scene;
  std::string key;
  if (!(in >> key >> scene.seed) || key != "NAV") fail(ErrorKind::FormatError, "nav: bad header");
  while (in >> key) {
    if (key == "EXTENT") {
      in >> scene.extent;
    } else if (key == "LANDMARK") {
      in >> scene.landmark.x() >> scene.landmark.y();
    } else if (key == "OBSTACLE") {
      Disc d;
      in >> d.center.x() >> d.center.y() >> d.radius;
      scene.obstacles.push_back(d);
    } else if (key == "REFERENCE") {
      Eigen::Index n = 0;
      in >> n;
      if (!in || n < 2) fail(ErrorKind::FormatError, "nav: bad reference length");
      scene.reference.resize(n, 2);
      for (Eigen::Index k = 0; k < n; ++k) in >> scene.reference(k, 0) >> scene.reference(k, 1);
    } else {
      fail(ErrorKind::FormatError, "nav: unknown record '" + key + "'");
    }
    if (!in) fail(ErrorKind::FormatError, "nav: truncated record '" + key + "'");
  }
  return scene;
}

}  // namespace flowrl
