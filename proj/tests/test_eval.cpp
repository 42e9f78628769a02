// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <sstream>

#include "flowrl/envgen.hpp"
#include "flowrl/error.hpp"
#include "flowrl/eval.hpp"
#include "flowrl/render.hpp"
#include "support.hpp"

using namespace flowrl;
using namespace flowrl::testing;

namespace {

std::vector<Task> maze_suite(const PolicyConfig& c, int count) {
  std::vector<Task> suite;
  for (int i = 0; i < count; ++i) {
    const int size = 4 + i % 3;
    suite.push_back(make_task(gen_regular_maze(300 + i, size, size), c));
  }
  return suite;
}

// The demo video of suite[0] and an agent-free video of suite[1].
std::vector<Video> demo_and_blank(const std::vector<Task>& suite, int frames) {
  std::vector<Video> videos;
  for (const Task& t : suite) videos.push_back(t.render(make_demo(*t.maze, t.optimal, frames)));
  for (Frame& f : videos[1].frames) f = suite[1].canonical_bg;
  return videos;
}

Path2<double> random_path(Rng& rng, Eigen::Index rows, double scale) {
  return scale * standard_normal(rng, rows * 2).reshaped(rows, 2);
}

}  // namespace

TEST_CASE("success rate") {
  Maze m(4, 1, MazeKind::Trapfield, 0);
  m.set_start({0, 0});
  m.set_goal({0, 3});
  const CellPath straight{{0, 0}, {0, 1}, {0, 2}, {0, 3}};
  CHECK(metric_sr(straight, m) == 1);
  CHECK(metric_sr({{0, 0}, {0, 1}}, m) == 0);
  CHECK(metric_sr({}, m) == 0);
  m.set_trap({0, 2}, true);
  CHECK(metric_sr(straight, m) == 0);
  // A trap only matters before the first goal visit.
  CHECK(metric_sr({{0, 0}, {0, 1}, {0, 3}, {0, 2}}, m) == 1);
}

TEST_CASE("step deviation") {
  const CellPath gt{{0, 0}, {0, 1}, {0, 2}, {1, 2}, {2, 2}};
  CHECK(*metric_sd(gt, gt, true) == 0.0);
  const CellPath detour{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 2}, {1, 2}, {2, 2}};
  CHECK(*metric_sd(detour, gt, true) == doctest::Approx(50.0));
  CHECK_FALSE(metric_sd(detour, gt, false).has_value());
  // Truncated at the first goal visit.
  CellPath wander = gt;
  wander.push_back({2, 1});
  wander.push_back({2, 2});
  CHECK(*metric_sd(wander, gt, true) == 0.0);
}

TEST_CASE("demo videos give the perfect report") {
  const PolicyConfig c = maze_policy_config(36, 6, 8);
  const std::vector<Task> suite = maze_suite(c, 9);
  std::vector<Video> videos;
  for (const Task& t : suite) videos.push_back(t.render(make_demo(*t.maze, t.optimal, c.frames)));
  const VrReport r = evaluate_vr(suite, videos);
  CHECK(r.em == 100.0);
  CHECK(r.sr == 100.0);
  CHECK(r.pr == 100.0);
  CHECK(r.mf == 100.0);
  REQUIRE(r.sd.has_value());
  CHECK(*r.sd == 0.0);
  CHECK(r.samples == 9);
  CHECK(r.excluded == 0);
  for (const VrSample& s : r.per_sample) CHECK((s.em == 1 && s.sr == 1 && s.pr == 1.0 && *s.sd == 0.0));
}

TEST_CASE("empty trajectories and excluded samples count as failures") {
  const PolicyConfig c = maze_policy_config(36, 6, 8);
  const std::vector<Task> suite = maze_suite(c, 2);
  const std::vector<Video> videos = demo_and_blank(suite, 36);
  const VrReport r = evaluate_vr(suite, videos);
  CHECK(r.em == 50.0);
  CHECK(r.sr == 50.0);
  CHECK(r.empty_trajectories == 1);
  CHECK(r.per_sample[1].em == 0);
  CHECK_FALSE(r.per_sample[1].sd.has_value());

  Policy broken = init_policy(c, 1);
  broken.params.setConstant(std::numeric_limits<double>::quiet_NaN());
  const VrReport bad = evaluate_vr(broken, suite, EvalConfig{.steps = 4});
  CHECK(bad.excluded == 2);
  CHECK(bad.samples == 0);
  CHECK(bad.em == 0.0);
  CHECK_FALSE(bad.sd.has_value());

  const VrReport mixed = aggregate_vr(r.per_sample, 2);
  CHECK(mixed.em == 25.0);
}

TEST_CASE("policy evaluation is deterministic and worker-count invariant") {
  const PolicyConfig c = maze_policy_config(36, 6, 16);
  const std::vector<Task> suite = maze_suite(c, 5);
  const Policy p = init_policy(c, 7);
  EvalConfig cfg{.steps = 10, .seed = 3};
  const auto a = to_json(evaluate_vr(p, suite, cfg), cfg).dump();
  cfg.workers = 3;
  CHECK(to_json(evaluate_vr(p, suite, cfg), cfg).dump() == a);
  const VrReport r = evaluate_vr(p, suite, cfg);
  for (double v : {r.em, r.sr, r.pr, r.mf}) CHECK((v >= 0.0 && v <= 100.0));
}

TEST_CASE("navigation metrics") {
  const Path2<double> gt = (Path2<double>(4, 2) << 0, 0, 1, 0, 2, 1, 3, 3).finished();
  const NavReport same = nav_metrics(gt, gt);
  CHECK(same.ade == 0.0);
  CHECK(same.fde == 0.0);
  CHECK(same.mr == 0.0);
  CHECK(same.se == 1.0);
  CHECK(same.ac == 1.0);
  CHECK(same.wo == 1.0);

  Path2<double> shifted = gt;
  shifted.col(0).array() += 1.0;
  CHECK(metric_ade(shifted, gt) == doctest::Approx(1.0));
  CHECK(metric_fde(shifted, gt) == doctest::Approx(1.0));
  shifted.col(0).array() += 2.0;
  CHECK(metric_ac(shifted, gt) == 0.0);

  CHECK(metric_mr(1.9) == 0);
  CHECK(metric_mr(2.0) == 0);
  CHECK(metric_mr(2.1) == 1);
  CHECK(metric_se(0.6) == doctest::Approx(std::exp(-0.5)));
  CHECK(NavWeights{}.ac + NavWeights{}.se == doctest::Approx(0.65));

  // Different lengths are resampled to the longer one.
  const Path2<double> coarse = (Path2<double>(2, 2) << 0, 0, 3, 3).finished();
  const Path2<double> fine = resample_path(coarse, 7);
  CHECK(fine.row(3).isApprox(Eigen::RowVector2d(1.5, 1.5)));
  CHECK(metric_ade(coarse, fine) == doctest::Approx(0.0));

  CHECK_THROWS_AS(metric_ade(Path2<double>(0, 2), gt), Error);
  CHECK_THROWS_AS(metric_ac(gt, Path2<double>(0, 2)), Error);
}

TEST_CASE("navigation metrics stay in range and the corridor is monotone") {
  Rng rng(5);
  std::uniform_int_distribution<int> len(1, 30);
  for (int trial = 0; trial < 1000; ++trial) {
    const Path2<double> p = random_path(rng, len(rng), 4.0), g = random_path(rng, len(rng), 4.0);
    const NavReport r = nav_metrics(p, g);
    CHECK(r.ade >= 0.0);
    CHECK(r.ade <= (resample_path(p, std::max(p.rows(), g.rows())) -
                    resample_path(g, std::max(p.rows(), g.rows())))
                           .rowwise()
                           .norm()
                           .maxCoeff() +
                       1e-12);
    CHECK((r.mr == 0.0 || r.mr == 1.0));
    CHECK((r.se > 0.0 && r.se <= 1.0));
    CHECK((r.ac >= 0.0 && r.ac <= 1.0));
    CHECK((r.wo >= 0.0 && r.wo <= 1.0));
    CHECK(metric_ac(p, g, Corridor{1.0, 2.0}) >= r.ac);
  }
}

TEST_CASE("navigation evaluation on a policy") {
  const PolicyConfig c = nav_policy_config(12, 16);
  std::vector<Task> suite;
  for (int i = 0; i < 3; ++i) suite.push_back(make_task(gen_nav_scene(40 + i), c));
  const NavReport r = evaluate_nav(init_policy(c, 2), suite, EvalConfig{.steps = 8});
  CHECK(r.samples + r.excluded == 3);
  for (double v : {r.mr, r.se, r.ac, r.wo}) CHECK((v >= 0.0 && v <= 1.0));
  const auto j = to_json(r, EvalConfig{}, NavOptions{});
  CHECK(j.contains("decisions"));
}

TEST_CASE("best of K is nested") {
  const PolicyConfig c = maze_policy_config(36, 6, 16);
  const std::vector<Task> suite = maze_suite(c, 3);
  const Policy p = init_policy(c, 4);
  const auto reward = make_reward({});
  const EvalConfig cfg{.steps = 10, .seed = 8};
  const std::vector<int> ks{1, 4, 8, 12, 16};
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const BestOfK b = best_of_k(p, suite[i], i, ks, *reward, cfg);
    REQUIRE(b.curve.size() == ks.size());
    REQUIRE(b.rewards.size() == 16);
    for (std::size_t k = 1; k < b.curve.size(); ++k) CHECK(b.curve[k] >= b.curve[k - 1]);
    CHECK(b.curve.back() == b.rewards[static_cast<std::size_t>(b.best_index)]);
    // K = 1 is the single evaluation sample.
    const Video single = generate_video(p, suite[i], cfg.steps, cfg.noise_scale, sample_seed(cfg.seed, i, 0));
    CHECK(b.curve.front() == reward->evaluate(suite[i].context(single)).combined);
    const std::vector<int> small{1, 4};
    const BestOfK prefix = best_of_k(p, suite[i], i, small, *reward, cfg);
    CHECK(prefix.curve[1] == b.curve[1]);
  }
  CHECK_THROWS_AS(best_of_k(p, suite[0], 0, std::vector<int>{0}, *reward, cfg), Error);
}

TEST_CASE("reports") {
  const PolicyConfig c = maze_policy_config(36, 6, 8);
  const std::vector<Task> suite = maze_suite(c, 2);
  const std::vector<Video> videos = demo_and_blank(suite, 36);
  const VrReport r = evaluate_vr(suite, videos);
  const auto j = to_json(r, EvalConfig{});
  CHECK(j["em"] == 50.0);
  CHECK(j["sd"] == 0.0);
  CHECK(j.contains("decisions"));
  CHECK(to_json(aggregate_vr({}, 1), EvalConfig{})["sd"] == "--");
  std::ostringstream csv;
  write_vr_csv(csv, r);
  int lines = 0;
  for (char ch : csv.str()) lines += ch == '\n';
  CHECK(lines >= 3);
}
