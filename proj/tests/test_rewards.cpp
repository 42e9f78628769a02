// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <functional>

#include "flowrl/envgen.hpp"
#include "flowrl/error.hpp"
#include "flowrl/render.hpp"
#include "flowrl/rewards.hpp"
#include "support.hpp"

using namespace flowrl;
using namespace flowrl::testing;

namespace {

// Every walk of orthogonal in-grid steps with up to `max_len` cells.
void for_each_walk(int w, int h, int max_len, const std::function<void(const CellPath&)>& fn) {
  CellPath cur;
  std::function<void()> rec = [&] {
    fn(cur);
    if (static_cast<int>(cur.size()) == max_len) return;
    std::vector<Cell> next;
    if (cur.empty()) {
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) next.push_back({r, c});
    } else {
      const Cell b = cur.back();
      for (const Cell n : {Cell{b.row - 1, b.col}, Cell{b.row, b.col + 1}, Cell{b.row + 1, b.col}, Cell{b.row, b.col - 1}})
        if (n.row >= 0 && n.row < h && n.col >= 0 && n.col < w) next.push_back(n);
    }
    for (const Cell& n : next) {
      cur.push_back(n);
      rec();
      cur.pop_back();
    }
  };
  rec();
}

Video demo_video(const Maze& m, int frames) { return render_video(m, make_demo(m, solve_optimal(m), frames)); }

}  // namespace

TEST_CASE("exact match and precision examples") {
  const CellPath gt = {{0, 0}, {0, 1}, {1, 1}, {1, 2}};
  CHECK(reward_em(gt, gt) == 1);
  CHECK(reward_pr(gt, gt) == 1.0);
  CellPath last = gt;
  last.back() = {2, 2};
  CHECK(reward_em(last, gt) == 0);
  CellPath longer = gt;
  longer.push_back({1, 3});
  CHECK(reward_em(longer, gt) == 0);
  CHECK(reward_pr(longer, gt) == 1.0);
  const CellPath two = {{0, 0}, {0, 1}, {2, 2}, {1, 2}};
  CHECK(reward_pr(two, gt) == 0.5);
  CHECK(reward_pr({{3, 3}, {0, 1}}, gt) == 0.0);
  CHECK(reward_pr({}, gt) == 0.0);
  CHECK(reward_em({}, gt) == 0);
}

TEST_CASE("EM and PR agree with a brute-force oracle") {
  long mismatches = 0, walks = 0;
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    const CellPath gt = solve_optimal(gen_regular_maze(seed, 4, 4));
    for_each_walk(4, 4, 5, [&](const CellPath& p) {
      ++walks;
      if (reward_em(p, gt) != em_oracle(p, gt) || reward_pr(p, gt) != pr_oracle(p, gt)) ++mismatches;
    });
  }
  CHECK(walks > 1000);
  CHECK(mismatches == 0);
}

TEST_CASE("exact match implies full precision") {
  const CellPath gt = solve_optimal(gen_regular_maze(3, 4, 4));
  for_each_walk(4, 4, 4, [&](const CellPath& p) {
    if (reward_em(p, gt) == 1) CHECK(reward_pr(p, gt) == 1.0);
    const double pr = reward_pr(p, gt) * static_cast<double>(gt.size());
    CHECK(pr == std::round(pr));
  });
}

TEST_CASE("fidelity frame indices") {
  CHECK(fidelity_frame_indices(36, 8) == std::vector<int>{0, 5, 10, 15, 20, 25, 30, 35});
  CHECK(fidelity_frame_indices(5, 1) == std::vector<int>{4});
  CHECK(fidelity_frame_indices(4, 8).size() == 8);
}

TEST_CASE("maze fidelity") {
  const Maze m = gen_regular_maze(4, 5, 5);
  const Frame bg = render_background(m);
  CHECK(reward_mf(demo_video(m, 20), bg) == 1.0);

  // Inverting every pixel of every frame drives fidelity to zero.
  Video inv = demo_video(m, 20);
  for (auto& f : inv.frames)
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(255 - p);
  // The inverted agent is no longer blue, so nothing is masked.
  CHECK(reward_mf(inv, bg) == 0.0);

  // One quadrant offset by +60: the changed share equals that quadrant's
  // corridor pixels among the unmasked pixels, counted from the frames.
  const CellPath path = solve_optimal(m);
  TrajectoryLatent lat = make_demo(m, path, 16);
  lat.bg_field.col(3).setConstant(60.0);
  const Video v = render_video(m, lat);
  double expect = 0.0;
  for (int idx : fidelity_frame_indices(16, 8)) {
    const Frame& f = v.frames[static_cast<std::size_t>(idx)];
    const Frame clean = render_frame(m, lat.waypoints.row(idx).transpose(), std::array<double, 4>{});
    int valid = 0, bad = 0;
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        const Eigen::Vector2d a = lat.waypoints.row(idx).transpose() * v.geometry.cell_px;
        const double dx = x + 0.5 - a.x(), dy = y + 0.5 - a.y();
        const double r = v.geometry.agent_radius_px + 1.0;
        if (dx * dx + dy * dy <= r * r) continue;
        ++valid;
        if (quadrant(x, y, f.width, f.height) == 3 && clean.rgb(x, y) == palette::kCorridor) ++bad;
      }
    expect += 1.0 - static_cast<double>(bad) / valid;
  }
  expect /= 8;
  CHECK(reward_mf(v, bg) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(reward_mf(v, bg) < 1.0);

  // Small offsets stay under the threshold.
  lat.bg_field.setConstant(5.0);
  CHECK(reward_mf(render_video(m, lat), bg) == 1.0);
}

TEST_CASE("combined game reward") {
  const Maze m = gen_regular_maze(8, 4, 4);
  const CellPath gt = solve_optimal(m);
  const Video v = demo_video(m, 16);
  const Frame bg = render_background(m);
  const RewardBreakdown perfect = reward_game_combined(gt, gt, v, bg);
  CHECK(perfect.combined == doctest::Approx(1.0));
  CHECK(perfect.component("em") == 1.0);
  CHECK(perfect.weights == std::vector<std::pair<std::string, double>>{{"alpha", 0.3}, {"beta", 0.5}, {"gamma", 0.2}});

  CellPath half(gt.begin(), gt.begin() + static_cast<long>(gt.size() / 2));
  half.push_back({9, 9});
  const RewardBreakdown partial = reward_game_combined(half, gt, v, bg);
  CHECK(partial.combined == doctest::Approx(0.5 * partial.component("pr") + 0.2));

  const RewardBreakdown em_only = reward_game_combined(half, gt, v, bg, {1.0, 0.0, 0.0});
  CHECK(em_only.combined == 0.0);
  CHECK_THROWS_AS(perfect.component("nope"), Error);
  CHECK_THROWS_AS(validate(GameRewardWeights{0.0, 0.0, 0.0}), Error);
  CHECK_THROWS_AS(validate(GameRewardWeights{-0.1, 0.9, 0.2}), Error);
}

TEST_CASE("degenerate fidelity mask") {
  const Maze m = gen_regular_maze(8, 3, 3);
  Video v = demo_video(m, 9);
  v.geometry.agent_radius_px = 100.0;
  try {
    reward_mf(v, render_background(m));
    FAIL("expected a degenerate mask");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateMask);
  }
}

TEST_CASE("frame embeddings") {
  const FrameEmbedder emb(7);
  const Maze m = gen_regular_maze(2, 5, 5);
  const Frame a = render_frame(m, cell_center({0, 0}), std::array<double, 4>{});
  const Frame b = render_frame(m, cell_center({4, 4}), std::array<double, 4>{});
  CHECK(emb(a).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(emb(a) == emb(a));
  CHECK(emb(a) == embed_frame(a, 7));
  CHECK(emb(a).dot(emb(b)) < 1.0);
  Frame black(32, 32);
  const Eigen::VectorXd z = emb(black);
  CHECK(z.norm() == doctest::Approx(1.0));
  CHECK(z == emb(Frame(32, 32)));
}

TEST_CASE("embedding interpolation") {
  Eigen::MatrixXd seq(3, 3);
  seq << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  CHECK(interp_embeddings(seq, 3) == seq);
  const Eigen::MatrixXd up = interp_embeddings(seq, 5);
  CHECK(up.col(0) == seq.col(0));
  CHECK(up.col(4) == seq.col(2));
  CHECK(up.col(1).isApprox(Eigen::Vector3d(1, 1, 0).normalized()));
  for (Eigen::Index t = 0; t < up.cols(); ++t) CHECK(up.col(t).norm() == doctest::Approx(1.0));
  Eigen::MatrixXd same(3, 2);
  same << 0.6, 0.6, 0.8, 0.8, 0, 0;
  const Eigen::MatrixXd s7 = interp_embeddings(same, 7);
  for (Eigen::Index t = 0; t < 7; ++t) CHECK(s7.col(t).isApprox(same.col(0), 1e-15));
}

TEST_CASE("cosine and endpoint rewards") {
  Eigen::MatrixXd e(2, 3), o(2, 3);
  e << 1, 1, 1, 0, 0, 0;
  o << 0, 0, 0, 1, 1, 1;
  CHECK(reward_cos(e, e) == 1.0);
  CHECK(reward_cos(e, o) == 0.0);
  CHECK(reward_cos(e, -e) == -1.0);
  CHECK(reward_end(e, e) == 1.0);
  Eigen::MatrixXd mixed = e;
  mixed.col(2) = o.col(2);
  CHECK(reward_end(mixed, e) == 0.5);
  CHECK(reward_end(o, e) == 0.0);
}

TEST_CASE("temporal progress") {
  Eigen::MatrixXd still(2, 4);
  still.colwise() = Eigen::Vector2d(1, 0);
  CHECK(cum_progress(still).isZero());
  CHECK(reward_temp(still, still) == 1.0);

  Eigen::MatrixXd line(1, 5);
  line << 0, 1, 2, 3, 4;
  const Eigen::VectorXd c = cum_progress(line);
  for (Eigen::Index t = 0; t < 4; ++t) CHECK(c(t) == doctest::Approx((t + 1) / 4.0).epsilon(1e-8));
  CHECK(c(3) <= 1.0);

  // Front-loaded against back-loaded motion of growing asymmetry.
  double prev = 1.0;
  for (double skew : {0.1, 0.3, 0.6, 0.9}) {
    Eigen::MatrixXd front(1, 5), back(1, 5);
    front << 0, 1 + skew, 2 + skew, 3 + skew, 4;
    back << 0, 1 - skew, 2 - skew, 3 - skew, 4;
    const double r = reward_temp(front, back);
    CHECK(r < prev);
    CHECK(r >= 0.0);
    prev = r;
  }
}

TEST_CASE("embedding reward") {
  const NavScene s = gen_nav_scene(5);
  const Video ref = render_reference(s);
  const RewardBreakdown same = reward_emb(ref, ref, {}, 7);
  CHECK(same.combined == 1.0);
  CHECK(same.weights == std::vector<std::pair<std::string, double>>{{"alpha_emb", 0.5}, {"beta_emb", 0.2}, {"gamma_emb", 0.3}});

  Video rev = ref;
  std::reverse(rev.frames.begin(), rev.frames.end());
  const RewardBreakdown r = reward_emb(rev, ref, {}, 7);
  CHECK(r.component("end") < 1.0);
  CHECK(r.component("cos") <= 1.0);
  CHECK(r.component("temp") <= 1.0);

  // Different lengths: the shorter sequence is interpolated.
  Video shorter = ref;
  shorter.frames.resize(ref.frames.size() / 2);
  const RewardBreakdown d = reward_emb(shorter, ref, {}, 7);
  CHECK(d.combined < 1.0);
}

TEST_CASE("reward registry") {
  const Maze m = gen_regular_maze(8, 4, 4);
  const CellPath gt = solve_optimal(m);
  const Video v = demo_video(m, 16);
  const Frame bg = render_background(m);
  const auto game = make_reward({});
  const SampleContext ctx{v, &m, &gt, &bg, nullptr};
  CHECK(game->evaluate(ctx).combined == reward_game_combined(gt, gt, v, bg).combined);
  RewardSpec em;
  em.name = "em_only";
  CHECK(make_reward(em)->evaluate(ctx).combined == 1.0);

  const NavScene s = gen_nav_scene(2);
  const Video ref = render_reference(s);
  RewardSpec e;
  e.name = "emb";
  const SampleContext nctx{ref, nullptr, nullptr, nullptr, &ref};
  CHECK(make_reward(e)->evaluate(nctx).combined == reward_emb(ref, ref, {}, 7).combined);

  for (const char* name : {"vlm_judge", "bogus"}) {
    RewardSpec bad;
    bad.name = name;
    try {
      make_reward(bad);
      FAIL("expected a config error");
    } catch (const Error& err) {
      CHECK(err.kind() == ErrorKind::ConfigError);
    }
  }
}
