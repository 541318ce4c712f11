#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "nnod/rng.hpp"
#include "nnod/track.hpp"

using namespace nnod;

TEST(Track, StraightProjection) {
  const Track t = make_straight_track(50.0, 4.0);
  const auto p = t.project(3.0, 0.4);
  EXPECT_NEAR(p.s, 3.0, 1e-12);
  EXPECT_NEAR(p.e, 0.4, 1e-12);
  const auto q = t.project(12.0, -1.5);
  EXPECT_NEAR(q.s, 12.0, 1e-12);
  EXPECT_NEAR(q.e, -1.5, 1e-12);
  EXPECT_NEAR(t.length(), 50.0, 1e-12);
}

TEST(Track, SamplesProjectOntoThemselves) {
  const Track t = make_chicane_track();
  for (const auto& smp : t.samples()) {
    const auto p = t.project(smp.x, smp.y);
    EXPECT_NEAR(p.e, 0.0, 1e-9);
    EXPECT_NEAR(std::abs(t.gap(p.s, smp.s)), 0.0, 1e-9);
  }
}

TEST(Track, OvalGeometry) {
  const Track t = make_oval_track(80.0, 30.0, 6.0);
  EXPECT_TRUE(t.closed());
  EXPECT_NEAR(t.length(), 160.0 + 2.0 * std::numbers::pi * 30.0, 0.05);
  // Clockwise: the first corner turns right.
  EXPECT_NEAR(t.curvature(80.0 + 0.5 * std::numbers::pi * 30.0), -1.0 / 30.0, 1e-3);
  EXPECT_NEAR(t.curvature(40.0), 0.0, 1e-3);
  // A point inside the loop lies to the right of the centerline.
  EXPECT_LT(t.project(40.0, -10.0).e, 0.0);
}

TEST(Track, SeamWrapsArcLength) {
  const Track t = make_oval_track();
  const auto before = t.project(-0.5, 0.3);
  EXPECT_GE(before.s, 0.0);
  EXPECT_LT(before.s, t.length());
  EXPECT_NEAR(t.gap(before.s, 0.0), -0.5, 2e-2);
  const auto after = t.project(0.5, 0.3);
  EXPECT_NEAR(after.s, 0.5, 2e-2);
  EXPECT_NEAR(t.gap(after.s, before.s), 1.0, 2e-2);
}

TEST(Track, BoundaryPointsHaveOffsetEqualToHalfwidth) {
  for (const Track& t : {make_oval_track(), make_chicane_track(), make_straight_track(40.0, 3.0)}) {
    Rng rng(5);
    for (int k = 0; k < 50; ++k) {
      const double s = rng.uniform(0.0, t.length());
      const double w = t.halfwidth(s).first;
      for (double side : {-1.0, 1.0}) {
        const auto pose = t.pose(s, side * w);
        const auto p = t.project(pose[0], pose[1]);
        EXPECT_NEAR(std::abs(p.e), w, 1e-6);
        EXPECT_NEAR(p.e * side, w, 1e-6);
        EXPECT_NEAR(t.gap(p.s, s), 0.0, 1e-6);
      }
    }
  }
}

TEST(TrackFrame, DerivativesMatchFiniteDifferences) {
  const Track t = make_chicane_track();
  Rng rng(6);
  const double h = 1e-4;
  for (int k = 0; k < 40; ++k) {
    const double s = rng.uniform(0.0, t.length());
    const auto pose = t.pose(s, rng.uniform(-5.0, 5.0));
    const double x = pose[0], y = pose[1];
    const auto f = track_frame(t, x, y);
    auto sv = [&](double a, double b) { return track_frame(t, a, b).s; };
    auto ev = [&](double a, double b) { return track_frame(t, a, b).e; };
    auto grad = [&](auto fn, double a, double b) {
      return std::array<double, 2>{(t.gap(fn(a + h, b), fn(a - h, b))) / (2 * h), (t.gap(fn(a, b + h), fn(a, b - h))) / (2 * h)};
    };
    const auto gs = grad(sv, x, y);
    const auto ge = grad(ev, x, y);
    EXPECT_NEAR(f.ds[0], gs[0], 1e-6);
    EXPECT_NEAR(f.ds[1], gs[1], 1e-6);
    EXPECT_NEAR(f.de[0], ge[0], 1e-6);
    EXPECT_NEAR(f.de[1], ge[1], 1e-6);
    // Hessians from differences of the analytic gradients.
    const auto fx = track_frame(t, x + h, y), fmx = track_frame(t, x - h, y);
    const auto fy = track_frame(t, x, y + h), fmy = track_frame(t, x, y - h);
    EXPECT_NEAR(f.dds[0], (fx.ds[0] - fmx.ds[0]) / (2 * h), 1e-6);
    EXPECT_NEAR(f.dds[1], (fy.ds[0] - fmy.ds[0]) / (2 * h), 1e-6);
    EXPECT_NEAR(f.dds[2], (fy.ds[1] - fmy.ds[1]) / (2 * h), 1e-6);
    EXPECT_NEAR(f.dde[0], (fx.de[0] - fmx.de[0]) / (2 * h), 1e-6);
    EXPECT_NEAR(f.dde[1], (fy.de[0] - fmy.de[0]) / (2 * h), 1e-6);
    EXPECT_NEAR(f.dde[2], (fy.de[1] - fmy.de[1]) / (2 * h), 1e-6);
  }
}

TEST(TrackFrame, TapedFrameDifferentiatesItsDerivativeFields) {
  const Track t = make_oval_track();
  const auto pose = t.pose(95.0, 2.0);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Var x = Var::independent(pose[0]);
  const Var y = Var::independent(pose[1]);
  const auto f = track_frame(t, x, y);
  const double h = 1e-5;
  // Fields checked: s, e, ds_x, de_y, dds_xy.
  const std::vector<Var> outs{f.s, f.e, f.ds[0], f.de[1], f.dds[1]};
  auto field = [&](int which, double a, double b) {
    const auto g = track_frame(t, a, b);
    const double vals[] = {g.s, g.e, g.ds[0], g.de[1], g.dds[1]};
    return vals[which];
  };
  for (int w = 0; w < 5; ++w) {
    const auto adj = tape.adjoints(outs[static_cast<std::size_t>(w)].id);
    const double fdx = (field(w, pose[0] + h, pose[1]) - field(w, pose[0] - h, pose[1])) / (2 * h);
    const double fdy = (field(w, pose[0], pose[1] + h) - field(w, pose[0], pose[1] - h)) / (2 * h);
    const double scale = 1.0 + std::abs(fdx) + std::abs(fdy);
    EXPECT_NEAR(adj[static_cast<std::size_t>(x.id)], fdx, 1e-5 * scale) << "field " << w;
    EXPECT_NEAR(adj[static_cast<std::size_t>(y.id)], fdy, 1e-5 * scale) << "field " << w;
  }
}

TEST(Track, CsvRoundTrip) {
  const Track t = make_chicane_track();
  const auto path = (std::filesystem::temp_directory_path() / "nnod_track_roundtrip.csv").string();
  save_track_csv(t, path);
  const Track u = load_track_csv(path);
  EXPECT_EQ(u.closed(), t.closed());
  EXPECT_NEAR(u.length(), t.length(), 1e-9);
  const auto a = t.project(10.0, 3.0), b = u.project(10.0, 3.0);
  EXPECT_NEAR(a.s, b.s, 1e-9);
  EXPECT_NEAR(a.e, b.e, 1e-9);
  std::filesystem::remove(path);
}

TEST(Track, RejectsInvalidSamples) {
  EXPECT_THROW(Track({{0, 0, 0, 1}, {0, 1, 0, 1}}, false), std::invalid_argument);
  EXPECT_THROW(Track({{0, 0, 0, 1}, {1, 1, 0, 0}}, false), std::invalid_argument);
  EXPECT_THROW(Track({{0, 0, 0, 1}}, false), std::invalid_argument);
}
