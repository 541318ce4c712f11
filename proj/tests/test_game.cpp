#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "nnod/dyn_game.hpp"
#include "nnod/rng.hpp"

using namespace nnod;

namespace {

std::shared_ptr<const Track> oval() {
  static const auto t = std::make_shared<const Track>(make_oval_track());
  return t;
}

// A random joint state with both cars near the track and roughly aligned.
Vec<double> random_racing_state(Rng& rng, const Track& t) {
  Vec<double> x(8);
  for (int c = 0; c < 2; ++c) {
    const double s = rng.uniform(0.0, t.length());
    const double w = t.halfwidth(s).first;
    const auto p = t.pose(s, rng.uniform(-1.2 * w, 1.2 * w));
    x[static_cast<std::size_t>(4 * c)] = p[0];
    x[static_cast<std::size_t>(4 * c + 1)] = p[1];
    x[static_cast<std::size_t>(4 * c + 2)] = t.heading(s) + rng.uniform(-0.3, 0.3);
    x[static_cast<std::size_t>(4 * c + 3)] = rng.uniform(0.5, 18.0);
  }
  return x;
}

Vec<double> random_controls(Rng& rng) {
  return {rng.uniform(-6.5, 3.5), rng.uniform(-0.5, 0.5), rng.uniform(-6.5, 3.5), rng.uniform(-0.5, 0.5)};
}

Vec<double> random_opinions(Rng& rng) {
  Vec<double> z(7);
  for (auto& v : z) v = rng.uniform(-2.0, 2.0);
  return z;
}

double rel_err(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

}  // namespace

TEST(Bicycle, Examples) {
  const std::array<double, 4> still{1.0, 2.0, 0.3, 0.0};
  EXPECT_EQ(bicycle_step(still, std::array<double, 2>{0.0, 0.2}, 0.1, 2.7), still);

  const auto straight = bicycle_step(std::array<double, 4>{0.0, 0.0, 0.0, 1.0}, std::array<double, 2>{0.0, 0.0}, 0.1, 2.7);
  EXPECT_DOUBLE_EQ(straight[0], 0.1);
  EXPECT_DOUBLE_EQ(straight[1], 0.0);
  EXPECT_DOUBLE_EQ(straight[2], 0.0);
  EXPECT_DOUBLE_EQ(straight[3], 1.0);

  const double wb = 2.7;
  const auto turn = bicycle_step(std::array<double, 4>{0.0, 0.0, 0.0, 1.0}, std::array<double, 2>{0.0, std::atan(wb)}, 0.1, wb);
  EXPECT_NEAR(turn[2], 0.1, 1e-15);

  const auto brake = bicycle_step(std::array<double, 4>{0.0, 0.0, 0.0, 0.2}, std::array<double, 2>{-5.0, 0.0}, 0.1, wb);
  EXPECT_EQ(brake[3], 0.0);
}

TEST(Bicycle, JacobiansAndCurvatureMatchFiniteDifferences) {
  Rng rng(31);
  const double dt = 0.1, wb = 2.7, h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    std::array<double, 4> s{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3), rng.uniform(1, 15)};
    std::array<double, 2> u{rng.uniform(-3, 3), rng.uniform(-0.4, 0.4)};
    Mat<double> a(4, 4), b(4, 2);
    bicycle_jacobians(s, u, dt, wb, a, b);
    auto f = [&](std::array<double, 6> v) {
      return bicycle_step(std::array<double, 4>{v[0], v[1], v[2], v[3]}, std::array<double, 2>{v[4], v[5]}, dt, wb);
    };
    const std::array<double, 6> v0{s[0], s[1], s[2], s[3], u[0], u[1]};
    Mat<double> jac(4, 6);
    for (int c = 0; c < 6; ++c) {
      auto vp = v0, vm = v0;
      vp[static_cast<std::size_t>(c)] += h;
      vm[static_cast<std::size_t>(c)] -= h;
      const auto fp = f(vp), fm = f(vm);
      for (int r = 0; r < 4; ++r) jac(r, c) = (fp[static_cast<std::size_t>(r)] - fm[static_cast<std::size_t>(r)]) / (2 * h);
    }
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) EXPECT_NEAR(a(r, c), jac(r, c), 1e-7);
      for (int c = 0; c < 2; ++c) EXPECT_NEAR(b(r, c), jac(r, 4 + c), 1e-7);
    }

    // Curvature: differentiate w'J by finite differences of the analytic Jacobians.
    const std::array<double, 4> w{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    Mat<double> hxx(4, 4), hxu(4, 2), huu(2, 2);
    bicycle_curvature(s, u, w.data(), dt, wb, hxx, hxu, huu, 0, 0);
    auto wj = [&](std::array<double, 6> v) {
      Mat<double> av(4, 4), bv(4, 2);
      bicycle_jacobians(std::array<double, 4>{v[0], v[1], v[2], v[3]}, std::array<double, 2>{v[4], v[5]}, dt, wb, av, bv);
      std::array<double, 6> g{};
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) g[static_cast<std::size_t>(c)] += w[static_cast<std::size_t>(r)] * av(r, c);
        for (int c = 0; c < 2; ++c) g[static_cast<std::size_t>(4 + c)] += w[static_cast<std::size_t>(r)] * bv(r, c);
      }
      return g;
    };
    for (int c = 0; c < 6; ++c) {
      auto vp = v0, vm = v0;
      vp[static_cast<std::size_t>(c)] += h;
      vm[static_cast<std::size_t>(c)] -= h;
      const auto gp = wj(vp), gm = wj(vm);
      for (int r = 0; r < 6; ++r) {
        const double fd = (gp[static_cast<std::size_t>(r)] - gm[static_cast<std::size_t>(r)]) / (2 * h);
        double an = 0.0;
        if (r < 4 && c < 4) an = hxx(r, c);
        else if (r < 4) an = hxu(r, c - 4);
        else if (c < 4) an = hxu(c, r - 4);
        else an = huu(r - 4, c - 4);
        EXPECT_NEAR(an, fd, 1e-6) << r << "," << c;
      }
    }
  }
}

TEST(OpinionatedCost, Examples) {
  EXPECT_DOUBLE_EQ(opinionated_stage_cost(2.0, {1.0, 3.0}, {0.5, -0.2}), 1.9);
  EXPECT_DOUBLE_EQ(opinionated_stage_cost(2.0, {1.0, 3.0}, {0.0, 0.0}), 2.0);
  EXPECT_DOUBLE_EQ(opinionated_stage_cost(2.0, {0.0, 0.0}, {4.0, -1.0}), 2.0);
  EXPECT_THROW(opinionated_stage_cost(2.0, {1.0}, {0.5, 0.1}), std::invalid_argument);
}

TEST(RacingGame, OpinionsEnterLinearlyThroughNonnegativeBases) {
  RacingGame g(oval(), RacingConfig{});
  Rng rng(32);
  const Vec<double> zero(7, 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_racing_state(rng, g.track());
    const auto u = random_controls(rng);
    const auto z = random_opinions(rng);
    g.anchor_at(random_racing_state(rng, g.track()));
    for (int i = 0; i < 2; ++i) {
      const auto terms = g.cost_terms(i, 0, x, u, z);
      double weighted = 0.0;
      const std::size_t off = i == 0 ? 0 : kEgoOptions;
      ASSERT_EQ(terms.basis.size(), i == 0 ? 4u : 3u);
      for (std::size_t l = 0; l < terms.basis.size(); ++l) {
        EXPECT_GE(terms.basis[l], 0.0);
        weighted += z[off + l] * terms.basis[l];
      }
      const double diff = g.stage_cost(i, 0, x, u, z) - g.stage_cost(i, 0, x, u, zero);
      EXPECT_NEAR(diff, weighted, 1e-9 * (1.0 + std::abs(weighted)));
    }
  }
  const Vec<double> short_z(3, 0.0);
  EXPECT_THROW(g.stage_cost(0, 0, Vec<double>(8, 1.0), Vec<double>(4, 0.0), short_z), std::invalid_argument);
}

TEST(RacingGame, OptionLabelsAreUniquePerPlayer) {
  const auto& labels = racing_option_labels();
  ASSERT_EQ(labels.size(), static_cast<std::size_t>(kRacingOpinionDim));
  for (std::size_t a = 0; a < labels.size(); ++a)
    for (std::size_t b = a + 1; b < labels.size(); ++b) EXPECT_NE(labels[a], labels[b]);
}

TEST(RacingGame, QuadraticizationMatchesFiniteDifferences) {
  RacingGame g(oval(), RacingConfig{});
  Rng rng(33);
  const double h = 1e-5;
  for (int trial = 0; trial < 25; ++trial) {
    const auto x = random_racing_state(rng, g.track());
    const auto u = random_controls(rng);
    const auto z = random_opinions(rng);
    g.anchor_at(x);
    for (int k : {0, g.horizon()}) {
      std::vector<StageQuadratic<double>> q;
      g.quadraticize(k, x, u, z, q);
      for (int i = 0; i < 2; ++i) {
        const auto& qi = q[static_cast<std::size_t>(i)];
        // Gradient against central differences of the cost.
        for (int j = 0; j < 8; ++j) {
          auto xp = x, xm = x;
          xp[static_cast<std::size_t>(j)] += h;
          xm[static_cast<std::size_t>(j)] -= h;
          const double fd = (g.stage_cost(i, k, xp, u, z) - g.stage_cost(i, k, xm, u, z)) / (2 * h);
          EXPECT_LT(rel_err(qi.l[static_cast<std::size_t>(j)], fd), 1e-5) << "player " << i << " state " << j;
          // Hessian column against differences of the analytic gradient.
          std::vector<StageQuadratic<double>> qp, qm;
          g.quadraticize(k, xp, u, z, qp);
          g.quadraticize(k, xm, u, z, qm);
          for (int r = 0; r < 8; ++r) {
            const auto sr = static_cast<std::size_t>(r);
            const double fh = (qp[static_cast<std::size_t>(i)].l[sr] - qm[static_cast<std::size_t>(i)].l[sr]) / (2 * h);
            EXPECT_LT(rel_err(qi.Q(r, j), fh), 1e-5) << "player " << i << " Q(" << r << "," << j << ")";
          }
        }
        if (k == g.horizon()) {
          EXPECT_EQ(max_abs(qi.R), 0.0);
          EXPECT_EQ(max_abs(qi.r), 0.0);
          continue;
        }
        for (int j = 0; j < 4; ++j) {
          auto up = u, um = u;
          up[static_cast<std::size_t>(j)] += h;
          um[static_cast<std::size_t>(j)] -= h;
          const double fd = (g.stage_cost(i, k, x, up, z) - g.stage_cost(i, k, x, um, z)) / (2 * h);
          EXPECT_LT(rel_err(qi.r[static_cast<std::size_t>(j)], fd), 1e-5);
          std::vector<StageQuadratic<double>> qp, qm;
          g.quadraticize(k, x, up, z, qp);
          g.quadraticize(k, x, um, z, qm);
          for (int r = 0; r < 4; ++r) {
            const auto sr = static_cast<std::size_t>(r);
            const double fh = (qp[static_cast<std::size_t>(i)].r[sr] - qm[static_cast<std::size_t>(i)].r[sr]) / (2 * h);
            EXPECT_LT(rel_err(qi.R(r, j), fh), 1e-5);
          }
        }
      }
    }
  }
}

TEST(RacingGame, LinearizationMatchesStep) {
  RacingGame g(oval(), RacingConfig{});
  Rng rng(34);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_racing_state(rng, g.track());
    auto u = random_controls(rng);
    u[0] = std::abs(u[0]);
    u[2] = std::abs(u[2]);
    Mat<double> a, b;
    g.linearize(0, x, u, a, b);
    for (int j = 0; j < 8; ++j) {
      auto xp = x, xm = x;
      xp[static_cast<std::size_t>(j)] += h;
      xm[static_cast<std::size_t>(j)] -= h;
      const auto fp = g.step(0, xp, u), fm = g.step(0, xm, u);
      for (int r = 0; r < 8; ++r)
        EXPECT_NEAR(a(r, j), (fp[static_cast<std::size_t>(r)] - fm[static_cast<std::size_t>(r)]) / (2 * h), 1e-7);
    }
  }
}

TEST(RacingGame, TapedQuadraticizationHasSameValues) {
  RacingGame g(oval(), RacingConfig{});
  Rng rng(35);
  const auto x = random_racing_state(rng, g.track());
  const auto u = random_controls(rng);
  const auto z = random_opinions(rng);
  g.anchor_at(x);
  std::vector<StageQuadratic<double>> qd;
  g.quadraticize(0, x, u, z, qd);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  Vec<Var> xv, uv, zv;
  for (double v : x) xv.push_back(Var::independent(v));
  for (double v : u) uv.push_back(Var::independent(v));
  for (double v : z) zv.push_back(Var::independent(v));
  std::vector<StageQuadratic<Var>> qv;
  g.quadraticize(0, xv, uv, zv, qv);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(max_abs_diff(values(qv[static_cast<std::size_t>(i)].Q), qd[static_cast<std::size_t>(i)].Q), 1e-12);
    EXPECT_LT(max_abs_diff(values(qv[static_cast<std::size_t>(i)].R), qd[static_cast<std::size_t>(i)].R), 1e-12);
  }
  // The gradient entry for the ego x position depends on the overtaking weight.
  const auto adj = tape.adjoints(qv[0].l[0].id);
  const double h = 1e-6;
  auto zp = z, zm = z;
  zp[0] += h;
  zm[0] -= h;
  std::vector<StageQuadratic<double>> qp, qm;
  g.quadraticize(0, x, u, zp, qp);
  g.quadraticize(0, x, u, zm, qm);
  EXPECT_NEAR(adj[static_cast<std::size_t>(zv[0].id)], (qp[0].l[0] - qm[0].l[0]) / (2 * h), 1e-6);
}

TEST(RacingConfig, JsonRoundTripAndValidation) {
  RacingConfig c;
  c.horizon = 12;
  c.speed_max = {20.0, 14.0};
  const auto back = racing_config_from_json(racing_config_to_json(c));
  EXPECT_EQ(back.horizon, 12);
  EXPECT_EQ(back.speed_max[1], 14.0);
  EXPECT_THROW(racing_config_from_json(nlohmann::json{{"dt", 0.0}}), std::invalid_argument);
  EXPECT_THROW(racing_config_from_json(nlohmann::json{{"horizon", 0}}), std::invalid_argument);
}
