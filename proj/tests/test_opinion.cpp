#include <gtest/gtest.h>

#include <cmath>

#include "nnod/nod_json.hpp"
#include "nnod/opinion.hpp"
#include "random_instances.hpp"

using namespace nnod;
using nnod::testing::random_params;
using nnod::testing::random_topology;
using nnod::testing::random_vector;
using nnod::testing::scalar_params;

TEST(Saturation, ValueAndSlopeAtOrigin) {
  for (Saturation s : {Saturation::kTanh, Saturation::kScaledSigmoid}) {
    EXPECT_EQ(saturation_eval(s, 0.0), 0.0);
    const double h = 1e-5;
    EXPECT_NEAR((saturation_eval(s, h) - saturation_eval(s, -h)) / (2 * h), 1.0, 1e-8);
    for (double v : {-50.0, -3.0, 0.7, 40.0}) EXPECT_LE(std::abs(saturation_eval(s, v)), saturation_bound(s));
  }
}

TEST(Saturation, TanhReferenceValue) {
  // tanh(x) = (e^{2x} - 1) / (e^{2x} + 1).
  const double e = std::exp(0.4);
  EXPECT_NEAR(saturation_eval(Saturation::kTanh, 0.2), (e - 1.0) / (e + 1.0), 1e-15);
  EXPECT_NEAR(saturation_eval(Saturation::kTanh, 0.2), 0.197375320224904, 1e-14);
}

TEST(Saturation, RejectsNonFiniteInput) {
  EXPECT_THROW(saturation_eval(Saturation::kTanh, std::nan("")), std::domain_error);
  EXPECT_THROW(saturation_eval(Saturation::kTanh, INFINITY), std::domain_error);
}

TEST(NodRate, ScalarExamples) {
  const auto bias_only = scalar_params(1.0, 0.5, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(nod_rate(std::vector<double>{0.0}, bias_only)[0], 0.5);
  const auto p = scalar_params(1.0, 0.0, 1.0, 2.0);
  const double expected = -0.1 + std::tanh(0.2);
  EXPECT_NEAR(nod_rate(std::vector<double>{0.1}, p)[0], expected, 1e-15);
  EXPECT_NEAR(expected, 0.097375320224904, 1e-14);
}

TEST(NodRate, TwoAgentHandComputation) {
  NODParams p = NODParams::zeros(Topology({2, 1}));
  p.damping = {1.0, 2.0, 0.5};
  p.bias = {0.1, -0.2, 0.0};
  p.self_gain = {0.5, 1.0, 0.3};
  p.attention = 1.5;
  p.beta(0)(0, 1) = 0.4;
  p.beta(0)(1, 0) = 0.6;
  p.gamma(0, 1)[0] = -0.7;
  p.gamma(1, 0)[0] = 0.9;
  validate(p);
  const std::vector<double> z{0.2, -0.1, 0.3};
  const auto r = nod_rate(z, p);
  // Agent 0 option 0: S1(0.5*0.2 - 0.7*0.3) + S2(0.4*(-0.1)).
  EXPECT_NEAR(r[0], -0.2 + 0.1 + 1.5 * (std::tanh(0.1 - 0.21) + std::tanh(-0.04)), 1e-15);
  // Agent 0 option 1 has no counterpart in agent 1: S1(-0.1) + S2(0.6*0.2).
  EXPECT_NEAR(r[1], 0.2 - 0.2 + 1.5 * (std::tanh(-0.1) + std::tanh(0.12)), 1e-15);
  EXPECT_NEAR(r[2], -0.15 + 1.5 * std::tanh(0.09 + 0.18), 1e-15);
}

TEST(NodRate, TopologyMismatchThrows) {
  const auto p = scalar_params(1.0, 0.0, 1.0, 1.0);
  EXPECT_THROW(nod_rate(OpinionState::zeros(Topology({2})), p), std::invalid_argument);
  EXPECT_THROW(nod_rate(std::vector<double>{0.0, 0.0}, p), std::invalid_argument);
}

TEST(NodStep, EulerExampleAndErrors) {
  const auto p = scalar_params(1.0, 0.0, 1.0, 2.0);
  const auto z = nod_step(std::vector<double>{0.1}, p, 0.1);
  EXPECT_NEAR(z[0], 0.1 + 0.1 * (-0.1 + std::tanh(0.2)), 1e-15);
  EXPECT_NEAR(z[0], 0.1097375320224904, 1e-14);
  EXPECT_THROW(nod_step(std::vector<double>{0.1}, p, 0.0), std::invalid_argument);
  EXPECT_THROW(nod_step(std::vector<double>{0.1}, p, -1.0), std::invalid_argument);
  EXPECT_EQ(nod_step(std::vector<double>{0.0}, p, 0.1)[0], 0.0);
}

TEST(NodProperties, NeutralOpinionIsExactFixedPoint) {
  Rng rng(11);
  for (int k = 0; k < 100; ++k) {
    auto p = random_params(rng, random_topology(rng, 4, 4));
    std::fill(p.bias.begin(), p.bias.end(), 0.0);
    const auto r = nod_rate(std::vector<double>(p.bias.size(), 0.0), p);
    for (double x : r) EXPECT_EQ(x, 0.0);
  }
}

TEST(NodProperties, TrajectoriesStayBounded) {
  Rng rng(12);
  for (int k = 0; k < 100; ++k) {
    auto p = random_params(rng, random_topology(rng));
    std::fill(p.bias.begin(), p.bias.end(), 0.0);
    const auto z0 = random_vector(rng, p.bias.size(), 3.0);
    double dmin = 1e300;
    for (double d : p.damping) dmin = std::min(dmin, d);
    const double bound = std::max(max_abs(z0), p.attention * p.topology.max_options() / dmin);
    const auto traj = simulate_opinions(OpinionState(p.topology, z0), {p}, 0.01, 500);
    for (const auto& z : traj) EXPECT_LE(max_abs(z.values), bound + 1e-12);
  }
}

TEST(NodProperties, AgentPermutationCommutesWithRate) {
  Rng rng(13);
  for (int k = 0; k < 100; ++k) {
    const auto p = random_params(rng, random_topology(rng));
    const auto z = random_vector(rng, p.bias.size(), 2.0);
    std::vector<int> perm(static_cast<std::size_t>(p.topology.num_agents()));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(perm.size() - 1 - i);
    const auto q = permute_agents(p, perm);
    const auto lhs = nod_rate(permute_opinions(p.topology, z, perm), q);
    const auto rhs = permute_opinions(p.topology, nod_rate(z, p), perm);
    ASSERT_EQ(lhs.size(), rhs.size());
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-14);
  }
}

namespace {

double global_error(const NODParams& p, double dt, Integrator m, const std::vector<double>& ref) {
  const int steps = static_cast<int>(std::lround(1.0 / dt));
  auto traj = simulate_opinions(OpinionState(p.topology, {0.1}), {p}, dt, steps, m);
  return std::abs(traj.back().values[0] - ref[0]);
}

double loglog_slope(const std::vector<double>& h, const std::vector<double>& e) {
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    mx += std::log(h[k]);
    my += std::log(e[k]);
  }
  mx /= h.size();
  my /= h.size();
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    sxy += (std::log(h[k]) - mx) * (std::log(e[k]) - my);
    sxx += (std::log(h[k]) - mx) * (std::log(h[k]) - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST(NodProperties, IntegratorConvergenceOrders) {
  const auto p = scalar_params(1.0, 0.0, 1.0, 2.0);
  const auto ref = simulate_opinions(OpinionState(p.topology, {0.1}), {p}, 1e-5, 100000, Integrator::kRK4).back().values;
  const std::vector<double> euler_h{0.1, 0.05, 0.025, 0.0125};
  const std::vector<double> rk_h{0.25, 0.2, 0.125, 0.1};
  std::vector<double> ee, er;
  for (double h : euler_h) ee.push_back(global_error(p, h, Integrator::kEuler, ref));
  for (double h : rk_h) er.push_back(global_error(p, h, Integrator::kRK4, ref));
  EXPECT_NEAR(loglog_slope(euler_h, ee), 1.0, 0.3);
  EXPECT_NEAR(loglog_slope(rk_h, er), 4.0, 0.3);
}

TEST(SimulateOpinions, ShapesAndEquilibrium) {
  const auto p = scalar_params(1.0, 0.3, 1.0, 0.5);
  const OpinionState z0(p.topology, {0.4});
  EXPECT_EQ(simulate_opinions(z0, {p}, 0.1, 0).size(), 1u);
  // Root of -z + 0.3 + tanh(0.5 z) by bisection.
  double lo = -5, hi = 5;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (nod_rate(std::vector<double>{mid}, p)[0] > 0 ? lo : hi) = mid;
  }
  const double zs = 0.5 * (lo + hi);
  const auto traj = simulate_opinions(OpinionState(p.topology, {zs}), {p}, 0.1, 200);
  for (const auto& z : traj) EXPECT_NEAR(z.values[0], zs, 1e-6);
  EXPECT_THROW(simulate_opinions(z0, {p, p}, 0.1, 3), std::invalid_argument);
}

TEST(SimulateOpinions, SubcriticalAttentionDecays) {
  // d = 1, alpha = 1 gives a critical attention of 1.
  const auto p = scalar_params(1.0, 0.0, 0.6, 1.0);
  const auto traj = simulate_opinions(OpinionState(p.topology, {1e-3}), {p}, 0.1, 300);
  EXPECT_LT(std::abs(traj.back().values[0]), 1e-3 * std::exp(-0.4 * 25.0));
}

TEST(NodParams, ValidationRejectsBrokenInvariants) {
  auto p = scalar_params(1.0, 0.0, 1.0, 1.0);
  p.damping[0] = 0.0;
  EXPECT_THROW(validate(p), InvalidParams);
  p = scalar_params(1.0, 0.0, -1.0, 1.0);
  EXPECT_THROW(validate(p), InvalidParams);
  p = scalar_params(1.0, 0.0, 1.0, -0.1);
  EXPECT_THROW(validate(p), InvalidParams);
  NODParams q = NODParams::zeros(Topology({2}));
  q.beta(0)(0, 0) = 0.5;
  EXPECT_THROW(validate(q), InvalidParams);
  q = NODParams::zeros(Topology({2}));
  q.beta(0)(0, 1) = -0.5;
  EXPECT_THROW(validate(q), InvalidParams);
  q = NODParams::zeros(Topology({2, 1}));
  q.gamma(0, 1)[1] = 0.2;  // agent 1 has no second option
  EXPECT_THROW(validate(q), InvalidParams);
}

TEST(NodParams, JsonRoundTrip) {
  Rng rng(14);
  for (int k = 0; k < 20; ++k) {
    const auto p = random_params(rng, random_topology(rng));
    const auto q = nod_params_from_json(json::parse(nod_params_to_json(p).dump()));
    EXPECT_EQ(nod_params_to_json(q).dump(), nod_params_to_json(p).dump());
    const auto z = random_vector(rng, p.bias.size(), 1.0);
    EXPECT_EQ(nod_rate(z, p), nod_rate(z, q));
  }
}
