#include <gtest/gtest.h>

#include <cmath>

#include "nnod/bifurcation.hpp"
#include "random_instances.hpp"

using namespace nnod;
using nnod::testing::random_params;
using nnod::testing::random_topology;
using nnod::testing::scalar_params;

namespace {

// Central-difference Jacobian of the saturation term at z = 0.
Mat<double> fd_jacobian(const NODParams& p, double h = 1e-6) {
  const int n = p.topology.total_dim();
  Mat<double> j(n, n);
  for (int c = 0; c < n; ++c) {
    std::vector<double> zp(static_cast<std::size_t>(n), 0.0), zm(static_cast<std::size_t>(n), 0.0);
    zp[static_cast<std::size_t>(c)] = h;
    zm[static_cast<std::size_t>(c)] = -h;
    const auto sp = saturation_term(zp, p);
    const auto sm = saturation_term(zm, p);
    for (int r = 0; r < n; ++r) j(r, c) = (sp[static_cast<std::size_t>(r)] - sm[static_cast<std::size_t>(r)]) / (2 * h);
  }
  return j;
}

}  // namespace

TEST(Jacobian, ScalarAndZeroCases) {
  const auto jac = jacobian_at_neutral(scalar_params(1.0, 0.0, 1.0, 1.5));
  EXPECT_DOUBLE_EQ(jac.full(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(jac.reduced(0, 0), 0.0);
  const auto zero = jacobian_at_neutral(NODParams::zeros(Topology({2, 3})));
  EXPECT_EQ(max_abs(zero.full), 0.0);
}

TEST(Jacobian, TwoAgentsOneOption) {
  NODParams p = NODParams::zeros(Topology({1, 1}));
  p.self_gain = {0.3, 0.8};
  p.gamma(0, 1)[0] = -0.4;
  p.gamma(1, 0)[0] = 1.1;
  const auto jac = jacobian_at_neutral(p);
  EXPECT_DOUBLE_EQ(jac.full(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(jac.full(0, 1), -0.4);
  EXPECT_DOUBLE_EQ(jac.full(1, 0), 1.1);
  EXPECT_DOUBLE_EQ(jac.full(1, 1), 0.8);
  EXPECT_LT(max_abs_diff(jac.full, fd_jacobian(p)), 1e-6);
}

TEST(Jacobian, MatchesFiniteDifferencesOnRandomDraws) {
  Rng rng(21);
  for (int k = 0; k < 50; ++k) {
    const auto p = random_params(rng, random_topology(rng, 3, 4));
    const auto jac = jacobian_at_neutral(p);
    EXPECT_LT(max_abs_diff(jac.full, fd_jacobian(p)), 1e-6);
    // Self gain enters additively on the diagonal.
    Mat<double> sum = jac.reduced;
    for (int i = 0; i < sum.rows(); ++i) sum(i, i) += p.self_gain[static_cast<std::size_t>(i)];
    EXPECT_EQ(max_abs_diff(sum, jac.full), 0.0);
  }
}

TEST(Lemma1, Examples) {
  const auto r1 = check_lemma1(scalar_params(1.0, 0.0, 1.0, 1.0));
  EXPECT_TRUE(r1.satisfied);
  ASSERT_TRUE(r1.witness.has_value());
  EXPECT_EQ(*r1.witness, std::make_pair(0, 0));
  EXPECT_NEAR(r1.max_real, 1.0, 1e-14);
  EXPECT_TRUE(r1.direct_positive);

  NODParams skew = NODParams::zeros(Topology({1, 1}));
  skew.gamma(0, 1)[0] = 1.0;
  skew.gamma(1, 0)[0] = -1.0;
  const auto r2 = check_lemma1(skew);
  EXPECT_FALSE(r2.direct_positive);
  const auto ev = eigenvalues(jacobian_at_neutral(skew).full);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_NEAR(ev[0].real(), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(ev[0].imag()), 1.0, 1e-14);

  const auto r3 = check_lemma1(NODParams::zeros(Topology({2, 2})));
  EXPECT_FALSE(r3.satisfied);
  EXPECT_FALSE(r3.direct_positive);
}

TEST(Lemma1, DecoupledOptionsPairWithZeroSpectrum) {
  NODParams p = NODParams::zeros(Topology({2, 2}));
  p.self_gain = {0.0, 0.0, 0.0, 0.7};
  const auto r = check_lemma1(p);
  EXPECT_TRUE(r.pairing_defined);
  EXPECT_TRUE(r.satisfied);
  ASSERT_TRUE(r.witness.has_value());
  EXPECT_EQ(*r.witness, std::make_pair(1, 1));
  EXPECT_NEAR(r.max_real, 0.7, 1e-14);
}

TEST(CriticalAttention, Examples) {
  EXPECT_NEAR(*critical_attention(scalar_params(1.0, 0.0, 1.0, 1.0)), 1.0, 1e-14);
  // Two decoupled options with alpha = 0.5 and 0.25: max Re+ = 0.5.
  NODParams p = NODParams::zeros(Topology({2}));
  p.damping = {2.0, 2.0};
  p.self_gain = {0.5, 0.25};
  EXPECT_NEAR(*critical_attention(p), 4.0, 1e-14);
  NODParams skew = NODParams::zeros(Topology({1, 1}));
  skew.gamma(0, 1)[0] = 1.0;
  skew.gamma(1, 0)[0] = -1.0;
  EXPECT_FALSE(critical_attention(skew).has_value());
}

TEST(CriticalAttention, ThresholdSeparatesStability) {
  Rng rng(23);
  int checked = 0;
  for (int k = 0; k < 300 && checked < 60; ++k) {
    const auto p = random_params(rng, random_topology(rng), /*uniform_damping=*/true);
    const auto ls = critical_attention(p);
    if (!ls) continue;
    ++checked;
    EXPECT_GT(spectral_abscissa(linearization_at_neutral(p, *ls + 1e-9)), 0.0);
    EXPECT_LT(spectral_abscissa(linearization_at_neutral(p, *ls - 1e-9)), 0.0);
  }
  EXPECT_GE(checked, 50);
}

TEST(VerifyInstability, ScalarRates) {
  const auto p = scalar_params(1.0, 0.0, 1.0, 1.0);
  const auto up = verify_instability(p, 2.0, 1e-8, 30.0);
  EXPECT_TRUE(up.positive);
  EXPECT_NEAR(up.fitted_exponent, 1.0, 0.02);
  EXPECT_NEAR(up.predicted_exponent, 1.0, 1e-12);
  const auto down = verify_instability(p, 0.5, 1e-8, 20.0);
  EXPECT_FALSE(down.positive);
  EXPECT_NEAR(down.fitted_exponent, -0.5, 0.02);
  const auto marginal = verify_instability(p, 1.0, 1e-8, 20.0);
  EXPECT_LT(std::abs(marginal.fitted_exponent), 0.05);
}

TEST(VerifyInstability, Preconditions) {
  auto p = scalar_params(1.0, 0.0, 1.0, 1.0);
  EXPECT_THROW(verify_instability(p, 2.0, 1e-3, 10.0), std::invalid_argument);
  EXPECT_THROW(verify_instability(p, 2.0, 1e-8, 0.05), std::invalid_argument);
  p.bias[0] = 0.1;
  EXPECT_THROW(verify_instability(p, 2.0, 1e-8, 10.0), std::invalid_argument);
}

TEST(BiasSweep, ScalarUnfolding) {
  const auto p = scalar_params(1.0, 0.0, 1.0, 1.0);
  const auto rows = bias_unfolding_sweep(p, 2.0, {1e-8, -1e-8, 0.0});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].settled_ok);
  EXPECT_EQ(rows[0].signs[0], 1);
  EXPECT_EQ(rows[1].signs[0], -1);
  EXPECT_EQ(rows[2].signs[0], 0);
  EXPECT_EQ(rows[2].settled[0], 0.0);
  // Symmetric branches solve z = 2 tanh(z).
  EXPECT_NEAR(rows[0].settled[0], -rows[1].settled[0], 1e-8);
  EXPECT_NEAR(rows[0].settled[0], 2.0 * std::tanh(rows[0].settled[0]), 1e-8);
  EXPECT_THROW(bias_unfolding_sweep(NODParams::zeros(Topology({1})), 2.0, {1e-8}), std::invalid_argument);
}

TEST(BifurcationReport, JsonHasThresholdFields) {
  const auto rep = analyze(scalar_params(1.0, 0.0, 1.0, 1.0));
  const auto j = bifurcation_report_to_json(rep);
  EXPECT_NEAR(j.at("critical_attention").get<double>(), 1.0, 1e-14);
  EXPECT_TRUE(j.at("lemma1").at("satisfied").get<bool>());
  const auto none = bifurcation_report_to_json(analyze(NODParams::zeros(Topology({1}))));
  EXPECT_TRUE(none.at("critical_attention").is_null());
}
