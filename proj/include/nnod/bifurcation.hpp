// Stability of the neutral opinion z = 0 and the indecision-breaking
// threshold on the attention gain.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nnod/nod_json.hpp"
#include "nnod/opinion.hpp"
#include "nnod/rng.hpp"

namespace nnod {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NeutralJacobians {
  Mat<double> full;     // d S / dz at z = 0
  Mat<double> reduced;  // same with the self-gain diagonal removed
};

// Analytic Jacobian of the saturation term at the origin. With S'(0) = 1 every
// coupling gain appears as-is at its (row, column) position.
inline NeutralJacobians jacobian_at_neutral(const NODParams& p) {
  validate(p);
  const Topology& t = p.topology;
  const int n = t.total_dim();
  Mat<double> j(n, n);
  for (int i = 0; i < t.num_agents(); ++i)
    for (int l = 0; l < t.options(i); ++l) {
      const int row = t.index(i, l);
      for (int k = 0; k < t.num_agents(); ++k) {
        if (k == i) continue;
        if (l < t.options(k)) j(row, t.index(k, l)) += p.gamma(i, k)[static_cast<std::size_t>(l)];
        for (int q = 0; q < t.options(i); ++q)
          if (q != l && q < t.options(k)) j(row, t.index(k, q)) += p.delta(i, k)(l, q);
      }
      for (int q = 0; q < t.options(i); ++q)
        if (q != l) j(row, t.index(i, q)) += p.beta(i)(l, q);
    }
  NeutralJacobians out{j, j};
  for (int k = 0; k < n; ++k) out.full(k, k) += p.self_gain[static_cast<std::size_t>(k)];
  return out;
}

inline Eigen::MatrixXd to_eigen(const Mat<double>& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  return e;
}

inline double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

inline std::vector<std::complex<double>> eigenvalues(const Mat<double>& m) {
  const Eigen::MatrixXd e = to_eigen(m);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(e, false);
  if (solver.info() != Eigen::Success)
    throw NumericalError("eigenvalue computation failed (condition number " + std::to_string(condition_number(e)) + ")");
  std::vector<std::complex<double>> out;
  for (Eigen::Index k = 0; k < solver.eigenvalues().size(); ++k) out.push_back(solver.eigenvalues()(k));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  return out;
}

inline double spectral_abscissa(const Mat<double>& m) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& ev : eigenvalues(m)) best = std::max(best, ev.real());
  return best;
}

struct Lemma1Result {
  // Positional pairing of alpha with eigenvalues of the reduced Jacobian is
  // only defined when that Jacobian is diagonalizable and each eigenvector has
  // a distinct dominant component.
  bool pairing_defined = false;
  bool satisfied = false;
  std::optional<std::pair<int, int>> witness;  // (agent, option)
  // Conclusion checked directly: max Re eig(J0) > 0.
  bool direct_positive = false;
  double max_real = 0.0;
};

inline Lemma1Result check_lemma1(const NODParams& p) {
  const NeutralJacobians jac = jacobian_at_neutral(p);
  const Topology& t = p.topology;
  const int n = t.total_dim();
  Lemma1Result r;

  const Eigen::MatrixXd reduced = to_eigen(jac.reduced);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(reduced, true);
  if (solver.info() != Eigen::Success)
    throw NumericalError("eigendecomposition of reduced Jacobian failed (condition number " +
                         std::to_string(condition_number(reduced)) + ")");
  const Eigen::MatrixXcd vecs = solver.eigenvectors();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(vecs);
  const auto& sv = svd.singularValues();
  const bool diagonalizable = sv(sv.size() - 1) > 1e-10 * sv(0);
  if (diagonalizable) {
    std::vector<int> slot_of(static_cast<std::size_t>(n), -1);
    bool bijective = true;
    for (int k = 0; k < n && bijective; ++k) {
      int best = 0;
      for (int i = 1; i < n; ++i)
        if (std::abs(vecs(i, k)) > std::abs(vecs(best, k)) + 1e-12) best = i;
      if (slot_of[static_cast<std::size_t>(best)] != -1) bijective = false;
      slot_of[static_cast<std::size_t>(best)] = k;
    }
    if (bijective) {
      r.pairing_defined = true;
      for (int a = 0; a < t.num_agents() && !r.satisfied; ++a)
        for (int l = 0; l < t.options(a) && !r.satisfied; ++l) {
          const int i = t.index(a, l);
          const double sigma = solver.eigenvalues()(slot_of[static_cast<std::size_t>(i)]).real();
          if (p.self_gain[static_cast<std::size_t>(i)] + sigma > 0.0) {
            r.satisfied = true;
            r.witness = std::make_pair(a, l);
          }
        }
    }
  }
  r.max_real = spectral_abscissa(jac.full);
  r.direct_positive = r.max_real > 0.0;
  return r;
}

// lambda* = ||d||_inf / max Re+ eig(J0); absent if J0 has no eigenvalue with a
// positive real part.
inline std::optional<double> critical_attention(const NODParams& p) {
  const double m = spectral_abscissa(jacobian_at_neutral(p).full);
  if (!(m > 0.0)) return std::nullopt;
  double dmax = 0.0;
  for (double d : p.damping) dmax = std::max(dmax, d);
  return dmax / m;
}

// Linearization of the NOD vector field at z = 0 for a given attention.
inline Mat<double> linearization_at_neutral(const NODParams& p, double attention) {
  Mat<double> a = jacobian_at_neutral(p).full;
  for (auto& x : a.data()) x *= attention;
  for (int k = 0; k < a.rows(); ++k) a(k, k) -= p.damping[static_cast<std::size_t>(k)];
  return a;
}

struct BifurcationReport {
  NeutralJacobians jacobians;
  std::vector<double> alpha;
  std::vector<std::complex<double>> eigenvalues_full;
  Lemma1Result lemma1;
  std::optional<double> max_positive_real;
  std::optional<double> critical_attention;
};

inline BifurcationReport analyze(const NODParams& p) {
  BifurcationReport rep;
  rep.jacobians = jacobian_at_neutral(p);
  rep.alpha = p.self_gain;
  rep.eigenvalues_full = eigenvalues(rep.jacobians.full);
  rep.lemma1 = check_lemma1(p);
  if (rep.lemma1.max_real > 0.0) {
    rep.max_positive_real = rep.lemma1.max_real;
    rep.critical_attention = critical_attention(p);
  }
  return rep;
}

inline json bifurcation_report_to_json(const BifurcationReport& r) {
  json j;
  j["schema"] = "nnod.bifurcation_report";
  j["schema_version"] = 1;
  j["jacobian_full"] = matrix_to_json(r.jacobians.full);
  j["jacobian_reduced"] = matrix_to_json(r.jacobians.reduced);
  j["alpha"] = r.alpha;
  json ev = json::array();
  for (const auto& e : r.eigenvalues_full) ev.push_back(json::array({e.real(), e.imag()}));
  j["eigenvalues_full"] = ev;
  j["lemma1"] = json{{"pairing_defined", r.lemma1.pairing_defined},
                     {"satisfied", r.lemma1.satisfied},
                     {"witness", r.lemma1.witness ? json::array({r.lemma1.witness->first, r.lemma1.witness->second})
                                                  : json(nullptr)},
                     {"direct_positive", r.lemma1.direct_positive}};
  j["max_positive_real"] = r.max_positive_real ? json(*r.max_positive_real) : json(nullptr);
  j["critical_attention"] = r.critical_attention ? json(*r.critical_attention) : json(nullptr);
  return j;
}

struct GrowthReport {
  double fitted_exponent = 0.0;
  double predicted_exponent = 0.0;  // max Re eig(-D + lambda J0)
  bool positive = false;
  bool escaped = false;  // reached the upper edge of the linear regime
  int samples = 0;
};

struct GrowthOptions {
  std::uint64_t seed = 1;
  double dt = 0.0;  // 0 selects a step from the linearization's spectral radius
  double upper = 1e-2;
};

// Least-squares slope of log ||z(t)|| starting from a random perturbation of
// z = 0. The fit uses samples with ||z|| in [2 * scale, upper] when the
// trajectory leaves the linear regime, otherwise the second half of the
// horizon.
inline GrowthReport verify_instability(const NODParams& base, double attention, double perturbation_scale,
                                       double horizon, const GrowthOptions& opt = {}) {
  for (double b : base.bias)
    if (b != 0.0) throw std::invalid_argument("verify_instability: bias must be zero");
  if (!(perturbation_scale > 0.0) || perturbation_scale > 1e-4)
    throw std::invalid_argument("verify_instability: perturbation scale must be in (0, 1e-4]");
  NODParams p = base;
  p.attention = attention;
  validate(p);
  const Mat<double> lin = linearization_at_neutral(p, attention);
  GrowthReport rep;
  rep.predicted_exponent = spectral_abscissa(lin);
  double dt = opt.dt;
  if (!(dt > 0.0)) {
    double rho = 0.0;
    for (const auto& e : eigenvalues(lin)) rho = std::max(rho, std::abs(e));
    dt = std::min(0.01, 0.05 / std::max(rho, 1e-9));
  }
  const int steps = static_cast<int>(std::ceil(horizon / dt));

  Rng rng(opt.seed);
  std::vector<double> z(static_cast<std::size_t>(p.topology.total_dim()));
  double nrm = 0.0;
  for (auto& x : z) {
    x = rng.normal();
    nrm += x * x;
  }
  nrm = std::sqrt(nrm);
  for (auto& x : z) x *= perturbation_scale / nrm;

  std::vector<double> ts{0.0};
  std::vector<double> norms{perturbation_scale};
  for (int k = 1; k <= steps; ++k) {
    z = nod_step(z, p, dt, Integrator::kRK4);
    double s = 0.0;
    for (double x : z) s += x * x;
    ts.push_back(k * dt);
    norms.push_back(std::sqrt(s));
    if (norms.back() > opt.upper) break;
  }
  rep.escaped = norms.back() > opt.upper;

  std::vector<std::pair<double, double>> pts;
  if (rep.escaped) {
    for (std::size_t k = 0; k < ts.size(); ++k)
      if (norms[k] >= 2.0 * perturbation_scale && norms[k] <= opt.upper) pts.emplace_back(ts[k], std::log(norms[k]));
  } else {
    for (std::size_t k = 0; k < ts.size(); ++k)
      if (ts[k] >= 0.5 * horizon && norms[k] > 0.0) pts.emplace_back(ts[k], std::log(norms[k]));
  }
  if (pts.size() < 10) throw std::invalid_argument("verify_instability: horizon too short for a growth fit");
  double mt = 0.0, my = 0.0;
  for (const auto& [t, y] : pts) {
    mt += t;
    my += y;
  }
  mt /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sty = 0.0, stt = 0.0;
  for (const auto& [t, y] : pts) {
    sty += (t - mt) * (y - my);
    stt += (t - mt) * (t - mt);
  }
  rep.fitted_exponent = sty / stt;
  rep.positive = rep.fitted_exponent > 0.0;
  rep.samples = static_cast<int>(pts.size());
  return rep;
}

struct SweepRow {
  double bias = 0.0;
  std::vector<double> settled;
  std::vector<int> signs;
  bool settled_ok = false;
  int steps = 0;
};

struct SweepOptions {
  std::vector<double> direction;  // empty: all ones
  double dt = 0.01;
  int max_steps = 200000;
  double rate_tol = 1e-10;
};

// Settles the NOD from z = 0 with bias = magnitude * direction for each
// magnitude; rows that fail to settle within the budget are flagged.
inline std::vector<SweepRow> bias_unfolding_sweep(const NODParams& base, double attention,
                                                  const std::vector<double>& magnitudes,
                                                  const SweepOptions& opt = {}) {
  NODParams p = base;
  p.attention = attention;
  if (!check_lemma1(p).direct_positive)
    throw std::invalid_argument("bias_unfolding_sweep: J0 has no eigenvalue with positive real part");
  const auto n = static_cast<std::size_t>(p.topology.total_dim());
  std::vector<double> dir = opt.direction.empty() ? std::vector<double>(n, 1.0) : opt.direction;
  if (dir.size() != n) throw std::invalid_argument("bias_unfolding_sweep: direction length mismatch");
  std::vector<SweepRow> rows;
  for (double m : magnitudes) {
    for (std::size_t k = 0; k < n; ++k) p.bias[k] = m * dir[k];
    SweepRow row;
    row.bias = m;
    std::vector<double> z(n, 0.0);
    for (int s = 0; s < opt.max_steps; ++s) {
      const auto rate = nod_rate(z, p);
      if (max_abs(rate) < opt.rate_tol) {
        row.settled_ok = true;
        row.steps = s;
        break;
      }
      z = nod_step(z, p, opt.dt, Integrator::kRK4);
      row.steps = s + 1;
    }
    row.settled = z;
    for (double x : z) row.signs.push_back(x > 0.0 ? 1 : (x < 0.0 ? -1 : 0));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace nnod
