// Feedback Nash equilibrium of a finite-horizon, time-varying linear-quadratic
// game, by backward coupled Riccati recursion. Player i minimizes
//   sum_k 0.5 x'Q_i x + l_i'x + 0.5 u'R_i u + r_i'u   (plus terminal 0.5 x'Q x + l'x)
// subject to x_{k+1} = A_k x_k + B_k u_k, and the equilibrium strategies are
// u_k = -P_k x_k - alpha_k.
#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nnod/dense.hpp"
#include "nnod/dyn_game.hpp"

namespace nnod {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct LqStrategies {
  std::vector<Mat<T>> P;      // m x n per stage
  std::vector<Vec<T>> alpha;  // m per stage
  bool regularized = false;
};

struct LqOptions {
  double initial_shift = 1e-3;
  double shift_growth = 10.0;
  int max_shifts = 12;
  // A coupled system that is nearly singular produces huge gains that blow
  // up the value recursion. Gains above this bound are treated like a
  // singular system (0 disables the check).
  double max_gain = 1e3;
};

namespace detail {

template <class T>
Mat<T> column(const Vec<T>& v) {
  Mat<T> m(static_cast<int>(v.size()), 1);
  for (std::size_t k = 0; k < v.size(); ++k) m.data()[k] = v[k];
  return m;
}

template <class T>
Vec<T> flatten(const Mat<T>& m) {
  return m.data();
}

template <class T>
Mat<T> symmetric_part(const Mat<T>& m) {
  Mat<T> s(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) s(i, j) = T(0.5) * (m(i, j) + m(j, i));
  return s;
}

}  // namespace detail

// Second derivatives of the dynamics contracted with a weight vector w over
// the next state: sum_j w_j d2f_j/dx2, d2f_j/dxdu, d2f_j/du2 at stage k.
template <class T>
using DynamicsCurvature = std::function<void(int k, const Vec<T>& w, Mat<T>& hxx, Mat<T>& hxu, Mat<T>& huu)>;

// ranges[i] = (offset, size) of player i's controls in the joint control.
// quad[k][i] for k = 0..H (index H is terminal; its R, r are ignored).
//
// If curvature is given, each player's stage expansion is augmented with the
// dynamics curvature weighted by that player's next-stage value gradient (a
// second-order, DDP-style expansion). This changes the step, not the fixed
// point: at alpha = 0 the stationarity conditions are the same.
template <class T>
LqStrategies<T> lq_feedback_nash(const std::vector<Mat<T>>& A, const std::vector<Mat<T>>& B,
                                 const std::vector<std::vector<StageQuadratic<T>>>& quad,
                                 const std::vector<std::pair<int, int>>& ranges, const LqOptions& opts = {},
                                 const DynamicsCurvature<T>* curvature = nullptr) {
  const int H = static_cast<int>(A.size());
  if (static_cast<int>(B.size()) != H || static_cast<int>(quad.size()) != H + 1)
    throw std::invalid_argument("lq_feedback_nash: inconsistent horizon");
  const int N = static_cast<int>(ranges.size());
  const int n = A.empty() ? 0 : A[0].rows();
  const int m = B.empty() ? 0 : B[0].cols();

  std::vector<Mat<T>> Z(static_cast<std::size_t>(N));
  std::vector<Mat<T>> zeta(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const auto& term = quad[static_cast<std::size_t>(H)][static_cast<std::size_t>(i)];
    Z[static_cast<std::size_t>(i)] = term.Q;
    zeta[static_cast<std::size_t>(i)] = detail::column(term.l);
  }

  LqStrategies<T> out;
  out.P.resize(static_cast<std::size_t>(H));
  out.alpha.resize(static_cast<std::size_t>(H));

  for (int k = H - 1; k >= 0; --k) {
    const auto sk = static_cast<std::size_t>(k);
    const Mat<T>& a = A[sk];
    const Mat<T>& b = B[sk];
    Mat<T> S(m, m), rhs(m, n + 1);
    std::vector<Mat<T>> own_blocks(static_cast<std::size_t>(N));
    std::vector<Mat<T>> Qe(static_cast<std::size_t>(N)), Re(static_cast<std::size_t>(N)), Ne(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const auto& q = quad[sk][si];
      Qe[si] = q.Q;
      Re[si] = q.R;
      Ne[si] = Mat<T>(n, m);
      if (curvature != nullptr) {
        Mat<T> hxx(n, n), hxu(n, m), huu(m, m);
        (*curvature)(k, detail::flatten(zeta[si]), hxx, hxu, huu);
        Qe[si] += hxx;
        Re[si] += huu;
        Ne[si] = hxu;
      }
    }
    for (int i = 0; i < N; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const auto [off, cnt] = ranges[si];
      const auto& q = quad[sk][si];
      const Mat<T> bi = b.block(0, off, n, cnt);
      const Mat<T> zb = Z[si] * b;
      const Mat<T> rows = Re[si].block(off, 0, cnt, m) + tmul(bi, zb);
      S.set_block(off, 0, rows);
      own_blocks[si] = rows.block(0, off, cnt, cnt);
      Mat<T> gain_rhs = tmul(bi, Z[si] * a);
      if (curvature != nullptr) gain_rhs += Ne[si].block(0, off, n, cnt).transpose();
      rhs.set_block(off, 0, gain_rhs);
      const Mat<T> lin = tmul(bi, zeta[si]) + detail::column(q.r).block(off, 0, cnt, 1);
      rhs.set_block(off, n, lin);
    }

    // Each player's own block must be positive definite for its stage
    // problem to have a minimizer. Shift the ones that are not.
    for (int i = 0; i < N; ++i) {
      const auto [off, cnt] = ranges[static_cast<std::size_t>(i)];
      if (is_positive_definite(values(detail::symmetric_part(own_blocks[static_cast<std::size_t>(i)])))) continue;
      double mu = opts.initial_shift;
      int tries = 0;
      for (;;) {
        Mat<double> shifted = values(detail::symmetric_part(own_blocks[static_cast<std::size_t>(i)]));
        for (int d = 0; d < cnt; ++d) shifted(d, d) += mu;
        if (is_positive_definite(shifted)) break;
        mu *= opts.shift_growth;
        if (++tries > opts.max_shifts) throw SolverError("lq_feedback_nash: could not regularize player " + std::to_string(i));
      }
      for (int d = 0; d < cnt; ++d) S(off + d, off + d) = S(off + d, off + d) + T(mu);
      out.regularized = true;
    }

    auto gains_ok = [&](const Mat<T>& x) { return opts.max_gain <= 0.0 || max_abs(x.block(0, 0, m, n)) <= opts.max_gain; };
    Mat<T> sol;
    bool ok = false;
    try {
      sol = solve(S, rhs);
      ok = gains_ok(sol);
    } catch (const SingularMatrixError&) {
    }
    if (!ok) {
      // Coupled system singular or ill-conditioned although each own block
      // is definite: shift every player.
      double mu = opts.initial_shift;
      for (int t = 0; t <= opts.max_shifts && !ok; ++t, mu *= opts.shift_growth) {
        Mat<T> Ss = S;
        for (int d = 0; d < m; ++d) Ss(d, d) = Ss(d, d) + T(mu);
        try {
          sol = solve(Ss, rhs);
          ok = gains_ok(sol);
        } catch (const SingularMatrixError&) {
        }
      }
      if (!ok) throw SolverError("lq_feedback_nash: singular coupled system at stage " + std::to_string(k));
      out.regularized = true;
    }
    const Mat<T> P = sol.block(0, 0, m, n);
    const Mat<T> alpha = sol.block(0, n, m, 1);
    const Mat<T> F = a - b * P;
    Mat<T> beta = b * alpha;
    for (auto& v : beta.data()) v = -v;

    for (int i = 0; i < N; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const auto& q = quad[sk][si];
      const Mat<T>& R = Re[si];
      const Mat<T> RP = R * P;
      Mat<T> newZ = tmul(F, Z[si] * F) + Qe[si] + tmul(P, RP);
      Mat<T> newzeta = tmul(F, zeta[si] + Z[si] * beta) + detail::column(q.l) + tmul(P, R * alpha) -
                       tmul(P, detail::column(q.r));
      if (curvature != nullptr) {
        const Mat<T> NP = Ne[si] * P;
        newZ -= NP;
        newZ -= NP.transpose();
        newzeta -= Ne[si] * alpha;
      }
      Z[si] = detail::symmetric_part(newZ);
      zeta[si] = newzeta;
    }
    out.P[sk] = P;
    out.alpha[sk] = detail::flatten(alpha);
  }
  return out;
}

}  // namespace nnod
