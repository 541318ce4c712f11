// Iterative linear-quadratic approximation of feedback Nash equilibria for
// games with nonlinear dynamics and non-quadratic costs.
//
// Each iteration linearizes the dynamics and quadraticizes every player's
// cost along the current nominal trajectory, solves the resulting LQ game for
// (P, alpha), and rolls out u = u_bar - P (x - x_bar) - eps * alpha.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "nnod/dense.hpp"
#include "nnod/dyn_game.hpp"
#include "nnod/lq_game.hpp"

namespace nnod {

struct IlqOptions {
  int max_iterations = 50;
  double tolerance = 1e-3;
  double min_step = 1.0 / 32.0;
  // Accept a step when the realized state deviation differs from the
  // linearized prediction by at most trust * (size of the prediction).
  double trust = 0.5;
  double divergence_norm = 1e6;
  // When positive, run exactly this many updates with the step sizes below
  // and no line search or early exit. The map from inputs to the result is
  // then smooth, which is what differentiating through the solver needs.
  int fixed_iterations = 0;
  std::vector<double> fixed_steps{1.0};
  // Include dynamics curvature in the expansion when the game provides it.
  bool second_order = true;
  // Always use the game's positive semidefinite cost model (and no dynamics
  // curvature) when it offers one. Without this flag that model is only the
  // last fallback.
  bool convex_costs = false;
  LqOptions lq;
};

// Thrown when a rollout leaves the divergence bound; holds the last nominal
// trajectory that was still finite.
class IlqDivergenceError : public SolverError {
 public:
  IlqDivergenceError(const std::string& what, std::vector<Vec<double>> states, std::vector<Vec<double>> controls)
      : SolverError(what), last_states(std::move(states)), last_controls(std::move(controls)) {}
  std::vector<Vec<double>> last_states;
  std::vector<Vec<double>> last_controls;
};

template <class T>
struct EquilibriumSolution {
  std::vector<Mat<T>> gains;        // P_k
  std::vector<Vec<T>> feedforward;  // u_k(x) = feedforward_k - P_k x
  std::vector<Vec<T>> states;       // H + 1 nominal states
  std::vector<Vec<T>> controls;     // H nominal controls
  std::vector<double> costs;        // per-player total cost of the nominal
  int iterations = 0;
  double final_delta = 0.0;
  bool converged = false;
  bool regularized = false;

  [[nodiscard]] Vec<T> control_at(int k, const Vec<T>& x) const {
    const auto sk = static_cast<std::size_t>(k);
    Vec<T> u = feedforward[sk];
    const Vec<T> px = gains[sk] * x;
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = u[j] - px[j];
    return u;
  }
};

// Drops the first stage and repeats the last one, for receding-horizon reuse.
template <class T>
EquilibriumSolution<T> shift_solution(const EquilibriumSolution<T>& s) {
  EquilibriumSolution<T> r = s;
  auto shift = [](auto& v) {
    if (v.size() < 2) return;
    std::rotate(v.begin(), v.begin() + 1, v.end());
    v.back() = v[v.size() - 2];
  };
  shift(r.gains);
  shift(r.feedforward);
  shift(r.states);
  shift(r.controls);
  return r;
}

namespace detail {

template <class T>
const Vec<T>& opinion_at(const std::vector<Vec<T>>& z, int k) {
  static const Vec<T> empty;
  if (z.empty()) return empty;
  return z[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(z.size()) - 1))];
}

template <class T>
bool finite_and_bounded(const Vec<T>& v, double bound) {
  for (const auto& x : v) {
    const double a = value(x);
    if (!std::isfinite(a) || std::abs(a) > bound) return false;
  }
  return true;
}

// Rolls out u = u_bar - P (x - x_bar) - eps * alpha, projected onto the
// game's control bounds when it defines project_controls. Returns false on
// divergence. alpha may be empty (no feedforward change).
template <class Game, class T>
bool ilq_rollout(const Game& game, const Vec<T>& x0, const std::vector<Vec<T>>& xs, const std::vector<Vec<T>>& us,
                 const std::vector<Mat<T>>& P, const std::type_identity_t<std::vector<Vec<T>>>* alpha, double eps, double bound,
                 std::vector<Vec<T>>& xn, std::vector<Vec<T>>& un) {
  const int H = game.horizon();
  xn.assign(static_cast<std::size_t>(H + 1), Vec<T>{});
  un.assign(static_cast<std::size_t>(H), Vec<T>{});
  xn[0] = x0;
  for (int k = 0; k < H; ++k) {
    const auto sk = static_cast<std::size_t>(k);
    Vec<T> dx = xn[sk];
    for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = dx[j] - xs[sk][j];
    const Vec<T> pdx = P[sk] * dx;
    Vec<T> u = us[sk];
    for (std::size_t j = 0; j < u.size(); ++j) {
      u[j] = u[j] - pdx[j];
      if (alpha != nullptr && eps != 0.0) u[j] = u[j] - T(eps) * (*alpha)[sk][j];
    }
    if constexpr (requires(Vec<T>& v) { game.project_controls(v); }) game.project_controls(u);
    un[sk] = u;
    xn[sk + 1] = game.step(k, xn[sk], u);
    if (!finite_and_bounded(xn[sk + 1], bound) || !finite_and_bounded(u, bound)) return false;
  }
  return true;
}

// Largest feedforward step and gain change of a new LQ solution. A control
// sitting on its bound whose step points further out is at a constrained
// optimum, so its feedforward and gain row are left out.
template <class Game, class T>
double policy_delta(const Game& game, const std::vector<Vec<T>>& us, const LqStrategies<T>& lq,
                    const std::vector<Mat<T>>& P) {
  double delta = 0.0;
  for (std::size_t k = 0; k < lq.alpha.size(); ++k) {
    const Vec<double> u = values(us[k]);
    const Vec<double> a = values(lq.alpha[k]);
    std::vector<bool> active(u.size(), false);
    if constexpr (requires(Vec<double>& v) { game.project_controls(v); }) {
      Vec<double> v = u;
      for (std::size_t j = 0; j < v.size(); ++j) v[j] -= a[j];
      Vec<double> pv = v;
      game.project_controls(pv);
      for (std::size_t j = 0; j < v.size(); ++j) active[j] = pv[j] != v[j] && std::abs(pv[j] - u[j]) < 1e-12;
    }
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (active[j]) continue;
      delta = std::max(delta, std::abs(a[j]));
      for (int c = 0; c < P[k].cols(); ++c)
        delta = std::max(delta, std::abs(value(lq.P[k](static_cast<int>(j), c)) - value(P[k](static_cast<int>(j), c))));
    }
  }
  return delta;
}

template <class Game, class T>
std::vector<double> player_costs(const Game& game, const std::vector<Vec<T>>& xs, const std::vector<Vec<T>>& us,
                                 const std::vector<Vec<T>>& z) {
  const int H = game.horizon();
  std::vector<Vec<double>> zd;
  for (const auto& v : z) zd.push_back(values(v));
  std::vector<double> c(static_cast<std::size_t>(game.num_players()), 0.0);
  const Vec<double> nou(static_cast<std::size_t>(game.control_dim()), 0.0);
  for (int i = 0; i < game.num_players(); ++i) {
    for (int k = 0; k <= H; ++k) {
      const Vec<double> x = values(xs[static_cast<std::size_t>(k)]);
      const Vec<double> u = k < H ? values(us[static_cast<std::size_t>(k)]) : nou;
      c[static_cast<std::size_t>(i)] += game.template stage_cost<double>(i, k, x, u, opinion_at(zd, k));
    }
  }
  return c;
}

}  // namespace detail

// z holds one opinion vector per stage (or fewer: the last one is reused).
// warm, if given, is a previous solution whose gains and nominal trajectory
// seed the first rollout (shift it first when the horizon has advanced).
template <class Game, class T>
EquilibriumSolution<T> solve_ilq(const Game& game, const Vec<T>& x0, const std::vector<Vec<T>>& z,
                                 const IlqOptions& opts = {}, const EquilibriumSolution<T>* warm = nullptr) {
  const int H = game.horizon();
  const int n = game.state_dim();
  const int m = game.control_dim();
  if (static_cast<int>(x0.size()) != n) throw std::invalid_argument("solve_ilq: initial state has wrong dimension");
  std::vector<std::pair<int, int>> ranges;
  for (int i = 0; i < game.num_players(); ++i) ranges.push_back(game.control_range(i));

  std::vector<Vec<T>> xs, us;
  std::vector<Mat<T>> P(static_cast<std::size_t>(H), Mat<T>(m, n));
  bool seeded = false;
  if (warm != nullptr && static_cast<int>(warm->gains.size()) == H) {
    seeded = detail::ilq_rollout(game, x0, warm->states, warm->controls, warm->gains, nullptr, 0.0,
                                 opts.divergence_norm, xs, us);
    if (seeded) P = warm->gains;
  }
  if (!seeded) {
    std::fill(P.begin(), P.end(), Mat<T>(m, n));
    const std::vector<Vec<T>> zx(static_cast<std::size_t>(H + 1), Vec<T>(static_cast<std::size_t>(n), T(0.0)));
    const std::vector<Vec<T>> zu(static_cast<std::size_t>(H), Vec<T>(static_cast<std::size_t>(m), T(0.0)));
    if (!detail::ilq_rollout(game, x0, zx, zu, P, nullptr, 0.0, opts.divergence_norm, xs, us))
      throw IlqDivergenceError("solve_ilq: initial rollout diverged", {}, {});
  }

  EquilibriumSolution<T> sol;
  std::vector<Mat<T>> A(static_cast<std::size_t>(H)), B(static_cast<std::size_t>(H));
  std::vector<std::vector<StageQuadratic<T>>> quad(static_cast<std::size_t>(H + 1));
  const Vec<T> no_control(static_cast<std::size_t>(m), T(0.0));
  const bool fixed = opts.fixed_iterations > 0;
  const int budget = fixed ? opts.fixed_iterations : opts.max_iterations;

  auto diverged = [&](int iteration) {
    std::vector<Vec<double>> sx, su;
    for (const auto& v : xs) sx.push_back(values(v));
    for (const auto& v : us) su.push_back(values(v));
    return IlqDivergenceError("solve_ilq: rollout diverged at iteration " + std::to_string(iteration), std::move(sx),
                              std::move(su));
  };

  constexpr bool has_convex = requires(std::vector<StageQuadratic<T>>& q) { game.quadraticize_convex(0, x0, x0, x0, q); };
  const bool always_convex = has_convex && opts.convex_costs;
  auto quadraticize = [&](int k, const Vec<T>& u, bool convex) {
    const auto sk = static_cast<std::size_t>(k);
    if constexpr (has_convex) {
      if (convex) {
        game.quadraticize_convex(k, xs[sk], u, detail::opinion_at(z, k), quad[sk]);
        return;
      }
    }
    game.quadraticize(k, xs[sk], u, detail::opinion_at(z, k), quad[sk]);
  };
  auto expand = [&]() {
    for (int k = 0; k <= H; ++k) {
      const auto sk = static_cast<std::size_t>(k);
      const Vec<T>& u = k < H ? us[sk] : no_control;
      if (k < H) game.linearize(k, xs[sk], u, A[sk], B[sk]);
      quadraticize(k, u, always_convex);
    }
  };

  DynamicsCurvature<T> curvature;
  if constexpr (requires(Mat<T>& h) { game.dynamics_curvature(0, x0, x0, x0, h, h, h); }) {
    if (opts.second_order && !always_convex)
      curvature = [&](int k, const Vec<T>& w, Mat<T>& hxx, Mat<T>& hxu, Mat<T>& huu) {
        game.dynamics_curvature(k, xs[static_cast<std::size_t>(k)], us[static_cast<std::size_t>(k)], w, hxx, hxu, huu);
      };
  }

  // The second-order expansion is used only where it is locally convex for
  // every player; otherwise the iteration falls back to the Gauss-Newton
  // model, and then to the convexified costs.
  auto solve_expansion = [&]() {
    if (curvature) {
      try {
        LqStrategies<T> s2 = lq_feedback_nash(A, B, quad, ranges, opts.lq, &curvature);
        if (!s2.regularized) return s2;
      } catch (const SolverError&) {
      }
    }
    if (always_convex || !has_convex) return lq_feedback_nash(A, B, quad, ranges, opts.lq);
    try {
      LqStrategies<T> gn = lq_feedback_nash(A, B, quad, ranges, opts.lq);
      if (!gn.regularized) return gn;
    } catch (const SolverError&) {
    }
    for (int k = 0; k <= H; ++k) quadraticize(k, k < H ? us[static_cast<std::size_t>(k)] : no_control, true);
    return lq_feedback_nash(A, B, quad, ranges, opts.lq);
  };

  int it = 0;
  for (;;) {
    if (fixed && it >= budget) break;
    expand();
    const LqStrategies<T> lq = solve_expansion();
    sol.regularized = sol.regularized || lq.regularized;
    const double delta = detail::policy_delta(game, us, lq, P);
    sol.final_delta = delta;
    if (!fixed && delta < opts.tolerance) {
      P = lq.P;
      sol.converged = true;
      break;
    }

    std::vector<Vec<T>> xn, un;
    if (fixed) {
      const double eps = opts.fixed_steps[std::min<std::size_t>(static_cast<std::size_t>(it), opts.fixed_steps.size() - 1)];
      if (!detail::ilq_rollout(game, x0, xs, us, lq.P, &lq.alpha, eps, opts.divergence_norm, xn, un))
        throw diverged(it);
    } else {
      // Linear prediction of the state deviation for a unit step; it scales
      // with eps because the deviation dynamics are linear in alpha.
      std::vector<Vec<double>> pred(static_cast<std::size_t>(H + 1), Vec<double>(static_cast<std::size_t>(n), 0.0));
      for (int k = 0; k < H; ++k) {
        const auto sk = static_cast<std::size_t>(k);
        const Mat<double> Ak = values(A[sk]), Bk = values(B[sk]), Pk = values(lq.P[sk]);
        Vec<double> du = Pk * pred[sk];
        const Vec<double> ak = values(lq.alpha[sk]);
        for (std::size_t j = 0; j < du.size(); ++j) du[j] = -du[j] - ak[j];
        Vec<double> nx = Ak * pred[sk];
        const Vec<double> bu = Bk * du;
        for (std::size_t j = 0; j < nx.size(); ++j) nx[j] += bu[j];
        pred[sk + 1] = nx;
      }
      double pred_size = 0.0;
      for (const auto& v : pred) pred_size = std::max(pred_size, max_abs(v));
      double base_cost = 0.0;
      for (double c : detail::player_costs(game, xs, us, z)) base_cost += c;

      bool accepted = false;
      for (double eps = 1.0; !accepted; eps *= 0.5) {
        const bool floor = eps <= opts.min_step * (1.0 + 1e-12);
        const bool ok = detail::ilq_rollout(game, x0, xs, us, lq.P, &lq.alpha, eps, opts.divergence_norm, xn, un);
        if (!ok) {
          if (floor) throw diverged(it);
          continue;
        }
        double mismatch = 0.0;
        for (int k = 0; k <= H; ++k) {
          const auto sk = static_cast<std::size_t>(k);
          for (int j = 0; j < n; ++j) {
            const auto sj = static_cast<std::size_t>(j);
            mismatch = std::max(mismatch, std::abs(value(xn[sk][sj]) - value(xs[sk][sj]) - eps * pred[sk][sj]));
          }
        }
        double cost = 0.0;
        for (double c : detail::player_costs(game, xn, un, z)) cost += c;
        accepted = floor || mismatch <= opts.trust * eps * pred_size + 1e-9 || cost < base_cost;
      }
    }
    xs = std::move(xn);
    us = std::move(un);
    P = lq.P;
    ++it;
    if (!fixed && it >= budget) {
      // Report the state of the last accepted iterate.
      expand();
      const LqStrategies<T> last = solve_expansion();
      const double d = detail::policy_delta(game, us, last, P);
      sol.final_delta = d;
      sol.converged = d < opts.tolerance;
      if (sol.converged) P = last.P;
      break;
    }
  }

  sol.iterations = it;
  sol.gains = P;
  sol.states = xs;
  sol.controls = us;
  sol.feedforward.resize(static_cast<std::size_t>(H));
  for (int k = 0; k < H; ++k) {
    const auto sk = static_cast<std::size_t>(k);
    Vec<T> ff = us[sk];
    const Vec<T> px = P[sk] * xs[sk];
    for (std::size_t j = 0; j < ff.size(); ++j) ff[j] = ff[j] + px[j];
    sol.feedforward[sk] = ff;
  }
  sol.costs = detail::player_costs(game, xs, us, z);
  return sol;
}

// One row per stage: k, state, control (empty on the terminal row), opinions.
template <class T>
void write_solution_csv(const EquilibriumSolution<T>& sol, const std::vector<Vec<T>>& z, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  const std::size_t n = sol.states.empty() ? 0 : sol.states[0].size();
  const std::size_t m = sol.controls.empty() ? 0 : sol.controls[0].size();
  const std::size_t nz = z.empty() ? 0 : z[0].size();
  out << "k";
  for (std::size_t j = 0; j < n; ++j) out << ",x" << j;
  for (std::size_t j = 0; j < m; ++j) out << ",u" << j;
  for (std::size_t j = 0; j < nz; ++j) out << ",z" << j;
  out << "\n";
  for (std::size_t k = 0; k < sol.states.size(); ++k) {
    out << k;
    for (const auto& v : sol.states[k]) out << ',' << value(v);
    for (std::size_t j = 0; j < m; ++j) {
      out << ',';
      if (k < sol.controls.size()) out << value(sol.controls[k][j]);
    }
    const Vec<T>& zk = detail::opinion_at(z, static_cast<int>(k));
    for (std::size_t j = 0; j < nz; ++j) out << ',' << value(zk[j]);
    out << "\n";
  }
}

}  // namespace nnod
