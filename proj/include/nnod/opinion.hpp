// Nonlinear opinion dynamics (NOD) for an arbitrary number of agents, each
// holding a real-valued opinion about each of its options.
//
//   dz_il/dt = -d_il z_il + b_il + lambda * S_il(z)
//   S_il(z)  = S1(alpha_il z_il + sum_{j!=i} gamma^{ij}_l z_jl)
//            + sum_{p!=l} S2(beta^i_lp z_ip + sum_{j!=i} delta^{ij}_lp z_jp)
//
// Options are matched across agents by position: a coupling from agent j on
// option l exists only if agent j has an l-th option.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnod/ad.hpp"
#include "nnod/dense.hpp"
#include "nnod/math.hpp"

namespace nnod {

class Topology {
 public:
  Topology() = default;
  explicit Topology(std::vector<int> options_per_agent) : options_(std::move(options_per_agent)) {
    if (options_.empty()) throw std::invalid_argument("Topology: need at least one agent");
    offsets_.reserve(options_.size());
    int acc = 0;
    for (int n : options_) {
      if (n < 1) throw std::invalid_argument("Topology: every agent needs at least one option");
      offsets_.push_back(acc);
      acc += n;
    }
    total_ = acc;
  }

  [[nodiscard]] int num_agents() const { return static_cast<int>(options_.size()); }
  [[nodiscard]] int options(int agent) const { return options_[static_cast<std::size_t>(agent)]; }
  [[nodiscard]] const std::vector<int>& options_per_agent() const { return options_; }
  [[nodiscard]] int total_dim() const { return total_; }
  [[nodiscard]] int max_options() const { return *std::max_element(options_.begin(), options_.end()); }

  // Agent-major flat index of (agent, option).
  [[nodiscard]] int index(int agent, int option) const { return offsets_[static_cast<std::size_t>(agent)] + option; }
  [[nodiscard]] int offset(int agent) const { return offsets_[static_cast<std::size_t>(agent)]; }

  bool operator==(const Topology& o) const { return options_ == o.options_; }

 private:
  std::vector<int> options_;
  std::vector<int> offsets_;
  int total_ = 0;
};

struct OpinionState {
  Topology topology;
  std::vector<double> values;

  OpinionState() = default;
  OpinionState(Topology t, std::vector<double> v) : topology(std::move(t)), values(std::move(v)) {
    if (static_cast<int>(values.size()) != topology.total_dim())
      throw std::invalid_argument("OpinionState: length does not match topology");
    for (double x : values)
      if (!std::isfinite(x)) throw std::invalid_argument("OpinionState: non-finite entry");
  }
  static OpinionState zeros(const Topology& t) {
    return OpinionState(t, std::vector<double>(static_cast<std::size_t>(t.total_dim()), 0.0));
  }
};

enum class Saturation { kTanh, kScaledSigmoid };

inline std::string to_string(Saturation s) { return s == Saturation::kTanh ? "tanh" : "scaled-sigmoid"; }

inline Saturation saturation_from_string(const std::string& s) {
  if (s == "tanh") return Saturation::kTanh;
  if (s == "scaled-sigmoid") return Saturation::kScaledSigmoid;
  throw std::invalid_argument("unknown saturation '" + s + "'");
}

struct SaturationSpec {
  Saturation s1 = Saturation::kTanh;
  Saturation s2 = Saturation::kTanh;
};

// S(0) = 0, S'(0) = 1, |S| < 1. The scaled sigmoid is 2*sigmoid(2v) - 1,
// evaluated through expm1 so that tiny arguments keep full relative accuracy
// (near the neutral opinion the naive form cancels to zero).
template <class T>
T saturate(Saturation kind, const T& v) {
  using std::abs;
  using std::expm1;
  using std::tanh;
  if (kind == Saturation::kTanh) return tanh(v);
  const T e = expm1(T(-2.0) * abs(v));
  const T r = -e / (T(2.0) + e);
  return value(v) < 0.0 ? -r : r;
}

inline double saturation_eval(Saturation kind, double v) {
  if (!std::isfinite(v)) throw std::domain_error("saturation_eval: non-finite input");
  return saturate(kind, v);
}

inline constexpr double saturation_bound(Saturation) { return 1.0; }

template <class T>
struct BasicNODParams {
  Topology topology;
  std::vector<T> damping;    // d, one per (agent, option)
  std::vector<T> bias;       // b
  std::vector<T> self_gain;  // alpha
  T attention{1.0};          // lambda
  // beta: per agent, options x options, zero diagonal.
  std::vector<Mat<T>> intra_agent;
  // gamma: indexed [i * num_agents + j], length options(i); unused for i == j.
  std::vector<std::vector<T>> same_option;
  // delta: indexed [i * num_agents + j], options(i) x options(i), zero diagonal.
  std::vector<Mat<T>> cross_option;
  SaturationSpec saturation;

  [[nodiscard]] const std::vector<T>& gamma(int i, int j) const {
    return same_option[static_cast<std::size_t>(i * topology.num_agents() + j)];
  }
  std::vector<T>& gamma(int i, int j) { return same_option[static_cast<std::size_t>(i * topology.num_agents() + j)]; }
  [[nodiscard]] const Mat<T>& delta(int i, int j) const {
    return cross_option[static_cast<std::size_t>(i * topology.num_agents() + j)];
  }
  Mat<T>& delta(int i, int j) { return cross_option[static_cast<std::size_t>(i * topology.num_agents() + j)]; }
  [[nodiscard]] const Mat<T>& beta(int i) const { return intra_agent[static_cast<std::size_t>(i)]; }
  Mat<T>& beta(int i) { return intra_agent[static_cast<std::size_t>(i)]; }

  // Zero couplings, unit damping and attention.
  static BasicNODParams zeros(const Topology& t) {
    BasicNODParams p;
    p.topology = t;
    const auto n = static_cast<std::size_t>(t.total_dim());
    p.damping.assign(n, T(1.0));
    p.bias.assign(n, T(0.0));
    p.self_gain.assign(n, T(0.0));
    p.attention = T(1.0);
    for (int i = 0; i < t.num_agents(); ++i) p.intra_agent.emplace_back(t.options(i), t.options(i));
    for (int i = 0; i < t.num_agents(); ++i)
      for (int j = 0; j < t.num_agents(); ++j) {
        p.same_option.emplace_back(static_cast<std::size_t>(t.options(i)), T(0.0));
        p.cross_option.emplace_back(t.options(i), t.options(i));
      }
    return p;
  }
};

using NODParams = BasicNODParams<double>;

class InvalidParams : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Checks every structural and sign invariant; throws InvalidParams naming the
// first violation.
template <class T>
void validate(const BasicNODParams<T>& p) {
  const Topology& t = p.topology;
  const auto n = static_cast<std::size_t>(t.total_dim());
  const int na = t.num_agents();
  auto fail = [](const std::string& what) { throw InvalidParams("NODParams: " + what); };
  if (p.damping.size() != n || p.bias.size() != n || p.self_gain.size() != n) fail("vector length mismatch");
  if (p.intra_agent.size() != static_cast<std::size_t>(na)) fail("intra-agent block count");
  if (p.same_option.size() != static_cast<std::size_t>(na * na) || p.cross_option.size() != static_cast<std::size_t>(na * na))
    fail("inter-agent block count");
  auto finite = [](const T& x) { return std::isfinite(value(x)); };
  for (std::size_t k = 0; k < n; ++k) {
    if (!finite(p.damping[k]) || !(value(p.damping[k]) > 0.0)) fail("damping must be positive");
    if (!finite(p.bias[k])) fail("bias must be finite");
    if (!finite(p.self_gain[k]) || value(p.self_gain[k]) < 0.0) fail("self gain must be nonnegative");
  }
  if (!finite(p.attention) || !(value(p.attention) > 0.0)) fail("attention must be positive");
  for (int i = 0; i < na; ++i) {
    const int ni = t.options(i);
    const Mat<T>& b = p.beta(i);
    if (b.rows() != ni || b.cols() != ni) fail("beta block shape");
    for (int l = 0; l < ni; ++l)
      for (int q = 0; q < ni; ++q) {
        if (!finite(b(l, q)) || value(b(l, q)) < 0.0) fail("beta must be nonnegative");
        if (l == q && value(b(l, q)) != 0.0) fail("beta diagonal must be zero");
      }
    for (int j = 0; j < na; ++j) {
      const auto& g = p.gamma(i, j);
      const Mat<T>& d = p.delta(i, j);
      if (static_cast<int>(g.size()) != ni) fail("gamma block shape");
      if (d.rows() != ni || d.cols() != ni) fail("delta block shape");
      const int shared = (i == j) ? 0 : std::min(ni, t.options(j));
      for (int l = 0; l < ni; ++l) {
        if (!finite(g[static_cast<std::size_t>(l)])) fail("gamma must be finite");
        if (l >= shared && value(g[static_cast<std::size_t>(l)]) != 0.0) fail("gamma entry without a matching option");
        for (int q = 0; q < ni; ++q) {
          if (!finite(d(l, q))) fail("delta must be finite");
          if ((l == q || q >= shared) && value(d(l, q)) != 0.0) fail("delta entry without a matching option");
        }
      }
    }
  }
}

// Saturated coupling term S(z) (before the attention gain).
template <class T>
std::vector<T> saturation_term(const std::vector<T>& z, const BasicNODParams<T>& p) {
  const Topology& t = p.topology;
  const int na = t.num_agents();
  std::vector<T> s(z.size(), T(0.0));
  for (int i = 0; i < na; ++i) {
    const int ni = t.options(i);
    for (int l = 0; l < ni; ++l) {
      const int il = t.index(i, l);
      T arg1 = p.self_gain[static_cast<std::size_t>(il)] * z[static_cast<std::size_t>(il)];
      for (int j = 0; j < na; ++j) {
        if (j == i || l >= t.options(j)) continue;
        arg1 = arg1 + p.gamma(i, j)[static_cast<std::size_t>(l)] * z[static_cast<std::size_t>(t.index(j, l))];
      }
      T acc = saturate(p.saturation.s1, arg1);
      for (int q = 0; q < ni; ++q) {
        if (q == l) continue;
        T arg2 = p.beta(i)(l, q) * z[static_cast<std::size_t>(t.index(i, q))];
        for (int j = 0; j < na; ++j) {
          if (j == i || q >= t.options(j)) continue;
          arg2 = arg2 + p.delta(i, j)(l, q) * z[static_cast<std::size_t>(t.index(j, q))];
        }
        acc = acc + saturate(p.saturation.s2, arg2);
      }
      s[static_cast<std::size_t>(il)] = acc;
    }
  }
  return s;
}

template <class T>
std::vector<T> nod_rate(const std::vector<T>& z, const BasicNODParams<T>& p) {
  if (static_cast<int>(z.size()) != p.topology.total_dim())
    throw std::invalid_argument("nod_rate: opinion/topology mismatch");
  std::vector<T> s = saturation_term(z, p);
  for (std::size_t k = 0; k < z.size(); ++k) s[k] = -p.damping[k] * z[k] + p.bias[k] + p.attention * s[k];
  return s;
}

inline std::vector<double> nod_rate(const OpinionState& z, const NODParams& p) {
  if (!(z.topology == p.topology)) throw std::invalid_argument("nod_rate: topology mismatch");
  return nod_rate(z.values, p);
}

enum class Integrator { kEuler, kRK4 };

template <class T>
std::vector<T> nod_step(const std::vector<T>& z, const BasicNODParams<T>& p, double dt,
                        Integrator method = Integrator::kEuler) {
  if (!(dt > 0.0)) throw std::invalid_argument("nod_step: dt must be positive");
  const T h(dt);
  if (method == Integrator::kEuler) return z + scaled(nod_rate(z, p), h);
  const T half(0.5 * dt);
  const auto k1 = nod_rate(z, p);
  const auto k2 = nod_rate(z + scaled(k1, half), p);
  const auto k3 = nod_rate(z + scaled(k2, half), p);
  const auto k4 = nod_rate(z + scaled(k3, h), p);
  std::vector<T> out(z);
  const T sixth(dt / 6.0);
  for (std::size_t k = 0; k < z.size(); ++k)
    out[k] = z[k] + sixth * (k1[k] + T(2.0) * k2[k] + T(2.0) * k3[k] + k4[k]);
  return out;
}

inline OpinionState nod_step(const OpinionState& z, const NODParams& p, double dt,
                             Integrator method = Integrator::kEuler) {
  if (!(z.topology == p.topology)) throw std::invalid_argument("nod_step: topology mismatch");
  return OpinionState(z.topology, nod_step(z.values, p, dt, method));
}

// Trajectory of length steps + 1. `params` holds either one entry (constant)
// or at least `steps` entries, entry t driving the transition t -> t+1.
inline std::vector<OpinionState> simulate_opinions(const OpinionState& z0, const std::vector<NODParams>& params,
                                                   double dt, int steps, Integrator method = Integrator::kEuler) {
  if (steps < 0) throw std::invalid_argument("simulate_opinions: negative step count");
  if (steps > 0 && params.size() != 1 && static_cast<int>(params.size()) < steps)
    throw std::invalid_argument("simulate_opinions: parameter sequence shorter than step count");
  std::vector<OpinionState> traj{z0};
  traj.reserve(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t < steps; ++t) {
    const NODParams& p = params.size() == 1 ? params.front() : params[static_cast<std::size_t>(t)];
    traj.push_back(nod_step(traj.back(), p, dt, method));
  }
  return traj;
}

// Relabels agents: new agent k is old agent perm[k].
inline NODParams permute_agents(const NODParams& p, const std::vector<int>& perm) {
  const Topology& t = p.topology;
  const int na = t.num_agents();
  std::vector<int> opts;
  for (int k = 0; k < na; ++k) opts.push_back(t.options(perm[static_cast<std::size_t>(k)]));
  NODParams q = NODParams::zeros(Topology(opts));
  q.attention = p.attention;
  q.saturation = p.saturation;
  for (int k = 0; k < na; ++k) {
    const int i = perm[static_cast<std::size_t>(k)];
    for (int l = 0; l < t.options(i); ++l) {
      const auto src = static_cast<std::size_t>(t.index(i, l));
      const auto dst = static_cast<std::size_t>(q.topology.index(k, l));
      q.damping[dst] = p.damping[src];
      q.bias[dst] = p.bias[src];
      q.self_gain[dst] = p.self_gain[src];
    }
    q.beta(k) = p.beta(i);
    for (int m = 0; m < na; ++m) {
      const int j = perm[static_cast<std::size_t>(m)];
      q.gamma(k, m) = p.gamma(i, j);
      q.delta(k, m) = p.delta(i, j);
    }
  }
  return q;
}

inline std::vector<double> permute_opinions(const Topology& t, const std::vector<double>& z, const std::vector<int>& perm) {
  std::vector<double> out;
  out.reserve(z.size());
  for (int k : perm)
    for (int l = 0; l < t.options(k); ++l) out.push_back(z[static_cast<std::size_t>(t.index(k, l))]);
  return out;
}

}  // namespace nnod
