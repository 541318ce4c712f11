// Minimal reverse-mode automatic differentiation.
//
// A Tape records every elementary operation performed on ad::Var values while
// it is active on the current thread. Nodes have at most two parents; larger
// kernels (matrix products, network layers) register a CustomOp whose
// vector-Jacobian product is supplied as a closure.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace nnod::ad {

class Tape {
 public:
  using Index = std::int32_t;
  using Vjp = std::function<void(std::span<const double> out_adj, std::span<double> in_adj)>;

  struct Node {
    Index a = -1;
    Index b = -1;
    double da = 0.0;
    double db = 0.0;
  };

  Index leaf() {
    nodes_.push_back(Node{});
    return static_cast<Index>(nodes_.size() - 1);
  }

  Index push(Index a, double da, Index b = -1, double db = 0.0) {
    nodes_.push_back(Node{a, b, da, db});
    return static_cast<Index>(nodes_.size() - 1);
  }

  // Registers `n_out` fresh output nodes computed from `inputs`. Returns the
  // index of the first output; the rest follow contiguously.
  Index custom(std::vector<Index> inputs, Index n_out, Vjp vjp) {
    const auto first = static_cast<Index>(nodes_.size());
    const auto op = static_cast<Index>(ops_.size());
    ops_.push_back(CustomOp{std::move(inputs), first, n_out, std::move(vjp)});
    nodes_.resize(nodes_.size() + static_cast<std::size_t>(n_out));
    nodes_[static_cast<std::size_t>(first)].a = -2 - op;
    return first;
  }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    ops_.clear();
  }

  // Adjoints of every node with respect to `output`.
  [[nodiscard]] std::vector<double> adjoints(Index output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (output < 0) return adj;
    adj[static_cast<std::size_t>(output)] = 1.0;
    std::vector<double> in_adj;
    for (auto i = static_cast<std::ptrdiff_t>(nodes_.size()) - 1; i >= 0; --i) {
      const Node& nd = nodes_[static_cast<std::size_t>(i)];
      if (nd.a <= -2) {
        const CustomOp& op = ops_[static_cast<std::size_t>(-2 - nd.a)];
        std::span<const double> out(adj.data() + op.first_output, static_cast<std::size_t>(op.n_outputs));
        bool any = false;
        for (double g : out) any = any || g != 0.0;
        if (!any) continue;
        in_adj.assign(op.inputs.size(), 0.0);
        op.vjp(out, in_adj);
        for (std::size_t k = 0; k < op.inputs.size(); ++k)
          if (op.inputs[k] >= 0) adj[static_cast<std::size_t>(op.inputs[k])] += in_adj[k];
        continue;
      }
      const double g = adj[static_cast<std::size_t>(i)];
      if (g == 0.0) continue;
      if (nd.a >= 0) adj[static_cast<std::size_t>(nd.a)] += nd.da * g;
      if (nd.b >= 0) adj[static_cast<std::size_t>(nd.b)] += nd.db * g;
    }
    return adj;
  }

 private:
  struct CustomOp {
    std::vector<Index> inputs;
    Index first_output;
    Index n_outputs;
    Vjp vjp;
  };
  std::vector<Node> nodes_;
  std::vector<CustomOp> ops_;
};

inline Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}

// Makes `tape` the recording tape of this thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(active_tape()) { active_tape() = &tape; }
  ~TapeScope() { active_tape() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// A differentiable scalar. id < 0 marks a constant that never touches the tape.
struct Var {
  double v = 0.0;
  Tape::Index id = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: constants convert implicitly
  Var(double value, Tape::Index index) : v(value), id(index) {}

  static Var independent(double value) {
    Tape* t = active_tape();
    if (t == nullptr) throw std::logic_error("ad::Var::independent requires an active tape");
    return Var(value, t->leaf());
  }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);
};

namespace detail {

inline Var unary(double v, const Var& a, double da) {
  if (a.id < 0) return Var(v);
  return Var(v, active_tape()->push(a.id, da));
}

inline Var binary(double v, const Var& a, double da, const Var& b, double db) {
  if (a.id < 0 && b.id < 0) return Var(v);
  if (a.id < 0) return Var(v, active_tape()->push(b.id, db));
  if (b.id < 0) return Var(v, active_tape()->push(a.id, da));
  return Var(v, active_tape()->push(a.id, da, b.id, db));
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a.v + b.v, a, 1.0, b, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a.v - b.v, a, 1.0, b, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(a.v * b.v, a, b.v, b, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.v / b.v;
  return detail::binary(q, a, 1.0 / b.v, b, -q / b.v);
}
inline Var operator-(const Var& a) { return detail::unary(-a.v, a, -1.0); }
inline Var operator+(const Var& a) { return a; }

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }
inline Var& Var::operator/=(const Var& o) { return *this = *this / o; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }
inline bool operator==(const Var& a, const Var& b) { return a.v == b.v; }
inline bool operator!=(const Var& a, const Var& b) { return a.v != b.v; }

inline Var sin(const Var& a) { return detail::unary(std::sin(a.v), a, std::cos(a.v)); }
inline Var cos(const Var& a) { return detail::unary(std::cos(a.v), a, -std::sin(a.v)); }
inline Var tan(const Var& a) {
  const double t = std::tan(a.v);
  return detail::unary(t, a, 1.0 + t * t);
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return detail::unary(e, a, e);
}
inline Var expm1(const Var& a) { return detail::unary(std::expm1(a.v), a, std::exp(a.v)); }
inline Var log(const Var& a) { return detail::unary(std::log(a.v), a, 1.0 / a.v); }
inline Var log1p(const Var& a) { return detail::unary(std::log1p(a.v), a, 1.0 / (1.0 + a.v)); }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.v);
  return detail::unary(s, a, 0.5 / s);
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.v);
  return detail::unary(t, a, 1.0 - t * t);
}
inline Var abs(const Var& a) { return detail::unary(std::abs(a.v), a, a.v >= 0.0 ? 1.0 : -1.0); }
inline Var atan2(const Var& y, const Var& x) {
  const double r2 = x.v * x.v + y.v * y.v;
  return detail::binary(std::atan2(y.v, x.v), y, x.v / r2, x, -y.v / r2);
}

inline bool isfinite(const Var& a) { return std::isfinite(a.v); }

}  // namespace nnod::ad

namespace nnod {

using ad::Var;

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.v; }

// Lifts a double into scalar type T (a constant for Var).
template <class T>
inline T lift(double x) {
  return T(x);
}

}  // namespace nnod
