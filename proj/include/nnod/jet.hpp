// Second-order forward-mode jets: value, gradient and Hessian of an expression
// with respect to N base variables. Used to quadraticize stage costs exactly.
#pragma once

#include <array>
#include <cmath>

#include "nnod/ad.hpp"
#include "nnod/math.hpp"

namespace nnod {

template <class T, int N>
struct Jet {
  static constexpr int kPacked = N * (N + 1) / 2;

  T v{0.0};
  std::array<T, N> g{};
  std::array<T, kPacked> h{};  // upper triangle, row-major

  Jet() {
    g.fill(T(0.0));
    h.fill(T(0.0));
  }
  explicit Jet(const T& c) : Jet() { v = c; }

  static constexpr int idx(int i, int j) {
    if (i > j) std::swap(i, j);
    return i * N - i * (i - 1) / 2 + (j - i);
  }

  [[nodiscard]] T hess(int i, int j) const { return h[static_cast<std::size_t>(idx(i, j))]; }
  void set_hess(int i, int j, const T& x) { h[static_cast<std::size_t>(idx(i, j))] = x; }

  // Applies a scalar function given f(v), f'(v) and f''(v).
  [[nodiscard]] Jet chain(const T& f0, const T& f1, const T& f2) const {
    Jet r;
    r.v = f0;
    for (int i = 0; i < N; ++i) r.g[i] = f1 * g[i];
    for (int i = 0; i < N; ++i)
      for (int j = i; j < N; ++j) {
        const auto k = static_cast<std::size_t>(idx(i, j));
        r.h[k] = f1 * h[k] + f2 * g[i] * g[j];
      }
    return r;
  }
};

template <class T, int N>
Jet<T, N> operator+(const Jet<T, N>& a, const Jet<T, N>& b) {
  Jet<T, N> r;
  r.v = a.v + b.v;
  for (int i = 0; i < N; ++i) r.g[i] = a.g[i] + b.g[i];
  for (int k = 0; k < Jet<T, N>::kPacked; ++k) r.h[k] = a.h[k] + b.h[k];
  return r;
}

template <class T, int N>
Jet<T, N> operator-(const Jet<T, N>& a, const Jet<T, N>& b) {
  Jet<T, N> r;
  r.v = a.v - b.v;
  for (int i = 0; i < N; ++i) r.g[i] = a.g[i] - b.g[i];
  for (int k = 0; k < Jet<T, N>::kPacked; ++k) r.h[k] = a.h[k] - b.h[k];
  return r;
}

template <class T, int N>
Jet<T, N> operator-(const Jet<T, N>& a) {
  Jet<T, N> r;
  r.v = -a.v;
  for (int i = 0; i < N; ++i) r.g[i] = -a.g[i];
  for (int k = 0; k < Jet<T, N>::kPacked; ++k) r.h[k] = -a.h[k];
  return r;
}

template <class T, int N>
Jet<T, N> operator+(const Jet<T, N>& a, const T& c) {
  Jet<T, N> r = a;
  r.v = a.v + c;
  return r;
}

template <class T, int N>
Jet<T, N> operator-(const Jet<T, N>& a, const T& c) {
  Jet<T, N> r = a;
  r.v = a.v - c;
  return r;
}

template <class T, int N>
Jet<T, N> operator*(const Jet<T, N>& a, const T& c) {
  Jet<T, N> r;
  r.v = a.v * c;
  for (int i = 0; i < N; ++i) r.g[i] = a.g[i] * c;
  for (int k = 0; k < Jet<T, N>::kPacked; ++k) r.h[k] = a.h[k] * c;
  return r;
}

template <class T, int N>
Jet<T, N> operator*(const Jet<T, N>& a, const Jet<T, N>& b) {
  Jet<T, N> r;
  r.v = a.v * b.v;
  for (int i = 0; i < N; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) {
      const auto k = static_cast<std::size_t>(Jet<T, N>::idx(i, j));
      r.h[k] = a.h[k] * b.v + a.v * b.h[k] + a.g[i] * b.g[j] + a.g[j] * b.g[i];
    }
  return r;
}

template <class T, int N>
Jet<T, N> jet_square(const Jet<T, N>& a) {
  return a.chain(a.v * a.v, T(2.0) * a.v, T(2.0));
}

template <class T, int N>
Jet<T, N> jet_sqrt(const Jet<T, N>& a) {
  using std::sqrt;
  const T s = sqrt(a.v);
  return a.chain(s, T(0.5) / s, T(-0.25) / (s * a.v));
}

// softplus(k x) / k and its first two derivatives.
template <class T, int N>
Jet<T, N> jet_softplus(const Jet<T, N>& a, double sharpness = 1.0) {
  const T kx = a.v * T(sharpness);
  const T sp = softplus(kx) / T(sharpness);
  const T sg = sigmoid(kx);
  return a.chain(sp, sg, T(sharpness) * sg * (T(1.0) - sg));
}

// softplus(k x)^2 / k^2: a smooth one-sided quadratic penalty.
template <class T, int N>
Jet<T, N> jet_barrier(const Jet<T, N>& a, double sharpness) {
  return jet_square(jet_softplus(a, sharpness));
}

}  // namespace nnod
