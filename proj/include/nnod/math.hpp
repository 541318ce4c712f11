#pragma once

#include <cmath>
#include <numbers>

#include "nnod/ad.hpp"

namespace nnod {

template <class T>
T square(const T& x) {
  return x * x;
}

// log(1 + e^x), evaluated without overflow.
template <class T>
T softplus(const T& x) {
  using std::exp;
  using std::log1p;
  if (value(x) > 0.0) return x + log1p(exp(-x));
  return log1p(exp(x));
}

template <class T>
T sigmoid(const T& x) {
  using std::exp;
  if (value(x) >= 0.0) return T(1.0) / (T(1.0) + exp(-x));
  const T e = exp(x);
  return e / (T(1.0) + e);
}

// Wraps an angle into (-pi, pi] by shifting whole turns; the derivative is 1.
template <class T>
T wrap_angle(const T& a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double k = std::floor((value(a) + std::numbers::pi) / two_pi);
  T r = a - T(k * two_pi);
  if (value(r) <= -std::numbers::pi) r = r + T(two_pi);
  return r;
}

// Wraps a signed arc-length difference into [-L/2, L/2).
template <class T>
T wrap_signed(const T& ds, double period) {
  if (period <= 0.0) return ds;
  const double k = std::floor((value(ds) + 0.5 * period) / period);
  return ds - T(k * period);
}

}  // namespace nnod
