// Small dense matrices over a generic scalar (double or ad::Var).
//
// Sizes here are tiny (joint states of two cars, NOD Jacobians), so storage is
// a row-major std::vector and kernels are plain loops.
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "nnod/ad.hpp"

namespace nnod {

template <class T>
using Vec = std::vector<T>;

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), T(0.0)) {}
  Mat(int rows, int cols, std::initializer_list<double> row_major) : Mat(rows, cols) {
    assert(static_cast<int>(row_major.size()) == rows * cols);
    std::size_t k = 0;
    for (double x : row_major) data_[k++] = T(x);
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  [[nodiscard]] int rows() const { return rows_; }
  [[nodiscard]] int cols() const { return cols_; }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }

  [[nodiscard]] const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  [[nodiscard]] Mat transpose() const {
    Mat t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  [[nodiscard]] Mat block(int r0, int c0, int nr, int nc) const {
    Mat b(nr, nc);
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nc; ++j) b(i, j) = (*this)(r0 + i, c0 + j);
    return b;
  }

  void set_block(int r0, int c0, const Mat& b) {
    for (int i = 0; i < b.rows(); ++i)
      for (int j = 0; j < b.cols(); ++j) (*this)(r0 + i, c0 + j) = b(i, j);
  }

  Mat& operator+=(const Mat& o) {
    assert(rows_ == o.rows_ && cols_ == o.cols_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] = data_[k] + o.data_[k];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    assert(rows_ == o.rows_ && cols_ == o.cols_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] = data_[k] - o.data_[k];
    return *this;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

template <class T>
Mat<T> operator+(Mat<T> a, const Mat<T>& b) {
  a += b;
  return a;
}

template <class T>
Mat<T> operator-(Mat<T> a, const Mat<T>& b) {
  a -= b;
  return a;
}

template <class T>
Mat<T> operator*(const Mat<T>& a, const Mat<T>& b) {
  assert(a.cols() == b.rows());
  Mat<T> c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      T acc(0.0);
      for (int k = 0; k < a.cols(); ++k) acc = acc + a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

template <class T>
Mat<T> scaled(Mat<T> a, const T& s) {
  for (auto& x : a.data()) x = x * s;
  return a;
}

// a' * b without forming the transpose.
template <class T>
Mat<T> tmul(const Mat<T>& a, const Mat<T>& b) {
  assert(a.rows() == b.rows());
  Mat<T> c(a.cols(), b.cols());
  for (int i = 0; i < a.cols(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      T acc(0.0);
      for (int k = 0; k < a.rows(); ++k) acc = acc + a(k, i) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

template <class T>
Vec<T> operator*(const Mat<T>& a, const Vec<T>& x) {
  assert(a.cols() == static_cast<int>(x.size()));
  Vec<T> y(static_cast<std::size_t>(a.rows()), T(0.0));
  for (int i = 0; i < a.rows(); ++i) {
    T acc(0.0);
    for (int k = 0; k < a.cols(); ++k) acc = acc + a(i, k) * x[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

// a' * x.
template <class T>
Vec<T> tmul(const Mat<T>& a, const Vec<T>& x) {
  assert(a.rows() == static_cast<int>(x.size()));
  Vec<T> y(static_cast<std::size_t>(a.cols()), T(0.0));
  for (int k = 0; k < a.rows(); ++k)
    for (int i = 0; i < a.cols(); ++i)
      y[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + a(k, i) * x[static_cast<std::size_t>(k)];
  return y;
}

template <class T>
Vec<T> operator+(Vec<T> a, const Vec<T>& b) {
  assert(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = a[k] + b[k];
  return a;
}

template <class T>
Vec<T> operator-(Vec<T> a, const Vec<T>& b) {
  assert(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = a[k] - b[k];
  return a;
}

template <class T>
Vec<T> scaled(Vec<T> a, const T& s) {
  for (auto& x : a) x = x * s;
  return a;
}

template <class T>
T dot(const Vec<T>& a, const Vec<T>& b) {
  assert(a.size() == b.size());
  T acc(0.0);
  for (std::size_t k = 0; k < a.size(); ++k) acc = acc + a[k] * b[k];
  return acc;
}

template <class T>
double max_abs(const Vec<T>& a) {
  double m = 0.0;
  for (const auto& x : a) m = std::max(m, std::abs(value(x)));
  return m;
}

template <class T>
double max_abs(const Mat<T>& a) {
  return max_abs(a.data());
}

template <class T>
double max_abs_diff(const Mat<T>& a, const Mat<T>& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k)
    m = std::max(m, std::abs(value(a.data()[k]) - value(b.data()[k])));
  return m;
}

template <class T>
Mat<double> values(const Mat<T>& a) {
  Mat<double> m(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.data().size(); ++k) m.data()[k] = value(a.data()[k]);
  return m;
}

template <class T>
Vec<double> values(const Vec<T>& a) {
  Vec<double> v(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) v[k] = value(a[k]);
  return v;
}

// Solves a * x = b (b may have several columns) by Gaussian elimination with
// partial pivoting. Pivot choice depends only on values, so the result is a
// smooth function of the entries away from pivot ties.
template <class T>
Mat<T> solve(Mat<T> a, Mat<T> b, double singular_tol = 1e-13) {
  const int n = a.rows();
  if (a.cols() != n || b.rows() != n) throw std::invalid_argument("solve: dimension mismatch");
  double scale = 0.0;
  for (const auto& x : a.data()) scale = std::max(scale, std::abs(value(x)));
  if (scale == 0.0) throw SingularMatrixError("solve: zero matrix");
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::abs(value(a(col, col)));
    for (int r = col + 1; r < n; ++r) {
      const double cand = std::abs(value(a(r, col)));
      if (cand > best) {
        best = cand;
        piv = r;
      }
    }
    if (best <= singular_tol * scale)
      throw SingularMatrixError("solve: singular matrix (pivot " + std::to_string(best) + ")");
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      for (int j = 0; j < b.cols(); ++j) std::swap(b(col, j), b(piv, j));
    }
    const T inv = T(1.0) / a(col, col);
    for (int r = col + 1; r < n; ++r) {
      const T f = a(r, col) * inv;
      if constexpr (std::is_same_v<T, double>)
        if (f == 0.0) continue;
      for (int j = col + 1; j < n; ++j) a(r, j) = a(r, j) - f * a(col, j);
      for (int j = 0; j < b.cols(); ++j) b(r, j) = b(r, j) - f * b(col, j);
    }
  }
  for (int col = n - 1; col >= 0; --col) {
    const T inv = T(1.0) / a(col, col);
    for (int j = 0; j < b.cols(); ++j) {
      T acc = b(col, j);
      for (int k = col + 1; k < n; ++k) acc = acc - a(col, k) * b(k, j);
      b(col, j) = acc * inv;
    }
  }
  return b;
}

// Cholesky test on the values of a symmetric matrix.
template <class T>
bool is_positive_definite(const Mat<T>& a) {
  const int n = a.rows();
  std::vector<double> l(static_cast<std::size_t>(n * n), 0.0);
  for (int j = 0; j < n; ++j) {
    double d = value(a(j, j));
    for (int k = 0; k < j; ++k) d -= l[static_cast<std::size_t>(j * n + k)] * l[static_cast<std::size_t>(j * n + k)];
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    l[static_cast<std::size_t>(j * n + j)] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = 0.5 * (value(a(i, j)) + value(a(j, i)));
      for (int k = 0; k < j; ++k) s -= l[static_cast<std::size_t>(i * n + k)] * l[static_cast<std::size_t>(j * n + k)];
      l[static_cast<std::size_t>(i * n + j)] = s / ljj;
    }
  }
  return true;
}

// Taped kernels. Each product or solve over ad::Var records one custom tape
// operation whose adjoint is evaluated with plain double loops, instead of one
// node per scalar multiply-add.
namespace detail {

inline bool any_taped(const Mat<Var>& a) {
  for (const auto& x : a.data())
    if (x.id >= 0) return true;
  return false;
}

inline Mat<Var> record(const Mat<double>& out, const Mat<Var>& a, const Mat<Var>& b, ad::Tape::Vjp vjp) {
  std::vector<ad::Tape::Index> inputs;
  inputs.reserve(a.data().size() + b.data().size());
  for (const auto& x : a.data()) inputs.push_back(x.id);
  for (const auto& x : b.data()) inputs.push_back(x.id);
  const auto n = static_cast<ad::Tape::Index>(out.data().size());
  const auto first = ad::active_tape()->custom(std::move(inputs), n, std::move(vjp));
  Mat<Var> r(out.rows(), out.cols());
  for (ad::Tape::Index k = 0; k < n; ++k) r.data()[static_cast<std::size_t>(k)] = Var(out.data()[static_cast<std::size_t>(k)], first + k);
  return r;
}

inline Mat<double> from_span(std::span<const double> g, int rows, int cols) {
  Mat<double> m(rows, cols);
  std::copy(g.begin(), g.end(), m.data().begin());
  return m;
}

inline void to_span(const Mat<double>& m, std::span<double> dst) { std::copy(m.data().begin(), m.data().end(), dst.begin()); }

}  // namespace detail

inline Mat<Var> operator*(const Mat<Var>& a, const Mat<Var>& b) {
  assert(a.cols() == b.rows());
  const Mat<double> av = values(a), bv = values(b);
  const Mat<double> c = av * bv;
  if (!detail::any_taped(a) && !detail::any_taped(b)) {
    Mat<Var> r(c.rows(), c.cols());
    for (std::size_t k = 0; k < c.data().size(); ++k) r.data()[k] = Var(c.data()[k]);
    return r;
  }
  const std::size_t na = av.data().size();
  return detail::record(c, a, b, [av, bv, na](std::span<const double> g, std::span<double> in) {
    const Mat<double> gc = detail::from_span(g, av.rows(), bv.cols());
    detail::to_span(gc * bv.transpose(), in.subspan(0, na));
    detail::to_span(tmul(av, gc), in.subspan(na));
  });
}

inline Mat<Var> tmul(const Mat<Var>& a, const Mat<Var>& b) {
  assert(a.rows() == b.rows());
  const Mat<double> av = values(a), bv = values(b);
  const Mat<double> c = tmul(av, bv);
  if (!detail::any_taped(a) && !detail::any_taped(b)) {
    Mat<Var> r(c.rows(), c.cols());
    for (std::size_t k = 0; k < c.data().size(); ++k) r.data()[k] = Var(c.data()[k]);
    return r;
  }
  const std::size_t na = av.data().size();
  return detail::record(c, a, b, [av, bv, na](std::span<const double> g, std::span<double> in) {
    const Mat<double> gc = detail::from_span(g, av.cols(), bv.cols());
    detail::to_span(bv * gc.transpose(), in.subspan(0, na));
    detail::to_span(av * gc, in.subspan(na));
  });
}

inline Mat<Var> solve(const Mat<Var>& a, const Mat<Var>& b, double singular_tol = 1e-13) {
  const Mat<double> av = values(a);
  const Mat<double> x = solve(av, values(b), singular_tol);
  if (!detail::any_taped(a) && !detail::any_taped(b)) {
    Mat<Var> r(x.rows(), x.cols());
    for (std::size_t k = 0; k < x.data().size(); ++k) r.data()[k] = Var(x.data()[k]);
    return r;
  }
  const std::size_t na = av.data().size();
  return detail::record(x, a, b, [av, x, na, singular_tol](std::span<const double> g, std::span<double> in) {
    const Mat<double> gx = detail::from_span(g, x.rows(), x.cols());
    const Mat<double> gb = solve(av.transpose(), gx, singular_tol);
    Mat<double> ga = gb * x.transpose();
    for (auto& v : ga.data()) v = -v;
    detail::to_span(ga, in.subspan(0, na));
    detail::to_span(gb, in.subspan(na));
  });
}

}  // namespace nnod
