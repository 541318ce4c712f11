// Race tracks: a centerline sampled as (s, x, y, halfwidth) and the
// curvilinear frame (arc length s, signed lateral offset e) used by all
// track-relative costs.
//
// Between samples the centerline is a cubic spline in s (periodic for closed
// tracks, natural for open ones). The spline passes through every sample, so
// sample points project onto their own s, and it has continuous curvature, so
// s(p) and e(p) are twice differentiable near the track.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnod/ad.hpp"
#include "nnod/math.hpp"

namespace nnod {

struct TrackSample {
  double s = 0.0;
  double x = 0.0;
  double y = 0.0;
  double halfwidth = 0.0;
};

// Value and first three arc-length derivatives of the centerline at s.
struct CenterlinePoint {
  std::array<double, 2> c{}, c1{}, c2{}, c3{};
};

struct Projection {
  double s = 0.0;  // in [0, length) for closed tracks
  double e = 0.0;  // positive to the left of the direction of travel
};

class Track {
 public:
  Track() = default;

  Track(std::vector<TrackSample> samples, bool closed) : samples_(std::move(samples)), closed_(closed) {
    if (samples_.size() < 2) throw std::invalid_argument("Track: need at least two samples");
    for (std::size_t k = 0; k < samples_.size(); ++k) {
      const auto& p = samples_[k];
      if (!std::isfinite(p.s) || !std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.halfwidth))
        throw std::invalid_argument("Track: non-finite sample");
      if (!(p.halfwidth > 0.0)) throw std::invalid_argument("Track: halfwidth must be positive");
      if (k > 0 && !(p.s > samples_[k - 1].s)) throw std::invalid_argument("Track: arc length must increase strictly");
    }
    knots_.clear();
    for (const auto& p : samples_) knots_.push_back(p.s - samples_.front().s);
    if (closed_) {
      const auto& a = samples_.back();
      const auto& b = samples_.front();
      const double gap = std::hypot(b.x - a.x, b.y - a.y);
      if (!(gap > 0.0)) throw std::invalid_argument("Track: closed track repeats its first sample");
      knots_.push_back(knots_.back() + gap);
    }
    length_ = knots_.back();
    fit_spline();
  }

  [[nodiscard]] const std::vector<TrackSample>& samples() const { return samples_; }
  [[nodiscard]] bool closed() const { return closed_; }
  [[nodiscard]] double length() const { return length_; }
  [[nodiscard]] int segments() const { return static_cast<int>(knots_.size()) - 1; }

  [[nodiscard]] double wrap(double s) const {
    if (!closed_) return s;
    double r = std::fmod(s, length_);
    if (r < 0.0) r += length_;
    if (r >= length_) r = 0.0;
    return r;
  }

  // Signed arc-length difference a - b, wrapped to [-L/2, L/2) on closed tracks.
  template <class T>
  T gap(const T& a, const T& b) const {
    return closed_ ? wrap_signed(a - b, length_) : a - b;
  }

  [[nodiscard]] CenterlinePoint eval(double s) const {
    CenterlinePoint out;
    if (!closed_ && (s < 0.0 || s > length_)) {
      // Straight extrapolation past the ends of an open track.
      const double end = s < 0.0 ? 0.0 : length_;
      const CenterlinePoint e = eval(end);
      for (int d = 0; d < 2; ++d) {
        out.c[d] = e.c[d] + e.c1[d] * (s - end);
        out.c1[d] = e.c1[d];
      }
      return out;
    }
    const double u = wrap(s);
    const int i = segment_of(u);
    const double h = knots_[i + 1] - knots_[i];
    const double a = (knots_[i + 1] - u) / h;
    const double b = (u - knots_[i]) / h;
    const int j = (i + 1) % static_cast<int>(samples_.size());
    for (int d = 0; d < 2; ++d) {
      const double y0 = coord(i, d), y1 = coord(j, d);
      const double m0 = m_[d][static_cast<std::size_t>(i)], m1 = m_[d][static_cast<std::size_t>(j)];
      out.c[d] = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
      out.c1[d] = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
      out.c2[d] = a * m0 + b * m1;
      out.c3[d] = (m1 - m0) / h;
    }
    return out;
  }

  // Halfwidth (piecewise linear between samples) and its slope in s.
  [[nodiscard]] std::pair<double, double> halfwidth(double s) const {
    double u = closed_ ? wrap(s) : std::clamp(s, 0.0, length_);
    const int i = segment_of(u);
    const int j = (i + 1) % static_cast<int>(samples_.size());
    const double h = knots_[i + 1] - knots_[i];
    const double w0 = samples_[static_cast<std::size_t>(i)].halfwidth;
    const double w1 = samples_[static_cast<std::size_t>(j)].halfwidth;
    const double slope = (!closed_ && (s < 0.0 || s > length_)) ? 0.0 : (w1 - w0) / h;
    return {w0 + (w1 - w0) * (u - knots_[i]) / h, slope};
  }

  [[nodiscard]] double heading(double s) const {
    const auto p = eval(s);
    return std::atan2(p.c1[1], p.c1[0]);
  }

  // Signed curvature (positive for left turns).
  [[nodiscard]] double curvature(double s) const {
    const auto p = eval(s);
    const double n2 = p.c1[0] * p.c1[0] + p.c1[1] * p.c1[1];
    return (p.c1[0] * p.c2[1] - p.c1[1] * p.c2[0]) / (n2 * std::sqrt(n2));
  }

  // Pose at arc length s and lateral offset e.
  [[nodiscard]] std::array<double, 3> pose(double s, double e) const {
    const auto p = eval(s);
    const double n = std::hypot(p.c1[0], p.c1[1]);
    return {p.c[0] - e * p.c1[1] / n, p.c[1] + e * p.c1[0] / n, std::atan2(p.c1[1], p.c1[0])};
  }

  // Nearest point on the centerline. The coarse search scans the sampled
  // polyline (ties go to the smaller s); the result is then refined on the
  // spline by safeguarded Newton iterations.
  [[nodiscard]] Projection project(double px, double py) const {
    const int nseg = segments();
    const int ns = static_cast<int>(samples_.size());
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    double best_t = 0.0;
    for (int i = 0; i < nseg; ++i) {
      const auto& a = samples_[static_cast<std::size_t>(i)];
      const auto& b = samples_[static_cast<std::size_t>((i + 1) % ns)];
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double len2 = dx * dx + dy * dy;
      double t = ((px - a.x) * dx + (py - a.y) * dy) / len2;
      if (closed_ || (i > 0 && i < nseg - 1)) t = std::clamp(t, 0.0, 1.0);
      else if (i == 0 && nseg > 1) t = std::min(t, 1.0);
      else if (i == nseg - 1 && nseg > 1) t = std::max(t, 0.0);
      const double qx = a.x + t * dx - px, qy = a.y + t * dy - py;
      const double d2 = qx * qx + qy * qy;
      if (d2 < best_d2 - 1e-12) {
        best_d2 = d2;
        best = i;
        best_t = t;
      }
    }
    const double h = knots_[best + 1] - knots_[best];
    double s = knots_[best] + best_t * h;
    // Newton on g(s) = (p - c(s)) . c'(s) within a bracket around the segment.
    double lo = knots_[best] - 0.5 * h, hi = knots_[best + 1] + 0.5 * h;
    if (!closed_) {
      if (best == 0) lo -= 1e4;
      if (best == nseg - 1) hi += 1e4;
    }
    for (int it = 0; it < 60; ++it) {
      const auto c = eval(s);
      const double rx = px - c.c[0], ry = py - c.c[1];
      const double g = rx * c.c1[0] + ry * c.c1[1];
      if (g == 0.0) break;
      if (g > 0.0) lo = std::max(lo, s);
      else hi = std::min(hi, s);
      const double dg = rx * c.c2[0] + ry * c.c2[1] - (c.c1[0] * c.c1[0] + c.c1[1] * c.c1[1]);
      if (dg < 0.0 && std::abs(g / dg) < 1e-13 * (1.0 + length_)) {
        s -= g / dg;
        break;
      }
      double next = dg < 0.0 ? s - g / dg : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      const double step = std::abs(next - s);
      s = next;
      if (step < 1e-13 * (1.0 + length_)) break;
    }
    const auto c = eval(s);
    const double n = std::hypot(c.c1[0], c.c1[1]);
    Projection out;
    out.s = wrap(s);
    out.e = ((px - c.c[0]) * -c.c1[1] + (py - c.c[1]) * c.c1[0]) / n;
    return out;
  }

 private:
  [[nodiscard]] double coord(int i, int d) const {
    const auto& p = samples_[static_cast<std::size_t>(i)];
    return d == 0 ? p.x : p.y;
  }

  [[nodiscard]] int segment_of(double u) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), u);
    int i = static_cast<int>(it - knots_.begin()) - 1;
    return std::clamp(i, 0, segments() - 1);
  }

  void fit_spline() {
    const int n = static_cast<int>(samples_.size());
    for (int d = 0; d < 2; ++d) {
      m_[d].assign(static_cast<std::size_t>(n), 0.0);
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i) {
        const bool interior = closed_ || (i > 0 && i < n - 1);
        if (!interior) {
          a(i, i) = 1.0;  // natural end condition
          continue;
        }
        const int ip = (i + 1) % n, im = (i - 1 + n) % n;
        const double hp = knots_[static_cast<std::size_t>(i) + 1] - knots_[static_cast<std::size_t>(i)];
        const double hm = i == 0 ? length_ - knots_[static_cast<std::size_t>(n - 1)]
                                 : knots_[static_cast<std::size_t>(i)] - knots_[static_cast<std::size_t>(i - 1)];
        a(i, im) += hm;
        a(i, i) += 2.0 * (hm + hp);
        a(i, ip) += hp;
        rhs(i) = 6.0 * ((coord(ip, d) - coord(i, d)) / hp - (coord(i, d) - coord(im, d)) / hm);
      }
      const Eigen::VectorXd m = a.partialPivLu().solve(rhs);
      for (int i = 0; i < n; ++i) m_[d][static_cast<std::size_t>(i)] = m(i);
    }
  }

  std::vector<TrackSample> samples_;
  bool closed_ = false;
  std::vector<double> knots_;  // segment boundaries, knots_[0] = 0
  double length_ = 0.0;
  std::array<std::vector<double>, 2> m_;  // spline second derivatives per sample
};

// Track-relative coordinates of a point together with their first and second
// derivatives with respect to the point's (x, y). Hessians are packed as
// (xx, xy, yy). For T = ad::Var every field depends smoothly on the point.
template <class T>
struct TrackFrame {
  T s, e, hw, hw_slope;
  std::array<T, 2> ds, de;
  std::array<T, 3> dds, dde;
};

template <class T>
TrackFrame<T> track_frame(const Track& track, const T& px, const T& py) {
  const Projection pr = track.project(value(px), value(py));
  const CenterlinePoint cp = track.eval(pr.s);
  // Re-expand the centerline about the projected s so derivatives of the
  // foot point flow through to T.
  const std::array<double, 2> p0{value(px), value(py)};
  const double d0 = cp.c1[0] * cp.c1[0] + cp.c1[1] * cp.c1[1] -
                    ((p0[0] - cp.c[0]) * cp.c2[0] + (p0[1] - cp.c[1]) * cp.c2[1]);
  const T dx = px - T(p0[0]);
  const T dy = py - T(p0[1]);
  const T delta = (T(cp.c1[0]) * dx + T(cp.c1[1]) * dy) / T(d0);

  std::array<T, 2> c, c1, c2, c3;
  for (int d = 0; d < 2; ++d) {
    c[d] = T(cp.c[d]) + T(cp.c1[d]) * delta;
    c1[d] = T(cp.c1[d]) + T(cp.c2[d]) * delta;
    c2[d] = T(cp.c2[d]) + T(cp.c3[d]) * delta;
    c3[d] = T(cp.c3[d]);
  }
  using std::sqrt;
  const T rx = px - c[0], ry = py - c[1];
  const T n2 = c1[0] * c1[0] + c1[1] * c1[1];
  const T nn = sqrt(n2);
  const T dd = n2 - (rx * c2[0] + ry * c2[1]);
  const T c12 = c1[0] * c2[0] + c1[1] * c2[1];
  const T rc3 = rx * c3[0] + ry * c3[1];

  TrackFrame<T> f;
  f.s = T(pr.s) + delta;
  // Unit left normal and its derivative along s.
  const std::array<T, 2> nrm{-c1[1] / nn, c1[0] / nn};
  const std::array<T, 2> dn{-c2[1] / nn + c1[1] * c12 / (n2 * nn), c2[0] / nn - c1[0] * c12 / (n2 * nn)};
  f.e = nrm[0] * rx + nrm[1] * ry;
  f.ds = {c1[0] / dd, c1[1] / dd};
  f.de = nrm;
  f.dde = {dn[0] * f.ds[0], dn[0] * f.ds[1], dn[1] * f.ds[1]};
  const T d2 = dd * dd;
  const T k3 = (T(3.0) * c12 - rc3) / (d2 * dd);
  f.dds = {T(2.0) * c2[0] * c1[0] / d2 - k3 * c1[0] * c1[0],
           (c2[0] * c1[1] + c1[0] * c2[1]) / d2 - k3 * c1[0] * c1[1],
           T(2.0) * c2[1] * c1[1] / d2 - k3 * c1[1] * c1[1]};
  const auto [w, w1] = track.halfwidth(pr.s);
  f.hw = T(w) + T(w1) * delta;
  f.hw_slope = T(w1);
  return f;
}

// ---------------------------------------------------------------------------
// Procedural tracks built from (length, curvature) pieces.

struct TrackPiece {
  double length = 0.0;
  double curvature = 0.0;  // 1/m, positive turns left
};

inline std::vector<TrackSample> trace_pieces(const std::vector<TrackPiece>& pieces, double halfwidth, double spacing,
                                             bool closed) {
  std::vector<TrackSample> out;
  double x = 0.0, y = 0.0, th = 0.0, s = 0.0;
  out.push_back({0.0, x, y, halfwidth});
  for (const auto& pc : pieces) {
    const int n = std::max(1, static_cast<int>(std::lround(pc.length / spacing)));
    const double h = pc.length / n;
    for (int k = 0; k < n; ++k) {
      if (pc.curvature == 0.0) {
        x += h * std::cos(th);
        y += h * std::sin(th);
      } else {
        const double th1 = th + pc.curvature * h;
        x += (std::sin(th1) - std::sin(th)) / pc.curvature;
        y -= (std::cos(th1) - std::cos(th)) / pc.curvature;
        th = th1;
      }
      s += std::hypot(x - out.back().x, y - out.back().y);
      out.push_back({s, x, y, halfwidth});
    }
  }
  if (closed) out.pop_back();  // the last point coincides with the first
  return out;
}

inline Track make_straight_track(double length, double halfwidth, double spacing = 2.0) {
  return Track(trace_pieces({{length, 0.0}}, halfwidth, spacing, false), false);
}

// Clockwise oval starting on the main straight at the origin heading +x.
inline Track make_oval_track(double straight = 80.0, double radius = 30.0, double halfwidth = 6.0,
                             double spacing = 2.0) {
  const double k = -1.0 / radius;
  const double arc = std::numbers::pi * radius;
  return Track(trace_pieces({{straight, 0.0}, {arc, k}, {straight, 0.0}, {arc, k}}, halfwidth, spacing, true), true);
}

// Clockwise oval whose back straight contains an S-bend (left, right, left)
// of the given radius and turning angle. The bend shortens the straight by
// 4 r sin(phi) and leaves the heading and lateral position unchanged.
inline Track make_chicane_track(double straight = 120.0, double radius = 30.0, double chicane_radius = 25.0,
                                double chicane_angle = 0.35, double halfwidth = 6.0, double spacing = 2.0) {
  const double k = -1.0 / radius;
  const double arc = std::numbers::pi * radius;
  const double span = 4.0 * chicane_radius * std::sin(chicane_angle);
  if (span >= straight) throw std::invalid_argument("chicane does not fit on the back straight");
  const double lead = 0.5 * (straight - span);
  const double a = chicane_angle * chicane_radius;
  const double kc = 1.0 / chicane_radius;
  return Track(trace_pieces({{straight, 0.0},
                             {arc, k},
                             {lead, 0.0},
                             {a, kc},
                             {2.0 * a, -kc},
                             {a, kc},
                             {lead, 0.0},
                             {arc, k}},
                            halfwidth, spacing, true),
               true);
}

// CSV with header "s,x,y,halfwidth"; an optional first line "# closed: true"
// or "# closed: false" fixes the loop flag.
inline Track load_track_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open track file " + path);
  std::string line;
  std::vector<TrackSample> samples;
  int closed_flag = -1;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("closed: true") != std::string::npos) closed_flag = 1;
      if (line.find("closed: false") != std::string::npos) closed_flag = 0;
      continue;
    }
    if (!header) {
      header = true;
      if (line.rfind("s,", 0) == 0) continue;
    }
    std::stringstream ss(line);
    TrackSample p;
    char comma = 0;
    if (!(ss >> p.s >> comma >> p.x >> comma >> p.y >> comma >> p.halfwidth))
      throw std::runtime_error("malformed track row: " + line);
    samples.push_back(p);
  }
  if (samples.size() < 2) throw std::runtime_error("track file has fewer than two samples");
  if (closed_flag < 0) {
    const double gap = std::hypot(samples.back().x - samples.front().x, samples.back().y - samples.front().y);
    const double mean = (samples.back().s - samples.front().s) / static_cast<double>(samples.size() - 1);
    closed_flag = gap < 2.0 * mean ? 1 : 0;
  }
  return Track(samples, closed_flag == 1);
}

inline void save_track_csv(const Track& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write track file " + path);
  out << "# closed: " << (t.closed() ? "true" : "false") << "\ns,x,y,halfwidth\n";
  out.precision(17);
  for (const auto& p : t.samples()) out << p.s << ',' << p.x << ',' << p.y << ',' << p.halfwidth << '\n';
}

}  // namespace nnod
