// Opinionated dynamic games: dynamics plus per-player stage costs
//
//   c_i(x, u) = residual_i(x, u) + sum_l z_il * basis_il(x)
//
// A game type provides, for scalar type T (double or ad::Var):
//   int state_dim(), num_players(), control_dim(), horizon(), opinion_dim()
//   std::pair<int, int> control_range(i)        offset and size of u_i
//   Vec<T> step(k, x, u)
//   void linearize(k, x, u, Mat<T>& A, Mat<T>& B)
//   void quadraticize(k, x, u, z, std::vector<StageQuadratic<T>>&)
//   T stage_cost(i, k, x, u, z)
// Stage k == horizon() is terminal: u is ignored and the control blocks of
// the expansion are zero.
#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nnod/dense.hpp"
#include "nnod/jet.hpp"
#include "nnod/math.hpp"
#include "nnod/track.hpp"

namespace nnod {

// Second-order expansion of one player's stage cost about a nominal point:
// 0.5 dx'Q dx + l'dx + 0.5 du'R du + r'du.
template <class T>
struct StageQuadratic {
  Mat<T> Q;
  Vec<T> l;
  Mat<T> R;
  Vec<T> r;
};

// ---------------------------------------------------------------------------
// Kinematic bicycle: state (x, y, heading, speed), control (accel, steer).

inline constexpr int kCarStates = 4;
inline constexpr int kCarControls = 2;

template <class T>
std::array<T, 4> bicycle_step(const std::array<T, 4>& s, const std::array<T, 2>& u, double dt, double wheelbase) {
  using std::cos;
  using std::sin;
  using std::tan;
  const T h(dt);
  std::array<T, 4> n;
  n[0] = s[0] + s[3] * cos(s[2]) * h;
  n[1] = s[1] + s[3] * sin(s[2]) * h;
  n[2] = s[2] + s[3] / T(wheelbase) * tan(u[1]) * h;
  n[3] = s[3] + u[0] * h;
  if (value(n[3]) < 0.0) n[3] = T(0.0);
  return n;
}

// Jacobians of bicycle_step with respect to state (4x4) and control (4x2).
template <class T>
void bicycle_jacobians(const std::array<T, 4>& s, const std::array<T, 2>& u, double dt, double wheelbase, Mat<T>& a,
                       Mat<T>& b, int r0 = 0, int c0 = 0, int u0 = 0) {
  using std::cos;
  using std::sin;
  using std::tan;
  const T h(dt);
  const T c = cos(s[2]), sn = sin(s[2]), t = tan(u[1]);
  for (int i = 0; i < 4; ++i) a(r0 + i, c0 + i) = T(1.0);
  a(r0 + 0, c0 + 2) = -s[3] * sn * h;
  a(r0 + 0, c0 + 3) = c * h;
  a(r0 + 1, c0 + 2) = s[3] * c * h;
  a(r0 + 1, c0 + 3) = sn * h;
  a(r0 + 2, c0 + 3) = t / T(wheelbase) * h;
  b(r0 + 2, u0 + 1) = s[3] / T(wheelbase) * (T(1.0) + t * t) * h;
  b(r0 + 3, u0 + 0) = h;
  if (value(s[3]) + value(u[0]) * dt < 0.0) {
    a(r0 + 3, c0 + 3) = T(0.0);
    b(r0 + 3, u0 + 0) = T(0.0);
  }
}

// Second derivatives of bicycle_step contracted with next-state weights w
// (4 entries), written into the blocks at (r0, r0), (r0, u0) and (u0, u0).
template <class T>
void bicycle_curvature(const std::array<T, 4>& s, const std::array<T, 2>& u, const T* w, double dt, double wheelbase,
                       Mat<T>& hxx, Mat<T>& hxu, Mat<T>& huu, int r0, int u0) {
  using std::cos;
  using std::sin;
  using std::tan;
  const T h(dt);
  const T c = cos(s[2]), sn = sin(s[2]), t = tan(u[1]);
  const T sec2 = T(1.0) + t * t;
  hxx(r0 + 2, r0 + 2) = hxx(r0 + 2, r0 + 2) - (w[0] * c + w[1] * sn) * s[3] * h;
  const T tv = (w[1] * c - w[0] * sn) * h;
  hxx(r0 + 2, r0 + 3) = hxx(r0 + 2, r0 + 3) + tv;
  hxx(r0 + 3, r0 + 2) = hxx(r0 + 3, r0 + 2) + tv;
  hxu(r0 + 3, u0 + 1) = hxu(r0 + 3, u0 + 1) + w[2] * sec2 * h / T(wheelbase);
  huu(u0 + 1, u0 + 1) = huu(u0 + 1, u0 + 1) + w[2] * s[3] * T(2.0) * sec2 * t * h / T(wheelbase);
}

// ---------------------------------------------------------------------------
// Two-car racing game. Player 0 is the ego car, player 1 the rival; the joint
// state stacks (x, y, heading, speed) of each car and the joint control
// stacks (accel, steer).

struct RacingConfig {
  double dt = 0.1;
  int horizon = 10;
  double wheelbase = 2.7;
  double vehicle_length = 4.0;
  double vehicle_width = 1.8;
  double accel_min = -6.0;
  double accel_max = 3.0;
  double steer_max = 0.45;
  std::array<double, 2> speed_max{17.0, 15.0};

  double progress_weight = 1.0;
  double speed_weight = 20.0;
  double track_weight = 40.0;
  double track_margin = 1.2;
  double centering_weight = 0.005;
  double collision_weight = 40.0;
  double collision_radius = 5.0;
  double accel_weight = 0.1;
  double steer_weight = 4.0;
  double bound_weight = 40.0;
  double barrier_sharpness = 4.0;
  double terminal_scale = 1.0;

  double overtake_margin = 2.0;
  double overtake_scale = 0.5;
  double follow_gap = 8.0;
  double follow_scale = 0.05;
  double lane_scale = 0.1;
  double block_scale = 0.1;

  // Half of the vehicle diagonal: the disc radius of the collision test.
  [[nodiscard]] double disc_radius() const { return 0.5 * std::hypot(vehicle_length, vehicle_width); }
};

inline nlohmann::json racing_config_to_json(const RacingConfig& c) {
  return nlohmann::json{{"dt", c.dt},
                        {"horizon", c.horizon},
                        {"wheelbase", c.wheelbase},
                        {"vehicle_length", c.vehicle_length},
                        {"vehicle_width", c.vehicle_width},
                        {"accel_min", c.accel_min},
                        {"accel_max", c.accel_max},
                        {"steer_max", c.steer_max},
                        {"speed_max", c.speed_max},
                        {"progress_weight", c.progress_weight},
                        {"speed_weight", c.speed_weight},
                        {"track_weight", c.track_weight},
                        {"track_margin", c.track_margin},
                        {"centering_weight", c.centering_weight},
                        {"collision_weight", c.collision_weight},
                        {"collision_radius", c.collision_radius},
                        {"accel_weight", c.accel_weight},
                        {"steer_weight", c.steer_weight},
                        {"bound_weight", c.bound_weight},
                        {"barrier_sharpness", c.barrier_sharpness},
                        {"terminal_scale", c.terminal_scale},
                        {"overtake_margin", c.overtake_margin},
                        {"overtake_scale", c.overtake_scale},
                        {"follow_gap", c.follow_gap},
                        {"follow_scale", c.follow_scale},
                        {"lane_scale", c.lane_scale},
                        {"block_scale", c.block_scale}};
}

inline RacingConfig racing_config_from_json(const nlohmann::json& j) {
  RacingConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("dt", c.dt);
  get("horizon", c.horizon);
  get("wheelbase", c.wheelbase);
  get("vehicle_length", c.vehicle_length);
  get("vehicle_width", c.vehicle_width);
  get("accel_min", c.accel_min);
  get("accel_max", c.accel_max);
  get("steer_max", c.steer_max);
  get("speed_max", c.speed_max);
  get("progress_weight", c.progress_weight);
  get("speed_weight", c.speed_weight);
  get("track_weight", c.track_weight);
  get("track_margin", c.track_margin);
  get("centering_weight", c.centering_weight);
  get("collision_weight", c.collision_weight);
  get("collision_radius", c.collision_radius);
  get("accel_weight", c.accel_weight);
  get("steer_weight", c.steer_weight);
  get("bound_weight", c.bound_weight);
  get("barrier_sharpness", c.barrier_sharpness);
  get("terminal_scale", c.terminal_scale);
  get("overtake_margin", c.overtake_margin);
  get("overtake_scale", c.overtake_scale);
  get("follow_gap", c.follow_gap);
  get("follow_scale", c.follow_scale);
  get("lane_scale", c.lane_scale);
  get("block_scale", c.block_scale);
  if (!(c.dt > 0.0)) throw std::invalid_argument("racing config: dt must be positive");
  if (c.horizon < 1) throw std::invalid_argument("racing config: horizon must be at least 1");
  if (!(c.wheelbase > 0.0)) throw std::invalid_argument("racing config: wheelbase must be positive");
  if (!(c.accel_min < c.accel_max) || !(c.steer_max > 0.0)) throw std::invalid_argument("racing config: bad bounds");
  return c;
}

// Option labels of the racing topology, agent-major.
inline const std::vector<std::string>& racing_option_labels() {
  static const std::vector<std::string> labels{"ego.overtake", "ego.follow", "ego.inside", "ego.outside",
                                               "rival.block",  "rival.inside", "rival.outside"};
  return labels;
}
inline constexpr int kEgoOptions = 4;
inline constexpr int kRivalOptions = 3;
inline constexpr int kRacingOpinionDim = kEgoOptions + kRivalOptions;

// Per-player cost terms evaluated as jets: positions of both cars (ego x, y,
// rival x, y), the player's own speed, and its two controls.
template <class T>
struct RacingCostTerms {
  Jet<T, 4> position;
  Jet<T, 1> speed;
  Jet<T, 1> accel;
  Jet<T, 1> steer;
  std::vector<T> basis;  // unweighted basis values, for reporting
};

class RacingGame {
 public:
  RacingGame(std::shared_ptr<const Track> track, RacingConfig config)
      : track_(std::move(track)), config_(std::move(config)) {
    if (!track_) throw std::invalid_argument("RacingGame: missing track");
  }

  [[nodiscard]] int state_dim() const { return 2 * kCarStates; }
  [[nodiscard]] int num_players() const { return 2; }
  [[nodiscard]] int control_dim() const { return 2 * kCarControls; }
  [[nodiscard]] int horizon() const { return config_.horizon; }
  [[nodiscard]] int opinion_dim() const { return kRacingOpinionDim; }
  [[nodiscard]] std::pair<int, int> control_range(int i) const { return {i * kCarControls, kCarControls}; }
  [[nodiscard]] const RacingConfig& config() const { return config_; }
  [[nodiscard]] const Track& track() const { return *track_; }
  [[nodiscard]] std::shared_ptr<const Track> track_ptr() const { return track_; }

  // Progress is measured from these arc lengths (one per car).
  void set_anchor(double s_ego, double s_rival) { anchor_ = {s_ego, s_rival}; }
  template <class T>
  void anchor_at(const Vec<T>& x) {
    anchor_ = {track_->project(value(x[0]), value(x[1])).s, track_->project(value(x[4]), value(x[5])).s};
  }

  // Controls are clamped to the box bounds before they reach the dynamics;
  // mask[j] is false where control j was clamped (zero derivative there).
  template <class T>
  std::array<T, 2> clamped_controls(const Vec<T>& u, int car, std::array<bool, 2>* mask = nullptr) const {
    const auto sa = static_cast<std::size_t>(2 * car);
    std::array<T, 2> r{u[sa], u[sa + 1]};
    const double lo[2] = {config_.accel_min, -config_.steer_max};
    const double hi[2] = {config_.accel_max, config_.steer_max};
    for (int j = 0; j < 2; ++j) {
      bool free = true;
      if (value(r[static_cast<std::size_t>(j)]) > hi[j]) {
        r[static_cast<std::size_t>(j)] = T(hi[j]);
        free = false;
      } else if (value(r[static_cast<std::size_t>(j)]) < lo[j]) {
        r[static_cast<std::size_t>(j)] = T(lo[j]);
        free = false;
      }
      if (mask != nullptr) (*mask)[static_cast<std::size_t>(j)] = free;
    }
    return r;
  }

  template <class T>
  void project_controls(Vec<T>& u) const {
    for (int c = 0; c < 2; ++c) {
      const auto r = clamped_controls(u, c);
      u[static_cast<std::size_t>(2 * c)] = r[0];
      u[static_cast<std::size_t>(2 * c + 1)] = r[1];
    }
  }

  template <class T>
  Vec<T> step(int, const Vec<T>& x, const Vec<T>& u) const {
    Vec<T> n(8);
    for (int c = 0; c < 2; ++c) {
      const std::array<T, 4> s{x[4 * c], x[4 * c + 1], x[4 * c + 2], x[4 * c + 3]};
      const std::array<T, 2> a = clamped_controls(u, c);
      const auto r = bicycle_step(s, a, config_.dt, config_.wheelbase);
      for (int i = 0; i < 4; ++i) n[static_cast<std::size_t>(4 * c + i)] = r[static_cast<std::size_t>(i)];
    }
    return n;
  }

  template <class T>
  void linearize(int, const Vec<T>& x, const Vec<T>& u, Mat<T>& a, Mat<T>& b) const {
    a = Mat<T>(8, 8);
    b = Mat<T>(8, 4);
    for (int c = 0; c < 2; ++c) {
      const std::array<T, 4> s{x[4 * c], x[4 * c + 1], x[4 * c + 2], x[4 * c + 3]};
      std::array<bool, 2> mask{};
      const std::array<T, 2> in = clamped_controls(u, c, &mask);
      bicycle_jacobians(s, in, config_.dt, config_.wheelbase, a, b, 4 * c, 4 * c, 2 * c);
      for (int j = 0; j < 2; ++j)
        if (!mask[static_cast<std::size_t>(j)])
          for (int r = 0; r < 8; ++r) b(r, 2 * c + j) = T(0.0);
    }
  }

  template <class T>
  void dynamics_curvature(int, const Vec<T>& x, const Vec<T>& u, const Vec<T>& w, Mat<T>& hxx, Mat<T>& hxu,
                          Mat<T>& huu) const {
    for (int c = 0; c < 2; ++c) {
      const std::array<T, 4> s{x[4 * c], x[4 * c + 1], x[4 * c + 2], x[4 * c + 3]};
      std::array<bool, 2> mask{};
      const std::array<T, 2> in = clamped_controls(u, c, &mask);
      bicycle_curvature(s, in, w.data() + 4 * c, config_.dt, config_.wheelbase, hxx, hxu, huu, 4 * c, 2 * c);
      for (int j = 0; j < 2; ++j) {
        if (mask[static_cast<std::size_t>(j)]) continue;
        const int col = 2 * c + j;
        for (int r = 0; r < 8; ++r) hxu(r, col) = T(0.0);
        for (int r = 0; r < 4; ++r) huu(r, col) = huu(col, r) = T(0.0);
      }
    }
  }

  // With `convex` set, the Hessians are replaced by a positive semidefinite
  // model: track-frame coordinates and the car distance enter linearized,
  // and basis terms with a negative opinion weight contribute no curvature.
  // Values and gradients are unchanged.
  template <class T>
  RacingCostTerms<T> cost_terms(int player, int k, const Vec<T>& x, const Vec<T>& u, const Vec<T>& z,
                                bool convex = false) const {
    if (static_cast<int>(z.size()) != kRacingOpinionDim)
      throw std::invalid_argument("RacingGame: opinion vector has length " + std::to_string(z.size()) + ", expected 7");
    using J4 = Jet<T, 4>;
    using J1 = Jet<T, 1>;
    const RacingConfig& c = config_;
    const bool terminal = k >= config_.horizon;
    const double kb = c.barrier_sharpness;

    const auto fe = track_frame(*track_, x[0], x[1]);
    const auto fr = track_frame(*track_, x[4], x[5]);
    auto frame_jets = [convex](const TrackFrame<T>& f, int o, J4& s, J4& e, J4& w) {
      s = J4(f.s);
      e = J4(f.e);
      s.g[o] = f.ds[0];
      s.g[o + 1] = f.ds[1];
      e.g[o] = f.de[0];
      e.g[o + 1] = f.de[1];
      if (!convex) {
        s.set_hess(o, o, f.dds[0]);
      s.set_hess(o, o + 1, f.dds[1]);
      s.set_hess(o + 1, o + 1, f.dds[2]);
      e.set_hess(o, o, f.dde[0]);
      e.set_hess(o, o + 1, f.dde[1]);
        e.set_hess(o + 1, o + 1, f.dde[2]);
      }
      w = s * f.hw_slope + (f.hw - f.hw_slope * f.s);
    };
    J4 se, ee, we, sr, er, wr;
    frame_jets(fe, 0, se, ee, we);
    frame_jets(fr, 2, sr, er, wr);

    const J4& s_own = player == 0 ? se : sr;
    const J4& e_own = player == 0 ? ee : er;
    const J4& w_own = player == 0 ? we : wr;

    RacingCostTerms<T> out;
    // Progress relative to the anchor, wrapped on closed tracks.
    J4 prog = s_own;
    prog.v = track_->gap(s_own.v, T(anchor_[static_cast<std::size_t>(player)]));
    J4 pos = prog * T(-c.progress_weight);
    const J4 limit = w_own - T(c.track_margin);
    pos = pos + (jet_barrier(e_own - limit, kb) + jet_barrier(-e_own - limit, kb)) * T(c.track_weight);
    pos = pos + jet_square(e_own) * T(c.centering_weight);
    if (player == 0) {
      J4 dx(x[0] - x[4]), dy(x[1] - x[5]);
      dx.g[0] = T(1.0);
      dx.g[2] = T(-1.0);
      dy.g[1] = T(1.0);
      dy.g[3] = T(-1.0);
      J4 dist = jet_sqrt(jet_square(dx) + jet_square(dy) + T(1e-6));
      if (convex) dist.h.fill(T(0.0));
      pos = pos + jet_barrier(J4(T(c.collision_radius)) - dist, kb) * T(c.collision_weight);
    }

    // Opinion-weighted basis.
    const std::size_t zoff = player == 0 ? 0 : kEgoOptions;
    std::vector<J4> basis;
    if (player == 0) {
      J4 lead_r = sr - se;  // rival ahead of ego
      lead_r.v = track_->gap(sr.v, se.v);
      basis.push_back(jet_softplus(lead_r + T(c.overtake_margin)) * T(c.overtake_scale));
      basis.push_back((jet_square(-lead_r + T(c.follow_gap)) + jet_square(ee - er)) * T(c.follow_scale));
      basis.push_back(jet_square(ee + we * T(0.5)) * T(c.lane_scale));
      basis.push_back(jet_square(ee - we * T(0.5)) * T(c.lane_scale));
    } else {
      basis.push_back(jet_square(er - ee) * T(c.block_scale));
      basis.push_back(jet_square(er + wr * T(0.5)) * T(c.lane_scale));
      basis.push_back(jet_square(er - wr * T(0.5)) * T(c.lane_scale));
    }
    for (std::size_t l = 0; l < basis.size(); ++l) {
      J4 term = basis[l] * z[zoff + l];
      if (convex && value(z[zoff + l]) < 0.0) term.h.fill(T(0.0));
      pos = pos + term;
      out.basis.push_back(basis[l].v);
    }

    const int sv = 4 * player + 3;
    J1 v(x[static_cast<std::size_t>(sv)]);
    v.g[0] = T(1.0);
    const double vmax = c.speed_max[static_cast<std::size_t>(player)];
    out.speed = (jet_barrier(v - T(vmax), kb) + jet_barrier(-v, kb)) * T(c.speed_weight);

    const double scale = terminal ? c.terminal_scale : 1.0;
    out.position = pos * T(scale);
    out.speed = out.speed * T(scale);
    if (!terminal) {
      J1 a(u[static_cast<std::size_t>(2 * player)]), st(u[static_cast<std::size_t>(2 * player + 1)]);
      a.g[0] = T(1.0);
      st.g[0] = T(1.0);
      out.accel = jet_square(a) * T(c.accel_weight) +
                  (jet_barrier(a - T(c.accel_max), kb) + jet_barrier(-(a - T(c.accel_min)), kb)) * T(c.bound_weight);
      out.steer = jet_square(st) * T(c.steer_weight) +
                  (jet_barrier(st - T(c.steer_max), kb) + jet_barrier(-st - T(c.steer_max), kb)) * T(c.bound_weight);
    }
    return out;
  }

  template <class T>
  T stage_cost(int player, int k, const Vec<T>& x, const Vec<T>& u, const Vec<T>& z) const {
    const auto t = cost_terms(player, k, x, u, z);
    return t.position.v + t.speed.v + t.accel.v + t.steer.v;
  }

  template <class T>
  void quadraticize(int k, const Vec<T>& x, const Vec<T>& u, const Vec<T>& z, std::vector<StageQuadratic<T>>& out) const {
    quadraticize_impl(k, x, u, z, out, false);
  }

  template <class T>
  void quadraticize_convex(int k, const Vec<T>& x, const Vec<T>& u, const Vec<T>& z,
                           std::vector<StageQuadratic<T>>& out) const {
    quadraticize_impl(k, x, u, z, out, true);
  }

 private:
  template <class T>
  void quadraticize_impl(int k, const Vec<T>& x, const Vec<T>& u, const Vec<T>& z, std::vector<StageQuadratic<T>>& out,
                         bool convex) const {
    static constexpr int kPos[4] = {0, 1, 4, 5};
    out.resize(2);
    for (int i = 0; i < 2; ++i) {
      const auto t = cost_terms(i, k, x, u, z, convex);
      StageQuadratic<T>& q = out[static_cast<std::size_t>(i)];
      q.Q = Mat<T>(8, 8);
      q.l = Vec<T>(8, T(0.0));
      q.R = Mat<T>(4, 4);
      q.r = Vec<T>(4, T(0.0));
      for (int a = 0; a < 4; ++a) {
        q.l[static_cast<std::size_t>(kPos[a])] = t.position.g[static_cast<std::size_t>(a)];
        for (int b = 0; b < 4; ++b) q.Q(kPos[a], kPos[b]) = t.position.hess(a, b);
      }
      const int sv = 4 * i + 3;
      q.l[static_cast<std::size_t>(sv)] = t.speed.g[0];
      q.Q(sv, sv) = t.speed.h[0];
      if (k < config_.horizon) {
        q.r[static_cast<std::size_t>(2 * i)] = t.accel.g[0];
        q.r[static_cast<std::size_t>(2 * i + 1)] = t.steer.g[0];
        q.R(2 * i, 2 * i) = t.accel.h[0];
        q.R(2 * i + 1, 2 * i + 1) = t.steer.h[0];
      }
    }
  }

  std::shared_ptr<const Track> track_;
  RacingConfig config_;
  std::array<double, 2> anchor_{0.0, 0.0};
};

// ---------------------------------------------------------------------------
// Time-invariant linear-quadratic game with per-player costs
// 0.5 x'Q_i x + l_i'x + 0.5 u'R_i u + r_i'u (R_i over the joint control).

struct LinearQuadraticGame {
  Mat<double> A, B;
  std::vector<int> control_sizes;
  std::vector<Mat<double>> Q, R, Qf;
  std::vector<Vec<double>> l, r, lf;
  int steps = 1;

  [[nodiscard]] int state_dim() const { return A.rows(); }
  [[nodiscard]] int num_players() const { return static_cast<int>(control_sizes.size()); }
  [[nodiscard]] int control_dim() const { return B.cols(); }
  [[nodiscard]] int horizon() const { return steps; }
  [[nodiscard]] int opinion_dim() const { return 0; }
  [[nodiscard]] std::pair<int, int> control_range(int i) const {
    int off = 0;
    for (int j = 0; j < i; ++j) off += control_sizes[static_cast<std::size_t>(j)];
    return {off, control_sizes[static_cast<std::size_t>(i)]};
  }

  template <class T>
  Vec<T> step(int, const Vec<T>& x, const Vec<T>& u) const {
    return lift_mat<T>(A) * x + lift_mat<T>(B) * u;
  }

  template <class T>
  void linearize(int, const Vec<T>&, const Vec<T>&, Mat<T>& a, Mat<T>& b) const {
    a = lift_mat<T>(A);
    b = lift_mat<T>(B);
  }

  template <class T>
  T stage_cost(int i, int k, const Vec<T>& x, const Vec<T>& u, const Vec<T>&) const {
    const auto si = static_cast<std::size_t>(i);
    if (k >= steps) return T(0.5) * dot(x, lift_mat<T>(Qf[si]) * x) + dot(lift_vec<T>(lf[si]), x);
    return T(0.5) * dot(x, lift_mat<T>(Q[si]) * x) + dot(lift_vec<T>(l[si]), x) +
           T(0.5) * dot(u, lift_mat<T>(R[si]) * u) + dot(lift_vec<T>(r[si]), u);
  }

  template <class T>
  void quadraticize(int k, const Vec<T>& x, const Vec<T>& u, const Vec<T>&, std::vector<StageQuadratic<T>>& out) const {
    out.resize(static_cast<std::size_t>(num_players()));
    for (int i = 0; i < num_players(); ++i) {
      const auto si = static_cast<std::size_t>(i);
      auto& q = out[si];
      if (k >= steps) {
        q.Q = lift_mat<T>(Qf[si]);
        q.l = q.Q * x + lift_vec<T>(lf[si]);
        q.R = Mat<T>(control_dim(), control_dim());
        q.r = Vec<T>(static_cast<std::size_t>(control_dim()), T(0.0));
      } else {
        q.Q = lift_mat<T>(Q[si]);
        q.l = q.Q * x + lift_vec<T>(l[si]);
        q.R = lift_mat<T>(R[si]);
        q.r = q.R * u + lift_vec<T>(r[si]);
      }
    }
  }

 private:
  template <class T>
  static Mat<T> lift_mat(const Mat<double>& m) {
    Mat<T> r(m.rows(), m.cols());
    for (std::size_t k = 0; k < m.data().size(); ++k) r.data()[k] = T(m.data()[k]);
    return r;
  }
  template <class T>
  static Vec<T> lift_vec(const Vec<double>& v) {
    return Vec<T>(v.begin(), v.end());
  }
};

// Eq.-style opinionated cost on explicit numbers, for callers that already
// hold residual and basis values.
inline double opinionated_stage_cost(double residual, const std::vector<double>& basis, const std::vector<double>& z) {
  if (basis.size() != z.size()) throw std::invalid_argument("opinionated_stage_cost: opinion/basis length mismatch");
  double c = residual;
  for (std::size_t l = 0; l < z.size(); ++l) c += z[l] * basis[l];
  return c;
}

}  // namespace nnod
