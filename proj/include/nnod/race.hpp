// Closed-loop two-car races, randomized trial batches, the endurance mode and
// the safety / overtaking / lead metrics computed from race logs.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnod/dyn_game.hpp"
#include "nnod/inverse_game.hpp"
#include "nnod/neural_nod.hpp"
#include "nnod/parallel.hpp"
#include "nnod/rng.hpp"
#include "nnod/track.hpp"

namespace nnod {

// ------------------------------------------------------------------ policies

// A driver for one car. act() sees the joint state (ego first) and returns
// that car's (accel, steer).
class Policy {
 public:
  virtual ~Policy() = default;
  // Called once with the initial joint state before the first act().
  virtual void reset(const Vec<double>& x) { (void)x; }
  // Called when the other car is replaced (endurance mode).
  virtual void on_respawn(const Vec<double>& x) { (void)x; }
  virtual std::array<double, 2> act(const Vec<double>& x) = 0;
  // Current opinion state, empty for policies without one.
  [[nodiscard]] virtual std::vector<double> opinion() const { return {}; }
  // Size of the last solver update, 0 for policies without a solver.
  [[nodiscard]] virtual double solver_delta() const { return 0.0; }
};

// Holds constant controls; with zero controls and zero speed the car is a
// parked obstacle.
class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(double accel = 0.0, double steer = 0.0) : u_{accel, steer} {}
  std::array<double, 2> act(const Vec<double>&) override { return u_; }

 private:
  std::array<double, 2> u_;
};

// Receding-horizon game player. The weight model supplies the opinion vector
// used as cost weights for both players; the car applies its own part of the
// first equilibrium control.
class GamePolicy : public Policy {
 public:
  GamePolicy(int player, WeightModel model, const RacingGame& game, const RolloutConfig& rc)
      : player_(player), model_(std::move(model)), solver_(game, rc) {
    if (player != 0 && player != 1) throw std::invalid_argument("GamePolicy: player must be 0 or 1");
  }

  void reset(const Vec<double>& x) override {
    tracker_ = std::make_unique<WeightTracker<double>>(model_, solver_.game().track(), solver_.game().config().dt);
    z_ = tracker_->reset(x);
    solver_.restart();
    last_x_.reset();
  }

  void on_respawn(const Vec<double>& x) override {
    if (!tracker_) return reset(x);
    z_ = tracker_->reset(x);
    solver_.restart();
    last_x_.reset();
  }

  std::array<double, 2> act(const Vec<double>& x) override {
    if (!tracker_) reset(x);
    if (last_x_) z_ = tracker_->advance(*last_x_, x);
    last_x_ = x;
    const auto& sol = solver_.solve(x, z_);
    delta_ = sol.final_delta;
    const Vec<double>& u = sol.controls.front();
    return {u[static_cast<std::size_t>(2 * player_)], u[static_cast<std::size_t>(2 * player_ + 1)]};
  }

  [[nodiscard]] std::vector<double> opinion() const override { return z_; }
  [[nodiscard]] double solver_delta() const override { return delta_; }

 private:
  int player_;
  WeightModel model_;
  RecedingHorizonSolver<double> solver_;
  std::unique_ptr<WeightTracker<double>> tracker_;
  std::optional<Vec<double>> last_x_;
  std::vector<double> z_;
  double delta_ = 0.0;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

// Rival game weights. The rival's own (block, inside, outside) weights are
// the last three opinion entries; `ego_belief` fills the first four, i.e.
// what the rival assumes the ego optimizes.
struct RivalSpec {
  std::array<double, 2> block_range{0.0, 2.0};
  double inside = 0.0;
  double outside = 0.0;
  std::array<double, 4> ego_belief{0.0, 0.0, 0.0, 0.0};
};

inline nlohmann::json rival_spec_to_json(const RivalSpec& r) {
  return {{"block_range", r.block_range}, {"inside", r.inside}, {"outside", r.outside}, {"ego_belief", r.ego_belief}};
}

inline RivalSpec rival_spec_from_json(const nlohmann::json& j, RivalSpec r = {}) {
  if (j.contains("block_range")) r.block_range = j.at("block_range").get<std::array<double, 2>>();
  if (j.contains("inside")) r.inside = j.at("inside").get<double>();
  if (j.contains("outside")) r.outside = j.at("outside").get<double>();
  if (j.contains("ego_belief")) r.ego_belief = j.at("ego_belief").get<std::array<double, 4>>();
  if (!(r.block_range[0] <= r.block_range[1])) throw std::invalid_argument("rival: block_range must be ordered");
  return r;
}

inline std::vector<double> rival_weights(const RivalSpec& r, double block) {
  return {r.ego_belief[0], r.ego_belief[1], r.ego_belief[2], r.ego_belief[3], block, r.inside, r.outside};
}

// ---------------------------------------------------------------- race logs

enum class Termination { kTimeLimit, kCollision, kOffTrack, kAborted, kFinished };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::kTimeLimit:
      return "time-limit";
    case Termination::kCollision:
      return "collision";
    case Termination::kOffTrack:
      return "off-track";
    case Termination::kAborted:
      return "aborted";
    case Termination::kFinished:
      return "finished";
  }
  return "unknown";
}

struct StepDiagnostics {
  double ego_delta = 0.0;
  double rival_delta = 0.0;
  bool rival_off_track = false;
};

struct RaceLog {
  std::vector<Vec<double>> states;           // steps + 1
  std::vector<Vec<double>> controls;         // steps, joint (ego accel, steer, rival accel, steer)
  std::vector<std::vector<double>> opinions;  // ego opinion before each step (may be empty vectors)
  std::vector<StepDiagnostics> diagnostics;  // steps
  Termination reason = Termination::kTimeLimit;
  std::string message;
  // Unwrapped arc length travelled, measured from the ego's start; the
  // rival's entry starts at its initial signed gap.
  std::array<double, 2> final_progress{0.0, 0.0};
  int rival_off_track_steps = 0;

  [[nodiscard]] int steps() const { return static_cast<int>(controls.size()); }
  [[nodiscard]] double final_lead() const { return final_progress[0] - final_progress[1]; }
  // Only the ego's violations count against safety.
  [[nodiscard]] bool safe() const { return reason == Termination::kTimeLimit || reason == Termination::kFinished; }
};

namespace detail {

inline double car_distance(const Vec<double>& x) { return std::hypot(x[0] - x[4], x[1] - x[5]); }

inline bool cars_collide(const RacingConfig& c, const Vec<double>& x) { return car_distance(x) < 2.0 * c.disc_radius(); }

inline bool off_track(const Track& track, double px, double py) {
  const auto p = track.project(px, py);
  return std::abs(p.e) > track.halfwidth(p.s).first;
}

// Accumulates signed arc-length increments so progress survives the seam of
// a closed track.
class ProgressMeter {
 public:
  ProgressMeter(const Track& track, const Vec<double>& x) : track_(track) {
    s_[0] = track.project(x[0], x[1]).s;
    s_[1] = track.project(x[4], x[5]).s;
    total_ = {0.0, track.gap(s_[1], s_[0])};
  }
  void update(const Vec<double>& x) {
    for (int c = 0; c < 2; ++c) {
      const double s = track_.project(x[static_cast<std::size_t>(4 * c)], x[static_cast<std::size_t>(4 * c + 1)]).s;
      total_[static_cast<std::size_t>(c)] += track_.gap(s, s_[static_cast<std::size_t>(c)]);
      s_[static_cast<std::size_t>(c)] = s;
    }
  }
  // Re-bases the rival after it was replaced.
  void respawn_rival(const Vec<double>& x) {
    s_[1] = track_.project(x[4], x[5]).s;
    total_[1] = total_[0] + track_.gap(s_[1], s_[0]);
  }
  [[nodiscard]] const std::array<double, 2>& total() const { return total_; }

 private:
  const Track& track_;
  std::array<double, 2> s_{};
  std::array<double, 2> total_{};
};

}  // namespace detail

// Steps the joint dynamics until the cars collide, the ego leaves the track
// or the step limit is reached. A policy error ends the race as aborted.
inline RaceLog run_race(Policy& ego, Policy& rival, const RacingGame& game, const Vec<double>& x0, int step_limit) {
  if (x0.size() != 8) throw std::invalid_argument("run_race: joint state must have 8 entries");
  if (step_limit < 0) throw std::invalid_argument("run_race: negative step limit");
  const Track& track = game.track();
  RaceLog log;
  log.states.push_back(x0);
  detail::ProgressMeter meter(track, x0);
  log.final_progress = meter.total();
  if (step_limit == 0) return log;
  try {
    ego.reset(x0);
    rival.reset(x0);
  } catch (const std::exception& e) {
    log.reason = Termination::kAborted;
    log.message = e.what();
    return log;
  }
  Vec<double> x = x0;
  for (int t = 0; t < step_limit; ++t) {
    std::array<double, 2> ue{}, ur{};
    StepDiagnostics d;
    try {
      ue = ego.act(x);
      d.ego_delta = ego.solver_delta();
      ur = rival.act(x);
      d.rival_delta = rival.solver_delta();
    } catch (const std::exception& e) {
      log.reason = Termination::kAborted;
      log.message = "step " + std::to_string(t) + ": " + e.what();
      break;
    }
    log.opinions.push_back(ego.opinion());
    const Vec<double> u{ue[0], ue[1], ur[0], ur[1]};
    x = game.step(t, x, u);
    meter.update(x);
    d.rival_off_track = detail::off_track(track, x[4], x[5]);
    if (d.rival_off_track) ++log.rival_off_track_steps;
    log.controls.push_back(u);
    log.states.push_back(x);
    log.diagnostics.push_back(d);
    log.final_progress = meter.total();
    if (detail::cars_collide(game.config(), x)) {
      log.reason = Termination::kCollision;
      break;
    }
    if (detail::off_track(track, x[0], x[1])) {
      log.reason = Termination::kOffTrack;
      break;
    }
  }
  return log;
}

// ------------------------------------------------------------------ metrics

struct RaceMetrics {
  int n_trial = 0;
  int n_safe = 0;
  int n_overtake = 0;
  double safe_rate = 0.0;       // percent
  double overtake_rate = 0.0;   // percent
  double lead_mean = 0.0;       // m, signed
  double lead_std = 0.0;        // m, population standard deviation
};

// SR = safe / trials, OR = (safe and ahead at the end) / trials, and the
// end-of-trial lead (ego minus rival progress) averaged over all trials.
inline RaceMetrics compute_metrics(const std::vector<RaceLog>& logs) {
  if (logs.empty()) throw std::invalid_argument("compute_metrics: no race logs");
  RaceMetrics m;
  m.n_trial = static_cast<int>(logs.size());
  double sum = 0.0;
  for (const auto& l : logs) {
    const bool safe = l.safe();
    m.n_safe += safe ? 1 : 0;
    m.n_overtake += safe && l.final_lead() > 0.0 ? 1 : 0;
    sum += l.final_lead();
  }
  m.lead_mean = sum / m.n_trial;
  double var = 0.0;
  for (const auto& l : logs) var += (l.final_lead() - m.lead_mean) * (l.final_lead() - m.lead_mean);
  m.lead_std = std::sqrt(var / m.n_trial);
  m.safe_rate = 100.0 * m.n_safe / m.n_trial;
  m.overtake_rate = 100.0 * m.n_overtake / m.n_trial;
  return m;
}

inline nlohmann::json race_metrics_to_json(const RaceMetrics& m) {
  return {{"n_trial", m.n_trial},         {"n_safe", m.n_safe},     {"n_overtake", m.n_overtake},
          {"safe_rate", m.safe_rate},     {"overtake_rate", m.overtake_rate},
          {"lead_mean", m.lead_mean},     {"lead_std", m.lead_std}};
}

// Fixed-format number for CSV output.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string race_log_csv(const RaceLog& log) {
  std::ostringstream os;
  os << "step,xe,ye,thetae,ve,xr,yr,thetar,vr,accel_e,steer_e,accel_r,steer_r";
  const std::size_t nz = log.opinions.empty() ? 0 : log.opinions.front().size();
  for (std::size_t j = 0; j < nz; ++j) os << ",z" << j;
  os << ",ego_delta,rival_delta,rival_off_track\n";
  for (std::size_t t = 0; t < log.states.size(); ++t) {
    os << t;
    for (double v : log.states[t]) os << ',' << format_number(v);
    const bool has = t < log.controls.size();
    for (std::size_t j = 0; j < 4; ++j) os << ',' << (has ? format_number(log.controls[t][j]) : "");
    for (std::size_t j = 0; j < nz; ++j)
      os << ',' << (t < log.opinions.size() && j < log.opinions[t].size() ? format_number(log.opinions[t][j]) : "");
    if (has)
      os << ',' << format_number(log.diagnostics[t].ego_delta) << ',' << format_number(log.diagnostics[t].rival_delta) << ','
         << (log.diagnostics[t].rival_off_track ? 1 : 0);
    else
      os << ",,,";
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json race_log_summary(const RaceLog& log) {
  return {{"steps", log.steps()},
          {"termination", to_string(log.reason)},
          {"message", log.message},
          {"safe", log.safe()},
          {"final_progress", log.final_progress},
          {"final_lead", log.final_lead()},
          {"rival_off_track_steps", log.rival_off_track_steps}};
}

// -------------------------------------------------------- randomized trials

struct TrialConfig {
  int n = 20;
  std::uint64_t seed = 1;
  int step_limit = 100;
  InitialConditionRanges initial;
  RivalSpec rival;
  int workers = 1;
};

struct TrialRow {
  int index = 0;
  double block_weight = 0.0;
  double gap0 = 0.0;  // initial signed arc-length gap, rival minus ego
  Vec<double> x0;
  RaceLog log;
};

struct TrialsResult {
  RaceMetrics metrics;
  std::vector<TrialRow> rows;
};

// Runs `n` races. Trial i draws its initial state from the stream
// sub_seed(seed, i, "initial") and the rival's block weight from
// sub_seed(seed, i, "rival"), so changing the rival range leaves the initial
// states untouched. Trials run on `workers` threads; results are ordered by
// trial index.
inline TrialsResult randomized_trials(const PolicyFactory& ego, const RacingGame& game, const RolloutConfig& rc,
                                      const TrialConfig& c) {
  if (c.n < 1) throw std::invalid_argument("randomized_trials: need at least one trial");
  if (c.workers < 1) throw std::invalid_argument("randomized_trials: workers must be positive");
  TrialsResult out;
  out.rows.resize(static_cast<std::size_t>(c.n));
  for (int i = 0; i < c.n; ++i) {
    Rng init(sub_seed(c.seed, static_cast<std::uint64_t>(i), "initial"));
    Rng rr(sub_seed(c.seed, static_cast<std::uint64_t>(i), "rival"));
    TrialRow& row = out.rows[static_cast<std::size_t>(i)];
    row.index = i;
    row.x0 = random_initial_state(game.track(), c.initial, init);
    row.block_weight = rr.uniform(c.rival.block_range[0], c.rival.block_range[1]);
    row.gap0 = game.track().gap(game.track().project(row.x0[4], row.x0[5]).s, game.track().project(row.x0[0], row.x0[1]).s);
  }
  auto run_one = [&](TrialRow& row) {
    try {
      auto e = ego();
      GamePolicy r(1, make_static_model(rival_weights(c.rival, row.block_weight)), game, rc);
      row.log = run_race(*e, r, game, row.x0, c.step_limit);
    } catch (const std::exception& err) {
      row.log = RaceLog{};
      row.log.states.push_back(row.x0);
      row.log.reason = Termination::kAborted;
      row.log.message = err.what();
    }
  };
  parallel_for(out.rows.size(), c.workers, [&](std::size_t i) { run_one(out.rows[i]); });
  std::vector<RaceLog> logs;
  for (const auto& r : out.rows) logs.push_back(r.log);
  out.metrics = compute_metrics(logs);
  return out;
}

inline std::string trials_csv(const TrialsResult& r) {
  std::ostringstream os;
  os << "trial,block_weight,gap0,termination,steps,safe,overtake,final_lead,ego_progress,rival_progress,rival_off_track_steps\n";
  for (const auto& row : r.rows) {
    const auto& l = row.log;
    os << row.index << ',' << format_number(row.block_weight) << ',' << format_number(row.gap0) << ',' << to_string(l.reason) << ',' << l.steps() << ',' << (l.safe() ? 1 : 0) << ',' << (l.safe() && l.final_lead() > 0.0 ? 1 : 0)
       << ',' << format_number(l.final_lead()) << ',' << format_number(l.final_progress[0]) << ','
       << format_number(l.final_progress[1]) << ',' << l.rival_off_track_steps << '\n';
  }
  return os.str();
}

// --------------------------------------------------------------- endurance

enum class RivalKind { kGame, kParked };

struct EnduranceConfig {
  int step_limit = 1500;
  double respawn_gap = 25.0;  // <= 0 runs a time trial without rivals
  double pass_margin = 8.0;   // lead at which a rival counts as overtaken
  double ego_speed = 8.0;
  double rival_speed = 6.0;
  RivalKind rival_kind = RivalKind::kGame;
  RivalSpec rival;
  std::uint64_t seed = 1;
};

struct EnduranceResult {
  RaceLog log;
  int overtakes = 0;
  int collisions = 0;
  bool finished = false;
  double lap_time = 0.0;  // s, valid when finished
  std::vector<int> respawn_steps;
};

inline nlohmann::json endurance_summary(const EnduranceResult& r) {
  return {{"overtakes", r.overtakes},
          {"collisions", r.collisions},
          {"finished", r.finished},
          {"lap_time", r.lap_time},
          {"steps", r.log.steps()},
          {"termination", to_string(r.log.reason)},
          {"message", r.log.message},
          {"respawn_steps", r.respawn_steps}};
}

// One lap of a closed track. Whenever the ego leads the current rival by
// pass_margin, or hits it, the rival is replaced by a new one respawn_gap
// metres ahead of the ego and the ego's opinion state is re-initialised.
// Collisions are counted rather than terminal; leaving the track ends the
// run. Without respawns the rival slot holds a non-interacting ghost kept
// 40% of a lap behind the ego.
inline EnduranceResult endurance_race(Policy& ego, const RacingGame& game, const RolloutConfig& rc, const EnduranceConfig& c) {
  const Track& track = game.track();
  if (!track.closed()) throw std::invalid_argument("endurance_race: needs a closed track");
  if (c.step_limit < 0) throw std::invalid_argument("endurance_race: negative step limit");
  const bool rivals = c.respawn_gap > 0.0;
  int spawned = 0;
  std::unique_ptr<Policy> rival;

  auto ghost_state = [&](const Vec<double>& x) {
    const double s = track.project(x[0], x[1]).s;
    const auto p = track.pose(track.wrap(s - 0.4 * track.length()), 0.0);
    return std::array<double, 4>{p[0], p[1], p[2], 0.0};
  };
  auto spawn = [&](Vec<double>& x) {
    const double se = track.project(x[0], x[1]).s;
    Rng rng(sub_seed(c.seed, static_cast<std::uint64_t>(spawned), "rival"));
    const double s = track.wrap(se + c.respawn_gap);
    const double e = rng.uniform(-0.5, 0.5) * track.halfwidth(s).first;
    const double block = rng.uniform(c.rival.block_range[0], c.rival.block_range[1]);
    const auto p = track.pose(s, e);
    const double v = c.rival_kind == RivalKind::kParked ? 0.0 : c.rival_speed;
    x[4] = p[0];
    x[5] = p[1];
    x[6] = p[2];
    x[7] = v;
    if (c.rival_kind == RivalKind::kParked)
      rival = std::make_unique<ConstantPolicy>();
    else
      rival = std::make_unique<GamePolicy>(1, make_static_model(rival_weights(c.rival, block)), game, rc);
    rival->reset(x);
    ++spawned;
  };

  const auto p0 = track.pose(0.0, 0.0);
  Vec<double> x{p0[0], p0[1], p0[2], c.ego_speed, 0.0, 0.0, 0.0, 0.0};
  if (rivals) {
    spawn(x);
  } else {
    const auto g = ghost_state(x);
    for (int j = 0; j < 4; ++j) x[static_cast<std::size_t>(4 + j)] = g[static_cast<std::size_t>(j)];
  }

  EnduranceResult out;
  RaceLog& log = out.log;
  log.states.push_back(x);
  detail::ProgressMeter meter(track, x);
  log.final_progress = meter.total();
  try {
    ego.reset(x);
  } catch (const std::exception& e) {
    log.reason = Termination::kAborted;
    log.message = e.what();
    return out;
  }
  log.reason = Termination::kTimeLimit;
  for (int t = 0; t < c.step_limit; ++t) {
    std::array<double, 2> ue{}, ur{};
    StepDiagnostics d;
    try {
      ue = ego.act(x);
      d.ego_delta = ego.solver_delta();
      if (rival) {
        ur = rival->act(x);
        d.rival_delta = rival->solver_delta();
      }
    } catch (const std::exception& e) {
      log.reason = Termination::kAborted;
      log.message = "step " + std::to_string(t) + ": " + e.what();
      break;
    }
    log.opinions.push_back(ego.opinion());
    const Vec<double> u{ue[0], ue[1], ur[0], ur[1]};
    x = game.step(t, x, u);
    meter.update(x);
    log.controls.push_back(u);
    log.diagnostics.push_back(d);

    bool replace = false;
    if (rivals) {
      if (detail::cars_collide(game.config(), x)) {
        ++out.collisions;
        replace = true;
      } else if (meter.total()[0] - meter.total()[1] >= c.pass_margin) {
        ++out.overtakes;
        replace = true;
      }
    }
    if (replace) {
      spawn(x);
      meter.respawn_rival(x);
      out.respawn_steps.push_back(t + 1);
    } else if (!rivals) {
      const auto g = ghost_state(x);
      for (int j = 0; j < 4; ++j) x[static_cast<std::size_t>(4 + j)] = g[static_cast<std::size_t>(j)];
      meter.respawn_rival(x);
    }
    log.states.push_back(x);
    log.final_progress = meter.total();
    if (replace) {
      try {
        ego.on_respawn(x);
      } catch (const std::exception& e) {
        log.reason = Termination::kAborted;
        log.message = "respawn at step " + std::to_string(t + 1) + ": " + e.what();
        break;
      }
    }
    if (detail::off_track(track, x[0], x[1])) {
      log.reason = Termination::kOffTrack;
      break;
    }
    if (meter.total()[0] >= track.length()) {
      log.reason = Termination::kFinished;
      out.finished = true;
      out.lap_time = (t + 1) * game.config().dt;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------- SVG

struct SvgTrace {
  std::vector<std::array<double, 2>> points;
  std::string color;
};

// Track boundaries plus one polyline per trace, in track coordinates with y
// pointing up.
inline std::string render_svg(const Track& track, const std::vector<SvgTrace>& traces) {
  std::vector<std::array<double, 2>> left, right, centre;
  const double step = 1.0;
  const int n = std::max(2, static_cast<int>(track.length() / step) + 1);
  for (int k = 0; k < n; ++k) {
    const double s = track.closed() ? track.length() * k / n : track.length() * k / (n - 1);
    const double w = track.halfwidth(s).first;
    const auto l = track.pose(s, w), r = track.pose(s, -w), c = track.pose(s, 0.0);
    left.push_back({l[0], l[1]});
    right.push_back({r[0], r[1]});
    centre.push_back({c[0], c[1]});
  }
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  auto grow = [&](const std::vector<std::array<double, 2>>& pts) {
    for (const auto& p : pts) {
      x0 = std::min(x0, p[0]);
      x1 = std::max(x1, p[0]);
      y0 = std::min(y0, p[1]);
      y1 = std::max(y1, p[1]);
    }
  };
  grow(left);
  grow(right);
  for (const auto& t : traces) grow(t.points);
  const double pad = 5.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << format_number(x0 - pad) << ' ' << format_number(-y1 - pad) << ' '
     << format_number(x1 - x0 + 2 * pad) << ' ' << format_number(y1 - y0 + 2 * pad) << "\">\n";
  auto poly = [&](const std::vector<std::array<double, 2>>& pts, const std::string& style, bool closed) {
    os << "<" << (closed ? "polygon" : "polyline") << " fill=\"none\" " << style << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " " : "") << format_number(pts[i][0]) << ',' << format_number(-pts[i][1]);
    os << "\"/>\n";
  };
  const bool closed = track.closed();
  poly(left, "stroke=\"black\" stroke-width=\"0.4\"", closed);
  poly(right, "stroke=\"black\" stroke-width=\"0.4\"", closed);
  poly(centre, "stroke=\"gray\" stroke-width=\"0.2\" stroke-dasharray=\"2,2\"", closed);
  for (const auto& t : traces) poly(t.points, "stroke=\"" + t.color + "\" stroke-width=\"0.5\"", false);
  os << "</svg>\n";
  return os.str();
}

inline std::vector<SvgTrace> race_traces(const RaceLog& log) {
  SvgTrace ego{{}, "blue"}, rival{{}, "red"};
  for (const auto& x : log.states) {
    ego.points.push_back({x[0], x[1]});
    rival.points.push_back({x[4], x[5]});
  }
  return {ego, rival};
}

}  // namespace nnod
