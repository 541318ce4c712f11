// Maximum-likelihood fitting of weight models to demonstration episodes by
// differentiating through closed-loop rollouts of the racing game.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnod/ad.hpp"
#include "nnod/dyn_game.hpp"
#include "nnod/ilq.hpp"
#include "nnod/neural_nod.hpp"
#include "nnod/parallel.hpp"
#include "nnod/rng.hpp"
#include "nnod/track.hpp"

namespace nnod {

// ---------------------------------------------------------------- datasets

struct Episode {
  std::vector<Vec<double>> observations;          // per stage, 8 entries; masked entries are ignored
  std::vector<std::vector<std::uint8_t>> mask;    // 1 = observed
  double dt = 0.1;
  std::string source = "synthetic";
  std::vector<Vec<double>> demonstrator_weights;  // optional, synthetic data only

  [[nodiscard]] int stages() const { return static_cast<int>(observations.size()); }
};

struct EpisodeDataset {
  std::vector<Episode> episodes;
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr int kDatasetSchemaVersion = 1;

inline void validate_episode(const Episode& e, std::size_t index) {
  const std::string where = "episode " + std::to_string(index) + ": ";
  if (e.observations.empty()) throw std::invalid_argument(where + "no stages");
  if (!(e.dt > 0.0)) throw std::invalid_argument(where + "dt must be positive");
  if (e.mask.size() != e.observations.size()) throw std::invalid_argument(where + "mask has a different stage count");
  bool any = false;
  for (std::size_t t = 0; t < e.observations.size(); ++t) {
    if (e.observations[t].size() != 8 || e.mask[t].size() != 8)
      throw std::invalid_argument(where + "stage " + std::to_string(t) + " must have 8 entries and 8 mask flags");
    for (std::size_t j = 0; j < 8; ++j) {
      if (e.mask[t][j] > 1) throw std::invalid_argument(where + "mask flags must be 0 or 1");
      if (e.mask[t][j] != 0) {
        any = true;
        if (!std::isfinite(e.observations[t][j])) throw std::invalid_argument(where + "observed entry is not finite");
      }
    }
  }
  if (!any) throw std::invalid_argument(where + "no observed entries");
  if (!e.demonstrator_weights.empty() && e.demonstrator_weights.size() != e.observations.size())
    throw std::invalid_argument(where + "demonstrator_weights has a different stage count");
}

// The rollout starts from the first observation, so it must be complete.
inline void require_full_first_stage(const Episode& e, std::size_t index) {
  for (auto m : e.mask.front())
    if (m == 0) throw std::invalid_argument("episode " + std::to_string(index) + ": first stage must be fully observed");
}

inline nlohmann::json dataset_to_json(const EpisodeDataset& d) {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : d.episodes) {
    nlohmann::json obs = nlohmann::json::array();
    for (std::size_t t = 0; t < e.observations.size(); ++t) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < 8; ++j) {
        if (e.mask[t][j] != 0)
          row.push_back(e.observations[t][j]);
        else
          row.push_back(nullptr);
      }
      obs.push_back(row);
    }
    nlohmann::json je{{"dt", e.dt}, {"source", e.source}, {"observations", obs}};
    if (!e.demonstrator_weights.empty()) je["demonstrator_weights"] = e.demonstrator_weights;
    eps.push_back(je);
  }
  return {{"schema_version", kDatasetSchemaVersion}, {"metadata", d.metadata}, {"episodes", eps}};
}

inline EpisodeDataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kDatasetSchemaVersion) throw std::invalid_argument("dataset: unsupported schema_version");
  EpisodeDataset d;
  if (j.contains("metadata")) d.metadata = j.at("metadata");
  for (const auto& je : j.at("episodes")) {
    Episode e;
    e.dt = je.at("dt").get<double>();
    e.source = je.value("source", std::string("human-format"));
    if (e.source != "synthetic" && e.source != "human-format")
      throw std::invalid_argument("dataset: source must be 'synthetic' or 'human-format'");
    for (const auto& row : je.at("observations")) {
      if (!row.is_array() || row.size() != 8) throw std::invalid_argument("dataset: every stage needs 8 entries");
      Vec<double> y(8, 0.0);
      std::vector<std::uint8_t> m(8, 0);
      for (std::size_t k = 0; k < 8; ++k) {
        if (row[k].is_null()) continue;
        y[k] = row[k].get<double>();
        m[k] = 1;
      }
      e.observations.push_back(y);
      e.mask.push_back(m);
    }
    if (je.contains("demonstrator_weights")) e.demonstrator_weights = je.at("demonstrator_weights").get<std::vector<Vec<double>>>();
    validate_episode(e, d.episodes.size());
    d.episodes.push_back(std::move(e));
  }
  return d;
}

// ------------------------------------------------------------- likelihood

// Gaussian log-likelihood of the observed entries given a state trajectory,
// without the normalising constant. Heading residuals are wrapped.
template <class T>
T observation_log_likelihood(const Episode& e, const std::vector<Vec<T>>& traj, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("observation_log_likelihood: sigma must be positive");
  if (traj.size() < e.observations.size())
    throw std::invalid_argument("observation_log_likelihood: trajectory shorter than the episode");
  bool any = false;
  T acc(0.0);
  const double scale = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t t = 0; t < e.observations.size(); ++t)
    for (std::size_t j = 0; j < 8; ++j) {
      if (e.mask[t][j] == 0) continue;
      any = true;
      T r = traj[t][j] - T(e.observations[t][j]);
      if (j == 2 || j == 6) r = wrap_angle(r);
      acc = acc + r * r;
    }
  if (!any) throw std::invalid_argument("observation_log_likelihood: episode has no observed entries");
  return acc * T(-scale);
}

// ----------------------------------------------------------------- rollout

// Solver budget of one closed-loop rollout: a fixed number of ILQ updates at
// the first stage (cold start) and at every later stage (warm start from the
// previous solution). Fixed budgets keep the rollout a smooth function of
// the model parameters.
struct RolloutConfig {
  int cold_iterations = 5;
  int warm_iterations = 2;
  std::vector<double> steps{1.0};
  // When positive, each stage is instead solved adaptively (line search,
  // exact curvature, early exit) with at most this many iterations. Better
  // plans, but not a smooth function of the weights.
  int adaptive_iterations = 0;
};

template <class T>
struct Rollout {
  std::vector<Vec<T>> states;    // steps + 1
  std::vector<Vec<T>> controls;  // steps
  std::vector<Vec<T>> opinions;  // steps + 1
};

// One stage of receding-horizon play: the game is re-anchored at the current
// state and solved with the fixed budget of `rc`, warm-started from the
// previous stage's solution when there is one.
template <class T>
class RecedingHorizonSolver {
 public:
  RecedingHorizonSolver(const RacingGame& game, const RolloutConfig& rc) : game_(game), rc_(rc) {
    opts_.fixed_steps = rc.steps;
    // A fixed number of updates on the convex model keeps the map from
    // parameters to trajectory free of branch switches.
    opts_.convex_costs = rc.adaptive_iterations <= 0;
    if (rc.adaptive_iterations > 0) opts_.max_iterations = rc.adaptive_iterations;
  }

  const EquilibriumSolution<T>& solve(const Vec<T>& x, const std::vector<T>& z) {
    game_.anchor_at(x);
    if (rc_.adaptive_iterations <= 0) opts_.fixed_iterations = prev_ ? rc_.warm_iterations : rc_.cold_iterations;
    EquilibriumSolution<T> warm;
    if (prev_) warm = shift_solution(*prev_);
    const std::vector<Vec<T>> zs{Vec<T>(z.begin(), z.end())};
    prev_ = solve_ilq(game_, x, zs, opts_, prev_ ? &warm : nullptr);
    return *prev_;
  }

  void restart() { prev_.reset(); }
  [[nodiscard]] const RacingGame& game() const { return game_; }

 private:
  RacingGame game_;
  RolloutConfig rc_;
  IlqOptions opts_;
  std::optional<EquilibriumSolution<T>> prev_;
};

// Closed loop: at each stage both players apply the first control of the
// game solved at the current state with the current weights, then the
// weight model advances.
template <class T>
Rollout<T> rollout_under_model(const WeightModel& model, const std::vector<T>* params, const RacingGame& game_template,
                               const Vec<T>& x0, int steps, const RolloutConfig& rc) {
  if (steps < 0) throw std::invalid_argument("rollout: negative step count");
  RecedingHorizonSolver<T> solver(game_template, rc);
  WeightTracker<T> tracker(model, game_template.track(), game_template.config().dt, params);
  Rollout<T> out;
  out.states.push_back(x0);
  out.opinions.push_back(tracker.reset(x0));
  for (int t = 0; t < steps; ++t) {
    const Vec<T>& x = out.states.back();
    const auto& sol = solver.solve(x, out.opinions.back());
    out.controls.push_back(sol.controls.front());
    const Vec<T> next = sol.states[1];
    out.opinions.push_back(tracker.advance(x, next));
    out.states.push_back(next);
  }
  return out;
}

// ---------------------------------------------------------------- training

enum class GradientMode { kUnrolled, kFiniteDifference };

inline std::string to_string(GradientMode g) { return g == GradientMode::kUnrolled ? "unrolled" : "finite-difference"; }

inline GradientMode gradient_mode_from_string(const std::string& s) {
  if (s == "unrolled") return GradientMode::kUnrolled;
  if (s == "finite-difference") return GradientMode::kFiniteDifference;
  throw std::invalid_argument("unknown gradient mode '" + s + "'");
}

struct TrainConfig {
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int batch_size = 8;
  double sigma_obs = 0.1;
  int max_stages = 40;  // episodes are truncated to this many stages
  double grad_clip = 0.0;  // global-norm clip when positive
  double fd_step = 1e-6;
  GradientMode gradient_mode = GradientMode::kUnrolled;
  RolloutConfig rollout;
  std::uint64_t seed = 1;
  int workers = 1;  // episodes evaluated in parallel; results do not depend on it
};

inline void validate(const TrainConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("train config: ") + name + " must be positive");
  };
  if (!(c.learning_rate >= 0.0)) throw std::invalid_argument("train config: learning_rate must be nonnegative");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    throw std::invalid_argument("train config: Adam moment coefficients must lie in [0, 1)");
  positive(c.adam_eps, "adam_eps");
  positive(c.sigma_obs, "sigma_obs");
  positive(c.fd_step, "fd_step");
  if (c.epochs < 0) throw std::invalid_argument("train config: epochs must be nonnegative");
  if (c.batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
  if (c.max_stages < 1) throw std::invalid_argument("train config: max_stages must be positive");
  if (c.rollout.cold_iterations < 1 || c.rollout.warm_iterations < 1)
    throw std::invalid_argument("train config: solver iteration budgets must be positive");
  if (c.rollout.steps.empty()) throw std::invalid_argument("train config: rollout step list is empty");
  if (c.grad_clip < 0.0) throw std::invalid_argument("train config: grad_clip must be nonnegative");
  if (c.rollout.adaptive_iterations > 0)
    throw std::invalid_argument("train config: training rollouts need the fixed solver budget");
  if (c.workers < 1) throw std::invalid_argument("train config: workers must be positive");
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
          {"beta2", c.beta2},                 {"adam_eps", c.adam_eps},
          {"epochs", c.epochs},               {"batch_size", c.batch_size},
          {"sigma_obs", c.sigma_obs},         {"max_stages", c.max_stages},
          {"grad_clip", c.grad_clip},         {"fd_step", c.fd_step},
          {"gradient_mode", to_string(c.gradient_mode)},
          {"cold_iterations", c.rollout.cold_iterations},
          {"warm_iterations", c.rollout.warm_iterations},
          {"solver_steps", c.rollout.steps},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("learning_rate", c.learning_rate);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_eps", c.adam_eps);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("sigma_obs", c.sigma_obs);
  get("max_stages", c.max_stages);
  get("grad_clip", c.grad_clip);
  get("fd_step", c.fd_step);
  if (j.contains("gradient_mode")) c.gradient_mode = gradient_mode_from_string(j.at("gradient_mode").get<std::string>());
  get("cold_iterations", c.rollout.cold_iterations);
  get("warm_iterations", c.rollout.warm_iterations);
  get("solver_steps", c.rollout.steps);
  get("seed", c.seed);
  validate(c);
  return c;
}

struct LossGradient {
  double loss = 0.0;  // summed negative log-likelihood
  std::vector<double> gradient;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t episode) : std::runtime_error(what), episode_index(episode) {}
  std::size_t episode_index;
};

namespace detail {

inline Vec<double> first_state(const Episode& e) { return e.observations.front(); }

inline int rollout_steps(const Episode& e, const TrainConfig& c) { return std::min(e.stages(), c.max_stages) - 1; }

inline double episode_loss(const WeightModel& model, const RacingGame& game, const Episode& e, const TrainConfig& c,
                           std::size_t index) {
  try {
    const auto r = rollout_under_model<double>(model, nullptr, game, first_state(e), rollout_steps(e, c), c.rollout);
    const double l = -observation_log_likelihood(e, r.states, c.sigma_obs);
    if (!std::isfinite(l)) throw TrainingError("non-finite loss", index);
    return l;
  } catch (const SolverError& err) {
    throw TrainingError(std::string("episode ") + std::to_string(index) + ": " + err.what(), index);
  }
}

}  // namespace detail

// Loss summed over `batch` (indices into the dataset) and its gradient with
// respect to the model parameters in WeightModel::flatten() order.
inline LossGradient loss_and_gradient(const WeightModel& model, const RacingGame& game, const EpisodeDataset& data,
                                      const std::vector<std::size_t>& batch, const TrainConfig& c) {
  if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  for (std::size_t i : batch) {
    if (i >= data.episodes.size()) throw std::out_of_range("loss_and_gradient: episode index out of range");
    require_full_first_stage(data.episodes[i], i);
  }
  const std::size_t np = model.num_params();
  LossGradient out;
  out.gradient.assign(np, 0.0);

  if (c.gradient_mode == GradientMode::kFiniteDifference) {
    for (std::size_t i : batch) out.loss += detail::episode_loss(model, game, data.episodes[i], c, i);
    const std::vector<double> p0 = model.flatten();
    WeightModel probe = model;
    for (std::size_t k = 0; k < np; ++k) {
      auto p = p0;
      p[k] = p0[k] + c.fd_step;
      probe.assign(p);
      double up = 0.0;
      for (std::size_t i : batch) up += detail::episode_loss(probe, game, data.episodes[i], c, i);
      p[k] = p0[k] - c.fd_step;
      probe.assign(p);
      double dn = 0.0;
      for (std::size_t i : batch) dn += detail::episode_loss(probe, game, data.episodes[i], c, i);
      out.gradient[k] = (up - dn) / (2.0 * c.fd_step);
    }
    return out;
  }

  const std::vector<double> p0 = model.flatten();
  std::vector<LossGradient> parts(batch.size());
  parallel_for(batch.size(), c.workers, [&](std::size_t b) {
    const std::size_t i = batch[b];
    const Episode& e = data.episodes[i];
    ad::Tape tape;
    ad::TapeScope scope(tape);
    std::vector<Var> params;
    params.reserve(np);
    for (double v : p0) params.push_back(Var::independent(v));
    Vec<Var> x0;
    for (double v : detail::first_state(e)) x0.push_back(Var(v));
    Var loss;
    try {
      const auto r = rollout_under_model<Var>(model, &params, game, x0, detail::rollout_steps(e, c), c.rollout);
      loss = -observation_log_likelihood(e, r.states, c.sigma_obs);
    } catch (const SolverError& err) {
      throw TrainingError(std::string("episode ") + std::to_string(i) + ": " + err.what(), i);
    }
    if (!std::isfinite(loss.v)) throw TrainingError("episode " + std::to_string(i) + ": non-finite loss", i);
    LossGradient& part = parts[b];
    part.loss = loss.v;
    part.gradient.resize(np);
    const auto adj = tape.adjoints(loss.id);
    for (std::size_t k = 0; k < np; ++k) part.gradient[k] = adj[static_cast<std::size_t>(params[k].id)];
  });
  for (const auto& part : parts) {
    out.loss += part.loss;
    for (std::size_t k = 0; k < np; ++k) out.gradient[k] += part.gradient[k];
  }
  return out;
}

struct TrainReport {
  std::vector<double> loss;           // mean per-episode loss seen during each epoch
  std::vector<double> gradient_norm;  // mean batch gradient norm per epoch
  double wall_seconds = 0.0;
  WeightModel model;
  bool completed = true;
  std::string error;
};

class Adam {
 public:
  Adam(std::size_t n, double lr, double b1, double b2, double eps) : m_(n, 0.0), v_(n, 0.0), lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void step(std::vector<double>& p, const std::vector<double>& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t k = 0; k < p.size(); ++k) {
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * g[k];
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * g[k] * g[k];
      p[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
  }

 private:
  std::vector<double> m_, v_;
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
};

// Adam over shuffled mini-batches. Errors stop training and are reported in
// the returned report together with the weights reached so far.
inline TrainReport train(const WeightModel& init, const RacingGame& game, const EpisodeDataset& data, const TrainConfig& c,
                         const std::function<void(int, double)>& on_epoch = {}) {
  validate(c);
  if (data.episodes.empty()) throw std::invalid_argument("train: empty dataset");
  for (std::size_t i = 0; i < data.episodes.size(); ++i) {
    validate_episode(data.episodes[i], i);
    require_full_first_stage(data.episodes[i], i);
  }
  if (init.kind == ModelKind::kStatic) throw std::invalid_argument("train: a static model has no parameters");
  const auto start = std::chrono::steady_clock::now();
  TrainReport rep;
  rep.model = init;
  std::vector<double> p = init.flatten();
  Adam adam(p.size(), c.learning_rate, c.beta1, c.beta2, c.adam_eps);
  std::vector<std::size_t> order(data.episodes.size());
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(sub_seed(c.seed, static_cast<std::uint64_t>(epoch), "shuffle"));
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    double total = 0.0, gnorm = 0.0;
    int batches = 0;
    try {
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(c.batch_size)) {
        const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + static_cast<std::size_t>(c.batch_size))));
        LossGradient lg = loss_and_gradient(rep.model, game, data, batch, c);
        double norm = 0.0;
        for (double g : lg.gradient) norm += g * g;
        norm = std::sqrt(norm);
        if (!std::isfinite(norm)) throw TrainingError("non-finite gradient", batch.front());
        if (c.grad_clip > 0.0 && norm > c.grad_clip)
          for (double& g : lg.gradient) g *= c.grad_clip / norm;
        total += lg.loss;
        gnorm += norm;
        ++batches;
        adam.step(p, lg.gradient);
        rep.model.assign(p);
      }
    } catch (const std::exception& err) {
      rep.completed = false;
      rep.error = "epoch " + std::to_string(epoch) + ": " + err.what();
      break;
    }
    rep.loss.push_back(total / static_cast<double>(data.episodes.size()));
    rep.gradient_norm.push_back(gnorm / batches);
    if (on_epoch) on_epoch(epoch, rep.loss.back());
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// Mean per-episode loss over the whole dataset at fixed weights.
inline double dataset_loss(const WeightModel& model, const RacingGame& game, const EpisodeDataset& data, const TrainConfig& c) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.episodes.size(); ++i) total += detail::episode_loss(model, game, data.episodes[i], c, i);
  return total / static_cast<double>(data.episodes.size());
}

// Root-mean-square difference between the model's closed-loop rollout from
// each episode's first observation and the observed entries.
inline double closed_loop_rmse(const WeightModel& model, const RacingGame& game, const EpisodeDataset& data,
                               const TrainConfig& c) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.episodes.size(); ++i) {
    const Episode& e = data.episodes[i];
    const auto r = rollout_under_model<double>(model, nullptr, game, detail::first_state(e), detail::rollout_steps(e, c), c.rollout);
    for (std::size_t t = 0; t < r.states.size(); ++t)
      for (std::size_t j = 0; j < 8; ++j) {
        if (e.mask[t][j] == 0) continue;
        double d = r.states[t][j] - e.observations[t][j];
        if (j == 2 || j == 6) d = wrap_angle(d);
        acc += d * d;
        ++count;
      }
  }
  return std::sqrt(acc / static_cast<double>(std::max<std::size_t>(count, 1)));
}

// ------------------------------------------------------------ synthetic data

// Ranges of the randomized initial conditions (rival ahead of the ego).
struct InitialConditionRanges {
  double gap_min = 5.0, gap_max = 20.0;
  double lateral_fraction = 0.5;  // |e| <= fraction * halfwidth
  double speed_min = 8.0, speed_max = 15.0;
};

inline nlohmann::json initial_ranges_to_json(const InitialConditionRanges& r) {
  return {{"gap_min", r.gap_min},
          {"gap_max", r.gap_max},
          {"lateral_fraction", r.lateral_fraction},
          {"speed_min", r.speed_min},
          {"speed_max", r.speed_max}};
}

inline InitialConditionRanges initial_ranges_from_json(const nlohmann::json& j, InitialConditionRanges r = {}) {
  auto get = [&](const char* key, double& f) {
    if (j.contains(key)) f = j.at(key).get<double>();
  };
  get("gap_min", r.gap_min);
  get("gap_max", r.gap_max);
  get("lateral_fraction", r.lateral_fraction);
  get("speed_min", r.speed_min);
  get("speed_max", r.speed_max);
  if (!(r.gap_min >= 0.0 && r.gap_max >= r.gap_min) || !(r.speed_min >= 0.0 && r.speed_max >= r.speed_min) ||
      !(r.lateral_fraction >= 0.0 && r.lateral_fraction < 1.0))
    throw std::invalid_argument("initial condition ranges are inconsistent");
  return r;
}

// Joint state with the ego at arc length s_ego and the rival `gap` metres
// ahead, both aligned with the centreline.
inline Vec<double> joint_state_on_track(const Track& track, double s_ego, double gap, double e_ego, double e_rival,
                                        double v_ego, double v_rival) {
  const auto pe = track.pose(s_ego, e_ego);
  const auto pr = track.pose(track.wrap(s_ego + gap), e_rival);
  return {pe[0], pe[1], pe[2], v_ego, pr[0], pr[1], pr[2], v_rival};
}

inline Vec<double> random_initial_state(const Track& track, const InitialConditionRanges& r, Rng& rng) {
  const double hw_ego_s = track.closed() ? rng.uniform(0.0, track.length()) : rng.uniform(0.0, 0.25 * track.length());
  const double gap = rng.uniform(r.gap_min, r.gap_max);
  const double we = track.halfwidth(hw_ego_s).first;
  const double wr = track.halfwidth(track.wrap(hw_ego_s + gap)).first;
  const double ee = rng.uniform(-r.lateral_fraction, r.lateral_fraction) * we;
  const double er = rng.uniform(-r.lateral_fraction, r.lateral_fraction) * wr;
  const double ve = rng.uniform(r.speed_min, r.speed_max);
  const double vr = rng.uniform(r.speed_min, r.speed_max);
  return joint_state_on_track(track, hw_ego_s, gap, ee, er, ve, vr);
}

struct SyntheticDataConfig {
  int episodes = 16;
  int stages = 11;  // observations per episode
  double noise = 0.0;
  double missing = 0.0;
  std::uint64_t seed = 1;
  InitialConditionRanges initial;
  RolloutConfig rollout;
};

// Rolls out the demonstrator from random initial conditions and records
// noisy, partially masked observations. The first stage is never masked.
inline EpisodeDataset generate_synthetic_dataset(const WeightModel& demonstrator, const RacingGame& game,
                                                 const SyntheticDataConfig& c) {
  if (c.episodes < 1) throw std::invalid_argument("generate_synthetic_dataset: need at least one episode");
  if (c.stages < 1) throw std::invalid_argument("generate_synthetic_dataset: need at least one stage");
  if (!(c.noise >= 0.0)) throw std::invalid_argument("generate_synthetic_dataset: noise must be nonnegative");
  if (!(c.missing >= 0.0 && c.missing < 1.0)) throw std::invalid_argument("generate_synthetic_dataset: missing fraction must lie in [0, 1)");
  EpisodeDataset d;
  d.metadata = {{"generator", "synthetic"},
                {"demonstrator", to_string(demonstrator.kind)},
                {"episodes", c.episodes},
                {"stages", c.stages},
                {"noise", c.noise},
                {"missing", c.missing},
                {"seed", c.seed},
                {"initial_conditions", initial_ranges_to_json(c.initial)}};
  for (int n = 0; n < c.episodes; ++n) {
    Rng init_rng(sub_seed(c.seed, static_cast<std::uint64_t>(n), "initial"));
    Rng obs_rng(sub_seed(c.seed, static_cast<std::uint64_t>(n), "observation"));
    const Vec<double> x0 = random_initial_state(game.track(), c.initial, init_rng);
    const auto r = rollout_under_model<double>(demonstrator, nullptr, game, x0, c.stages - 1, c.rollout);
    Episode e;
    e.dt = game.config().dt;
    e.source = "synthetic";
    for (int t = 0; t < c.stages; ++t) {
      Vec<double> y = r.states[static_cast<std::size_t>(t)];
      std::vector<std::uint8_t> m(8, 1);
      for (std::size_t j = 0; j < 8; ++j) {
        y[j] += c.noise * obs_rng.normal();
        if (t > 0 && obs_rng.uniform() < c.missing) m[j] = 0;
      }
      e.observations.push_back(y);
      e.mask.push_back(m);
    }
    e.demonstrator_weights = r.opinions;
    d.episodes.push_back(std::move(e));
  }
  return d;
}

// Hand-written demonstrator: a single linear layer on the racing features
// (MLP-IG form, weights = z_max * tanh(W f + b)). The overtaking weight grows
// with the gap to the rival ahead and fades, without turning negative, once
// the ego has passed by up to about 25 m. Its belief about the rival is a
// constant mild blocking weight.
inline WeightModel make_scripted_demonstrator(double z_max = 5.0) {
  WeightModel m;
  m.kind = ModelKind::kMlpIg;
  m.decoder = ParamDecoder(Topology({kEgoOptions, kRivalOptions}), z_max);
  m.net = init_mlp({kRacingFeatureDim, kRacingOpinionDim}, Activation::kTanh, 0);
  DenseLayer& l = m.net.layers.front();
  for (double& w : l.weight.data()) w = 0.0;
  l.bias[0] = 0.8;  // overtake
  l.weight(0, 0) = 0.3;
  l.bias[4] = 0.3;  // rival block (belief)
  return m;
}

// Mean demonstrator weights over all stages of a dataset (static baseline).
inline std::vector<double> mean_demonstrator_weights(const EpisodeDataset& d) {
  std::vector<double> mean(kRacingOpinionDim, 0.0);
  std::size_t count = 0;
  for (const auto& e : d.episodes)
    for (const auto& w : e.demonstrator_weights) {
      if (w.size() != mean.size()) throw std::invalid_argument("demonstrator weights have the wrong length");
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += w[j];
      ++count;
    }
  if (count == 0) throw std::invalid_argument("dataset carries no demonstrator weights");
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

}  // namespace nnod
