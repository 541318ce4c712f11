// Networks that map the physical racing state to opinion-dynamics parameters
// and to an initial opinion, and the decoder that enforces parameter ranges.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnod/dyn_game.hpp"
#include "nnod/math.hpp"
#include "nnod/mlp.hpp"
#include "nnod/opinion.hpp"
#include "nnod/track.hpp"

namespace nnod {

// Where each group of network outputs goes in NODParams.
class ParamDecoder {
 public:
  static constexpr double kFloor = 1e-3;

  ParamDecoder() : ParamDecoder(Topology({kEgoOptions, kRivalOptions})) {}
  explicit ParamDecoder(Topology topology, double z_max = 5.0) : topology_(std::move(topology)), z_max_(z_max) {
    if (!(z_max_ > 0.0) || !std::isfinite(z_max_)) throw std::invalid_argument("ParamDecoder: z_max must be positive");
    const int na = topology_.num_agents();
    for (int i = 0; i < na; ++i)
      for (int l = 0; l < topology_.options(i); ++l)
        for (int q = 0; q < topology_.options(i); ++q)
          if (l != q) beta_slots_.push_back({i, 0, l, q});
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < na; ++j) {
        if (i == j) continue;
        const int shared = std::min(topology_.options(i), topology_.options(j));
        for (int l = 0; l < shared; ++l) gamma_slots_.push_back({i, j, l, 0});
        for (int l = 0; l < topology_.options(i); ++l)
          for (int q = 0; q < shared; ++q)
            if (l != q) delta_slots_.push_back({i, j, l, q});
      }
  }

  [[nodiscard]] const Topology& topology() const { return topology_; }
  [[nodiscard]] double z_max() const { return z_max_; }

  // Output layout: d, b, alpha (n each), lambda, beta, gamma, delta.
  [[nodiscard]] int output_dim() const {
    return 3 * topology_.total_dim() + 1 + static_cast<int>(beta_slots_.size() + gamma_slots_.size() + delta_slots_.size());
  }

  template <class T>
  BasicNODParams<T> decode(const std::vector<T>& raw) const {
    if (static_cast<int>(raw.size()) != output_dim())
      throw std::invalid_argument("ParamDecoder::decode: expected " + std::to_string(output_dim()) + " raw outputs, got " +
                                  std::to_string(raw.size()));
    const auto n = static_cast<std::size_t>(topology_.total_dim());
    auto p = BasicNODParams<T>::zeros(topology_);
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) p.damping[j] = softplus(raw[k++]) + T(kFloor);
    for (std::size_t j = 0; j < n; ++j) p.bias[j] = raw[k++];
    for (std::size_t j = 0; j < n; ++j) p.self_gain[j] = softplus(raw[k++]);
    p.attention = softplus(raw[k++]) + T(kFloor);
    for (const auto& s : beta_slots_) p.beta(s.i)(s.l, s.q) = softplus(raw[k++]);
    for (const auto& s : gamma_slots_) p.gamma(s.i, s.j)[static_cast<std::size_t>(s.l)] = raw[k++];
    for (const auto& s : delta_slots_) p.delta(s.i, s.j)(s.l, s.q) = raw[k++];
    return p;
  }

  template <class T>
  std::vector<T> decode_opinion(const std::vector<T>& raw) const {
    using std::tanh;
    if (static_cast<int>(raw.size()) != topology_.total_dim())
      throw std::invalid_argument("ParamDecoder::decode_opinion: length does not match topology");
    std::vector<T> z(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) z[j] = T(z_max_) * tanh(raw[j]);
    return z;
  }

 private:
  struct Slot {
    int i, j, l, q;
  };
  Topology topology_;
  double z_max_;
  std::vector<Slot> beta_slots_, gamma_slots_, delta_slots_;
};

inline constexpr int kRacingFeatureDim = 8;

// Track-frame features of the joint state: arc-length gap to the rival,
// lateral offsets relative to the halfwidth, speeds, heading errors against
// the centreline, and the speed difference. All roughly unit scale.
template <class T>
std::vector<T> racing_features(const Track& track, const Vec<T>& x) {
  if (x.size() != 8) throw std::invalid_argument("racing_features: joint state must have 8 entries");
  std::vector<T> f;
  f.reserve(kRacingFeatureDim);
  std::array<TrackFrame<T>, 2> fr{track_frame(track, x[0], x[1]), track_frame(track, x[4], x[5])};
  auto heading_error = [&](int c) {
    const TrackFrame<T>& q = fr[static_cast<std::size_t>(c)];
    const double s0 = track.wrap(value(q.s));
    // Centreline heading, first-order in the arc-length offset.
    const T psi = T(track.heading(s0)) + T(track.curvature(s0)) * (q.s - T(value(q.s)));
    return wrap_angle(x[static_cast<std::size_t>(4 * c + 2)] - psi);
  };
  f.push_back(track.gap(fr[1].s, fr[0].s) * T(0.1));
  f.push_back(fr[0].e / fr[0].hw);
  f.push_back(fr[1].e / fr[1].hw);
  f.push_back(x[3] * T(0.1));
  f.push_back(x[7] * T(0.1));
  f.push_back(heading_error(0));
  f.push_back(heading_error(1));
  f.push_back((x[7] - x[3]) * T(0.2));
  return f;
}

template <class T>
Vec<T> network_output(const MLPWeights& w, const std::vector<T>& in, const std::vector<T>* params) {
  if constexpr (std::is_same_v<T, Var>) {
    if (params != nullptr) return mlp_forward(w, in, *params);
    Vec<Var> out;
    for (double v : mlp_forward(w, values(in))) out.push_back(Var(v));
    return out;
  } else {
    (void)params;
    return mlp_forward(w, in);
  }
}

inline NODParams predict_nod_params(const MLPWeights& w, const ParamDecoder& dec, const Track& track, const Vec<double>& x) {
  return dec.decode(mlp_forward(w, racing_features(track, x)));
}

inline OpinionState predict_initial_opinion(const MLPWeights& w0, const ParamDecoder& dec, const Track& track,
                                            const Vec<double>& x0) {
  return OpinionState(dec.topology(), dec.decode_opinion(mlp_forward(w0, racing_features(track, x0))));
}

// Source of per-stage game weights along a closed-loop rollout.
enum class ModelKind { kNeuralNod, kMlpIg, kStatic };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kNeuralNod: return "neural-nod";
    case ModelKind::kMlpIg: return "mlp-ig";
    case ModelKind::kStatic: return "static";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "neural-nod") return ModelKind::kNeuralNod;
  if (s == "mlp-ig") return ModelKind::kMlpIg;
  if (s == "static") return ModelKind::kStatic;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

struct ModelArchitecture {
  std::vector<int> hidden{16, 16};
  Activation activation = Activation::kTanh;
  double z_max = 5.0;
  double init_gain = 1.0;
};

// Neural NOD: `net` is the parameter network and `net0` the initial-opinion
// network. MLP-IG: `net` maps features straight to the weights and `net0` is
// unused. Static: `weights` is used at every stage.
struct WeightModel {
  ModelKind kind = ModelKind::kNeuralNod;
  ParamDecoder decoder;
  MLPWeights net;
  MLPWeights net0;
  std::vector<double> weights;
  Integrator integrator = Integrator::kEuler;

  [[nodiscard]] std::size_t num_params() const {
    if (kind == ModelKind::kNeuralNod) return net.num_params() + net0.num_params();
    if (kind == ModelKind::kMlpIg) return net.num_params();
    return 0;
  }

  [[nodiscard]] std::vector<double> flatten() const {
    std::vector<double> p;
    if (kind == ModelKind::kStatic) return p;
    p = net.flatten();
    if (kind == ModelKind::kNeuralNod) {
      const auto q = net0.flatten();
      p.insert(p.end(), q.begin(), q.end());
    }
    return p;
  }

  void assign(const std::vector<double>& p) {
    if (p.size() != num_params()) throw std::invalid_argument("WeightModel::assign: wrong parameter count");
    if (kind == ModelKind::kStatic) return;
    const auto n = static_cast<std::ptrdiff_t>(net.num_params());
    net.assign(std::vector<double>(p.begin(), p.begin() + n));
    if (kind == ModelKind::kNeuralNod) net0.assign(std::vector<double>(p.begin() + n, p.end()));
  }
};

inline WeightModel make_weight_model(ModelKind kind, const ModelArchitecture& arch, std::uint64_t seed) {
  WeightModel m;
  m.kind = kind;
  m.decoder = ParamDecoder(Topology({kEgoOptions, kRivalOptions}), arch.z_max);
  std::vector<int> dims{kRacingFeatureDim};
  dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
  if (kind == ModelKind::kStatic) {
    m.weights.assign(kRacingOpinionDim, 0.0);
    return m;
  }
  auto d = dims;
  d.push_back(kind == ModelKind::kNeuralNod ? m.decoder.output_dim() : kRacingOpinionDim);
  m.net = init_mlp(d, arch.activation, sub_seed(seed, 0, "net"), arch.init_gain);
  if (kind == ModelKind::kNeuralNod) {
    auto d0 = dims;
    d0.push_back(kRacingOpinionDim);
    m.net0 = init_mlp(d0, arch.activation, sub_seed(seed, 1, "net0"), arch.init_gain);
  }
  return m;
}

inline WeightModel make_static_model(std::vector<double> weights, double z_max = 5.0) {
  if (weights.size() != static_cast<std::size_t>(kRacingOpinionDim))
    throw std::invalid_argument("static model needs " + std::to_string(kRacingOpinionDim) + " weights");
  WeightModel m;
  m.kind = ModelKind::kStatic;
  m.decoder = ParamDecoder(Topology({kEgoOptions, kRivalOptions}), z_max);
  m.weights = std::move(weights);
  return m;
}

// Per-rollout view of a model whose parameters may be tape variables.
template <class T>
class WeightTracker {
 public:
  // params: the model parameters in WeightModel::flatten() order, or null to
  // treat them as constants.
  WeightTracker(const WeightModel& m, const Track& track, double dt, const std::vector<T>* params = nullptr)
      : model_(m), track_(track), dt_(dt) {
    if (params != nullptr) {
      if (params->size() != m.num_params()) throw std::invalid_argument("WeightTracker: parameter vector length");
      const auto n = static_cast<std::ptrdiff_t>(m.net.num_params());
      if (m.kind != ModelKind::kStatic) p_net_.assign(params->begin(), params->begin() + n);
      if (m.kind == ModelKind::kNeuralNod) p_net0_.assign(params->begin() + n, params->end());
      taped_ = true;
    }
  }

  // Weights for the first stage; (re)initialises the opinion state.
  std::vector<T> reset(const Vec<T>& x0) {
    if (model_.kind == ModelKind::kStatic) return current_ = std::vector<T>(model_.weights.begin(), model_.weights.end());
    const auto f = racing_features(track_, x0);
    if (model_.kind == ModelKind::kNeuralNod)
      return current_ = model_.decoder.decode_opinion(network_output(model_.net0, f, taped_ ? &p_net0_ : nullptr));
    return current_ = mlp_ig_weights(f);
  }

  // Advances from the stage at state x to the next stage at state x_next.
  std::vector<T> advance(const Vec<T>& x, const Vec<T>& x_next) {
    if (model_.kind == ModelKind::kStatic) return current_;
    if (model_.kind == ModelKind::kMlpIg) return current_ = mlp_ig_weights(racing_features(track_, x_next));
    const auto eta = model_.decoder.decode(network_output(model_.net, racing_features(track_, x), taped_ ? &p_net_ : nullptr));
    current_ = nod_step(current_, eta, dt_, model_.integrator);
    return current_;
  }

  [[nodiscard]] const std::vector<T>& current() const { return current_; }

 private:
  std::vector<T> mlp_ig_weights(const std::vector<T>& f) {
    return model_.decoder.decode_opinion(network_output(model_.net, f, taped_ ? &p_net_ : nullptr));
  }

  const WeightModel& model_;
  const Track& track_;
  double dt_;
  bool taped_ = false;
  std::vector<T> p_net_, p_net0_;
  std::vector<T> current_;
};

inline nlohmann::json weight_model_to_json(const WeightModel& m) {
  nlohmann::json j{{"schema_version", 1},
                   {"kind", to_string(m.kind)},
                   {"z_max", m.decoder.z_max()},
                   {"options_per_agent", m.decoder.topology().options_per_agent()},
                   {"integrator", m.integrator == Integrator::kEuler ? "euler" : "rk4"}};
  if (m.kind == ModelKind::kStatic) j["weights"] = m.weights;
  if (m.kind != ModelKind::kStatic) j["net"] = mlp_to_json(m.net);
  if (m.kind == ModelKind::kNeuralNod) j["net0"] = mlp_to_json(m.net0);
  return j;
}

inline WeightModel weight_model_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1) throw std::invalid_argument("model: unsupported schema_version");
  WeightModel m;
  m.kind = model_kind_from_string(j.at("kind").get<std::string>());
  m.decoder = ParamDecoder(Topology(j.at("options_per_agent").get<std::vector<int>>()), j.at("z_max").get<double>());
  if (m.decoder.topology().total_dim() != kRacingOpinionDim)
    throw std::invalid_argument("model: racing models need options_per_agent [4, 3]");
  const std::string integ = j.value("integrator", std::string("euler"));
  if (integ != "euler" && integ != "rk4") throw std::invalid_argument("model: unknown integrator '" + integ + "'");
  m.integrator = integ == "euler" ? Integrator::kEuler : Integrator::kRK4;
  auto check_net = [](const MLPWeights& w, int out, const char* name) {
    if (w.input_dim() != kRacingFeatureDim || w.output_dim() != out)
      throw std::invalid_argument(std::string("model: network '") + name + "' has the wrong input or output size");
  };
  if (m.kind == ModelKind::kStatic) {
    m.weights = j.at("weights").get<std::vector<double>>();
    if (m.weights.size() != static_cast<std::size_t>(kRacingOpinionDim)) throw std::invalid_argument("model: weights length");
  } else {
    m.net = mlp_from_json(j.at("net"));
    check_net(m.net, m.kind == ModelKind::kNeuralNod ? m.decoder.output_dim() : kRacingOpinionDim, "net");
  }
  if (m.kind == ModelKind::kNeuralNod) {
    m.net0 = mlp_from_json(j.at("net0"));
    check_net(m.net0, kRacingOpinionDim, "net0");
  }
  return m;
}

}  // namespace nnod
