// Small fully connected networks with hand-written forward and backward
// passes, plus a taped variant that records one custom node per call.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnod/ad.hpp"
#include "nnod/dense.hpp"
#include "nnod/rng.hpp"

namespace nnod {

enum class Activation { kTanh, kRelu };

inline std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct DenseLayer {
  Mat<double> weight;  // out x in
  Vec<double> bias;    // out
};

struct MLPWeights {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kTanh;

  [[nodiscard]] int input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  [[nodiscard]] int output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  [[nodiscard]] std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.data().size() + l.bias.size();
    return n;
  }

  // Layer by layer: weights row-major, then bias.
  [[nodiscard]] std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(num_params());
    for (const auto& l : layers) {
      out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }

  void assign(const std::vector<double>& flat) {
    if (flat.size() != num_params()) throw std::invalid_argument("MLPWeights::assign: wrong parameter count");
    std::size_t k = 0;
    for (auto& l : layers) {
      for (auto& w : l.weight.data()) w = flat[k++];
      for (auto& b : l.bias) b = flat[k++];
    }
  }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("MLPWeights: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (static_cast<int>(l.bias.size()) != l.weight.rows())
        throw std::invalid_argument("MLPWeights: bias length does not match layer " + std::to_string(i));
      if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows())
        throw std::invalid_argument("MLPWeights: layer " + std::to_string(i) + " does not chain");
      for (double w : l.weight.data())
        if (!std::isfinite(w)) throw std::invalid_argument("MLPWeights: non-finite weight");
      for (double b : l.bias)
        if (!std::isfinite(b)) throw std::invalid_argument("MLPWeights: non-finite bias");
    }
  }
};

// dims = {input, hidden..., output}. Uniform Glorot scaling, zero biases.
inline MLPWeights init_mlp(const std::vector<int>& dims, Activation act, std::uint64_t seed, double gain = 1.0) {
  if (dims.size() < 2) throw std::invalid_argument("init_mlp: need at least input and output sizes");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("init_mlp: layer sizes must be positive");
  Rng rng(seed);
  MLPWeights w;
  w.activation = act;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l{Mat<double>(dims[i + 1], dims[i]), Vec<double>(static_cast<std::size_t>(dims[i + 1]), 0.0)};
    const double a = gain * std::sqrt(6.0 / (dims[i] + dims[i + 1]));
    for (auto& x : l.weight.data()) x = rng.uniform(-a, a);
    w.layers.push_back(std::move(l));
  }
  return w;
}

namespace detail {

inline double activate(Activation a, double x) { return a == Activation::kTanh ? std::tanh(x) : (x > 0.0 ? x : 0.0); }

// Derivative expressed through the activation output y.
inline double activate_slope(Activation a, double y) { return a == Activation::kTanh ? 1.0 - y * y : (y > 0.0 ? 1.0 : 0.0); }

// Post-activation outputs of every layer; the last one is linear.
inline std::vector<Vec<double>> mlp_layers(const MLPWeights& w, const Vec<double>& x) {
  if (static_cast<int>(x.size()) != w.input_dim())
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.size()) + " entries, network expects " +
                                std::to_string(w.input_dim()));
  std::vector<Vec<double>> acts{x};
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    Vec<double> h = w.layers[i].weight * acts.back();
    for (std::size_t j = 0; j < h.size(); ++j) {
      h[j] += w.layers[i].bias[j];
      if (i + 1 < w.layers.size()) h[j] = activate(w.activation, h[j]);
    }
    acts.push_back(std::move(h));
  }
  return acts;
}

}  // namespace detail

inline Vec<double> mlp_forward(const MLPWeights& w, const Vec<double>& x) { return detail::mlp_layers(w, x).back(); }

struct MLPGradients {
  std::vector<DenseLayer> layers;  // same shapes as the weights
  Vec<double> input;

  [[nodiscard]] std::vector<double> flatten() const {
    std::vector<double> out;
    for (const auto& l : layers) {
      out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }
};

// Gradients of dot(mlp_forward(w, x), upstream).
inline MLPGradients mlp_backward(const MLPWeights& w, const Vec<double>& x, const Vec<double>& upstream) {
  const auto acts = detail::mlp_layers(w, x);
  if (static_cast<int>(upstream.size()) != w.output_dim()) throw std::invalid_argument("mlp_backward: upstream length");
  MLPGradients g;
  g.layers.resize(w.layers.size());
  Vec<double> delta = upstream;
  for (std::size_t i = w.layers.size(); i-- > 0;) {
    const auto& l = w.layers[i];
    if (i + 1 < w.layers.size())
      for (std::size_t j = 0; j < delta.size(); ++j) delta[j] *= detail::activate_slope(w.activation, acts[i + 1][j]);
    const Vec<double>& in = acts[i];
    DenseLayer& gl = g.layers[i];
    gl.weight = Mat<double>(l.weight.rows(), l.weight.cols());
    for (int r = 0; r < l.weight.rows(); ++r)
      for (int c = 0; c < l.weight.cols(); ++c) gl.weight(r, c) = delta[static_cast<std::size_t>(r)] * in[static_cast<std::size_t>(c)];
    gl.bias = delta;
    delta = tmul(l.weight, delta);
  }
  g.input = std::move(delta);
  return g;
}

// Taped forward pass. `params` are the network parameters as tape variables
// in flatten() order; they must hold the same values as `w`.
inline Vec<Var> mlp_forward(const MLPWeights& w, const Vec<Var>& x, const std::vector<Var>& params) {
  if (params.size() != w.num_params()) throw std::invalid_argument("mlp_forward: parameter vector length");
  const Vec<double> xv = values(x);
  const Vec<double> y = mlp_forward(w, xv);
  ad::Tape* tape = ad::active_tape();
  bool any = false;
  for (const auto& v : x) any = any || v.id >= 0;
  for (const auto& v : params) any = any || v.id >= 0;
  Vec<Var> out(y.size());
  if (tape == nullptr || !any) {
    for (std::size_t j = 0; j < y.size(); ++j) out[j] = Var(y[j]);
    return out;
  }
  std::vector<ad::Tape::Index> inputs;
  inputs.reserve(x.size() + params.size());
  for (const auto& v : x) inputs.push_back(v.id);
  for (const auto& v : params) inputs.push_back(v.id);
  const std::size_t nx = x.size();
  const auto first = tape->custom(std::move(inputs), static_cast<ad::Tape::Index>(y.size()),
                                  [w, xv, nx](std::span<const double> gout, std::span<double> gin) {
                                    const Vec<double> up(gout.begin(), gout.end());
                                    const MLPGradients g = mlp_backward(w, xv, up);
                                    for (std::size_t j = 0; j < nx; ++j) gin[j] = g.input[j];
                                    std::size_t k = nx;
                                    for (const auto& l : g.layers) {
                                      for (double v : l.weight.data()) gin[k++] = v;
                                      for (double v : l.bias) gin[k++] = v;
                                    }
                                  });
  for (std::size_t j = 0; j < y.size(); ++j) out[j] = Var(y[j], first + static_cast<ad::Tape::Index>(j));
  return out;
}

inline constexpr int kMlpSchemaVersion = 1;

inline nlohmann::json mlp_to_json(const MLPWeights& w) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : w.layers)
    layers.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()}, {"weights", l.weight.data()}, {"bias", l.bias}});
  return {{"schema_version", kMlpSchemaVersion}, {"activation", to_string(w.activation)}, {"layers", layers}};
}

inline MLPWeights mlp_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kMlpSchemaVersion) throw std::invalid_argument("network: unsupported schema_version");
  MLPWeights w;
  w.activation = activation_from_string(j.at("activation").get<std::string>());
  for (const auto& jl : j.at("layers")) {
    const int in = jl.at("in").get<int>();
    const int out = jl.at("out").get<int>();
    if (in < 1 || out < 1) throw std::invalid_argument("network: layer sizes must be positive");
    auto flat = jl.at("weights").get<std::vector<double>>();
    if (flat.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(out))
      throw std::invalid_argument("network: weight array has wrong length");
    DenseLayer l{Mat<double>(out, in), jl.at("bias").get<std::vector<double>>()};
    l.weight.data() = std::move(flat);
    w.layers.push_back(std::move(l));
  }
  w.validate();
  return w;
}

}  // namespace nnod
