// Seeded random NOD instances shared by the unit tests and the acceptance run.
#pragma once

#include <vector>

#include "nnod/opinion.hpp"
#include "nnod/rng.hpp"

namespace nnod::testing {

inline Topology random_topology(Rng& rng, int max_agents = 3, int max_options = 3) {
  const int na = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_agents)));
  std::vector<int> opts;
  for (int i = 0; i < na; ++i) opts.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_options))));
  return Topology(opts);
}

// Random valid parameters. `uniform_damping` draws a single damping value for
// every entry.
inline NODParams random_params(Rng& rng, const Topology& t, bool uniform_damping = false, double bias_scale = 1.0) {
  NODParams p = NODParams::zeros(t);
  const double d0 = rng.uniform(0.5, 3.0);
  for (std::size_t k = 0; k < p.damping.size(); ++k) {
    p.damping[k] = uniform_damping ? d0 : rng.uniform(0.5, 3.0);
    p.bias[k] = bias_scale * rng.uniform(-1.0, 1.0);
    p.self_gain[k] = rng.uniform(0.0, 2.0);
  }
  p.attention = rng.uniform(0.2, 2.0);
  for (int i = 0; i < t.num_agents(); ++i) {
    for (int l = 0; l < t.options(i); ++l)
      for (int q = 0; q < t.options(i); ++q)
        if (l != q) p.beta(i)(l, q) = rng.uniform(0.0, 1.0);
    for (int j = 0; j < t.num_agents(); ++j) {
      if (j == i) continue;
      const int shared = std::min(t.options(i), t.options(j));
      for (int l = 0; l < shared; ++l) p.gamma(i, j)[static_cast<std::size_t>(l)] = rng.uniform(-1.0, 1.0);
      for (int l = 0; l < t.options(i); ++l)
        for (int q = 0; q < shared; ++q)
          if (l != q) p.delta(i, j)(l, q) = rng.uniform(-1.0, 1.0);
    }
  }
  if (rng.uniform() < 0.3) p.saturation.s1 = Saturation::kScaledSigmoid;
  if (rng.uniform() < 0.3) p.saturation.s2 = Saturation::kScaledSigmoid;
  return p;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return v;
}

inline NODParams scalar_params(double d, double b, double lambda, double alpha) {
  NODParams p = NODParams::zeros(Topology({1}));
  p.damping = {d};
  p.bias = {b};
  p.attention = lambda;
  p.self_gain = {alpha};
  return p;
}

}  // namespace nnod::testing
