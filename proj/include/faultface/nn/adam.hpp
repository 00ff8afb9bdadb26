#pragma once
#include <cmath>
#include <cstdint>
#include <vector>

#include "faultface/nn/params.hpp"

namespace faultface::nn {

struct AdamState {
  std::vector<std::vector<NdArray>> m;
  std::vector<std::vector<NdArray>> v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam_state(const ParamSet& p, double lr, double beta1 = 0.9, double beta2 = 0.999,
                                 double eps = 1e-8) {
  AdamState s;
  s.m = zero_grads(p).layers;
  s.v = s.m;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

namespace detail {
inline void check_adam_shapes(const ParamSet& p, const GradSet& g, const AdamState& s) {
  auto fail = [] { return numeric_error("adam_step: parameter, gradient and moment shapes differ"); };
  if (g.layers.size() != p.layers.size() || s.m.size() != p.layers.size() || s.v.size() != p.layers.size())
    throw fail();
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& t = p.layers[l].trainable;
    if (g.layers[l].size() != t.size() || s.m[l].size() != t.size() || s.v[l].size() != t.size()) throw fail();
    for (std::size_t k = 0; k < t.size(); ++k)
      if (g.layers[l][k].shape != t[k].shape || s.m[l][k].shape != t[k].shape || s.v[l][k].shape != t[k].shape)
        throw fail();
  }
}
}  // namespace detail

/// In-place Adam update with bias correction; increments `state.t`.
inline void adam_update(ParamSet& params, const GradSet& grads, AdamState& state) {
  detail::check_adam_shapes(params, grads, state);
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    for (std::size_t k = 0; k < params.layers[l].trainable.size(); ++k) {
      auto& w = params.layers[l].trainable[k];
      const auto& g = grads.layers[l][k];
      auto& m = state.m[l][k];
      auto& v = state.v[l][k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
        w[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
      }
    }
}

struct AdamResult {
  ParamSet params;
  AdamState state;
};

/// Pure form of adam_update: inputs are left untouched.
inline AdamResult adam_step(const ParamSet& params, const GradSet& grads, const AdamState& state) {
  AdamResult r{params, state};
  adam_update(r.params, grads, r.state);
  return r;
}

}  // namespace faultface::nn
