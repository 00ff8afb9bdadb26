#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "faultface/nn/network.hpp"

namespace faultface::nn {

struct GradCheckEntry {
  std::string layer;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +-h probe crossed a ReLU/LeakyReLU kink or changed a max-pool winner.
  std::size_t skipped = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-5;

  double max_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed() const { return max_error() < tolerance; }
};

struct GradCheckOptions {
  std::size_t batch = 4;
  double step = 1e-5;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  double tolerance = 1e-5;
};

namespace detail {

/// Branch pattern of every piecewise-linear unit in a Train-mode pass.
inline std::vector<std::size_t> kink_signature(const NetworkSpec& net, const Tape& tape) {
  std::vector<std::size_t> sig;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (const auto* a = std::get_if<Activation>(&net.layers[i])) {
      if (a->kind == Act::ReLU || a->kind == Act::LeakyReLU)
        for (double v : tape.acts[i].data) sig.push_back(v > 0.0 ? 1 : 0);
    } else if (is_layer<MaxPool>(net.layers[i])) {
      sig.insert(sig.end(), tape.cache[i].argmax.begin(), tape.cache[i].argmax.end());
    }
  }
  return sig;
}

inline double projected(const NdArray& out, const NdArray& proj) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * proj[i];
  return s;
}

inline double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace detail

/// Compares backward() against central finite differences of L = sum(output * R) for a
/// random input batch and random projection R. Parameters are drawn with fan-in scaling
/// so activations stay O(1).
inline GradCheckReport grad_check(const NetworkSpec& net, std::uint64_t seed, const GradCheckOptions& opt = {}) {
  Rng rng(seed);
  ParamSet params = init_params(net, mix64(seed));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& tr = params.layers[l].trainable;
    if (tr.empty()) continue;
    if (is_layer<BatchNorm>(net.layers[l])) {
      for (auto& v : tr[0].data) v = 1.0 + 0.2 * gaussian(rng);
      for (auto& v : tr[1].data) v = 0.2 * gaussian(rng);
    } else {
      const double fan_in = static_cast<double>(tr[0].size() / tr[0].dim(0));
      for (auto& v : tr[0].data) v = gaussian(rng) / std::sqrt(fan_in);
      for (auto& v : tr[1].data) v = 0.2 * gaussian(rng);
    }
  }
  NdArray x(batched(opt.batch, net.input_shape));
  for (auto& v : x.data) v = gaussian(rng);
  const auto base = forward(net, params, x, Mode::Train);
  NdArray proj(base.output.shape);
  for (auto& v : proj.data) v = gaussian(rng);
  const auto analytic = backward(net, params, base.tape, proj);
  const auto base_sig = detail::kink_signature(net, base.tape);

  GradCheckReport report;
  report.tolerance = opt.tolerance;
  auto probe = [&](auto&& set, double v0, double a, GradCheckEntry& e) {
    set(v0 + opt.step);
    const auto plus = forward(net, params, x, Mode::Train);
    set(v0 - opt.step);
    const auto minus = forward(net, params, x, Mode::Train);
    set(v0);
    if (detail::kink_signature(net, plus.tape) != base_sig || detail::kink_signature(net, minus.tape) != base_sig) {
      ++e.skipped;
      return;
    }
    const double numeric =
        (detail::projected(plus.output, proj) - detail::projected(minus.output, proj)) / (2.0 * opt.step);
    e.max_rel_error = std::max(e.max_rel_error, detail::rel_error(a, numeric, opt.floor));
    ++e.checked;
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& tr = params.layers[l].trainable;
    GradCheckEntry e{std::to_string(l) + ":" + layer_name(net.layers[l])};
    for (std::size_t k = 0; k < tr.size(); ++k)
      for (std::size_t i = 0; i < tr[k].size(); ++i)
        probe([&](double v) { tr[k][i] = v; }, tr[k][i], analytic.grads.layers[l][k][i], e);
    report.entries.push_back(e);
  }
  GradCheckEntry in{"input"};
  for (std::size_t i = 0; i < x.size(); ++i) probe([&](double v) { x[i] = v; }, x[i], analytic.input_grad[i], in);
  report.entries.push_back(in);
  return report;
}

}  // namespace faultface::nn
