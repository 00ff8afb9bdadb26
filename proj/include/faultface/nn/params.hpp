#pragma once
#include <cstdint>
#include <vector>

#include "faultface/nn/layers.hpp"
#include "faultface/nn/ndarray.hpp"
#include "faultface/rng.hpp"

namespace faultface::nn {

/// Trainable tensors (weight, bias / gamma, beta) and non-trainable state
/// (batchnorm running mean, running variance) of one layer.
struct LayerParams {
  std::vector<NdArray> trainable;
  std::vector<NdArray> state;
  bool operator==(const LayerParams&) const = default;
};

struct ParamSet {
  std::vector<LayerParams> layers;

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
      for (const auto& t : l.trainable) n += t.size();
    return n;
  }
  bool operator==(const ParamSet&) const = default;
};

/// Gradients, one array per trainable tensor, shapes mirroring ParamSet.
struct GradSet {
  std::vector<std::vector<NdArray>> layers;
};

inline GradSet zero_grads(const ParamSet& p) {
  GradSet g;
  g.layers.reserve(p.layers.size());
  for (const auto& l : p.layers) {
    std::vector<NdArray> arrays;
    for (const auto& t : l.trainable) arrays.emplace_back(t.shape, 0.0);
    g.layers.push_back(std::move(arrays));
  }
  return g;
}

/// Trainable tensor shapes of a layer, in storage order.
inline std::vector<Shape> trainable_shapes(const LayerSpec& layer) {
  return std::visit(Overloaded{
                        [](const Conv& c) -> std::vector<Shape> {
                          return {{c.out_ch, c.in_ch, kKernel, kKernel}, {c.out_ch}};
                        },
                        [](const TConv& c) -> std::vector<Shape> {
                          return {{c.out_ch, c.in_ch, kKernel, kKernel}, {c.out_ch}};
                        },
                        [](const Dense& d) -> std::vector<Shape> { return {{d.out, d.in}, {d.out}}; },
                        [](const BatchNorm& b) -> std::vector<Shape> { return {{b.ch}, {b.ch}}; },
                        [](const auto&) -> std::vector<Shape> { return {}; },
                    },
                    layer);
}

/// Gaussian(0, weight_std) weights, zero biases; batchnorm gamma 1, beta 0,
/// running mean 0, running variance 1.
inline ParamSet init_params(const NetworkSpec& net, std::uint64_t seed, double weight_std = 0.02) {
  infer_shapes(net);
  Rng rng(seed);
  ParamSet p;
  for (const auto& layer : net.layers) {
    LayerParams lp;
    const auto shapes = trainable_shapes(layer);
    if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      lp.trainable = {NdArray({bn->ch}, 1.0), NdArray({bn->ch}, 0.0)};
      lp.state = {NdArray({bn->ch}, 0.0), NdArray({bn->ch}, 1.0)};
    } else if (!shapes.empty()) {
      NdArray w(shapes[0]);
      for (auto& v : w.data) v = weight_std * gaussian(rng);
      lp.trainable = {std::move(w), NdArray(shapes[1], 0.0)};
    }
    p.layers.push_back(std::move(lp));
  }
  return p;
}

}  // namespace faultface::nn
