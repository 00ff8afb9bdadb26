#pragma once
#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "faultface/error.hpp"
#include "faultface/nn/ndarray.hpp"

namespace faultface::nn {

inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kTaps = kKernel * kKernel;

/// 3x3 convolution, zero "same" padding (stride 2 halves with ceil).
struct Conv {
  std::size_t in_ch = 1, out_ch = 1, stride = 1;
};
/// Zero-insertion upsample by 2 followed by a stride-1 3x3 convolution.
struct TConv {
  std::size_t in_ch = 1, out_ch = 1;
};
struct Dense {
  std::size_t in = 1, out = 1;
};
/// Per-channel normalization over batch (and spatial) axes; input is [C] or [C,H,W].
struct BatchNorm {
  std::size_t ch = 1;
  double momentum = 0.1;
  double eps = 1e-5;
};
enum class Act { ReLU, LeakyReLU, Tanh, Sigmoid };
struct Activation {
  Act kind = Act::ReLU;
  double alpha = 0.2;
};
/// 2x2 window, stride 2, floor on odd sizes.
struct MaxPool {};
struct Flatten {};
struct Reshape {
  Shape shape;
};

using LayerSpec = std::variant<Conv, TConv, Dense, BatchNorm, Activation, MaxPool, Flatten, Reshape>;

struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;
};

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

inline std::string act_name(Act a) {
  switch (a) {
    case Act::ReLU: return "ReLU";
    case Act::LeakyReLU: return "LeakyReLU";
    case Act::Tanh: return "Tanh";
    case Act::Sigmoid: return "Sigmoid";
  }
  return "?";
}

inline std::string layer_name(const LayerSpec& l) {
  return std::visit(Overloaded{
                        [](const Conv& c) {
                          return "Conv{" + std::to_string(c.in_ch) + "->" + std::to_string(c.out_ch) +
                                 ",s" + std::to_string(c.stride) + "}";
                        },
                        [](const TConv& c) {
                          return "TConv{" + std::to_string(c.in_ch) + "->" + std::to_string(c.out_ch) + "}";
                        },
                        [](const Dense& d) {
                          return "Dense{" + std::to_string(d.in) + "->" + std::to_string(d.out) + "}";
                        },
                        [](const BatchNorm& b) { return "BatchNorm{" + std::to_string(b.ch) + "}"; },
                        [](const Activation& a) { return act_name(a.kind); },
                        [](const MaxPool&) { return std::string("MaxPool"); },
                        [](const Flatten&) { return std::string("Flatten"); },
                        [](const Reshape& r) { return "Reshape" + to_string(r.shape); },
                    },
                    l);
}

/// Output spatial size of a 3x3 "same" convolution.
constexpr std::size_t conv_out_size(std::size_t in, std::size_t stride) { return (in + stride - 1) / stride; }

/// Leading zero padding of a 3x3 "same" convolution (the remainder goes after).
constexpr std::size_t conv_pad_before(std::size_t in, std::size_t stride) {
  const std::size_t out = conv_out_size(in, stride);
  const std::size_t needed = (out - 1) * stride + kKernel;
  return needed > in ? (needed - in) / 2 : 0;
}

inline Shape layer_output_shape(const LayerSpec& layer, const Shape& in, std::size_t index) {
  auto fail = [&](const std::string& why) -> Error {
    return numeric_error("layer " + std::to_string(index) + " (" + layer_name(layer) + "): " + why + ", input " +
                         to_string(in));
  };
  return std::visit(
      Overloaded{
          [&](const Conv& c) -> Shape {
            if (in.size() != 3 || in[0] != c.in_ch) throw fail("expects [in_ch,H,W]");
            if (c.stride != 1 && c.stride != 2) throw fail("stride must be 1 or 2");
            return {c.out_ch, conv_out_size(in[1], c.stride), conv_out_size(in[2], c.stride)};
          },
          [&](const TConv& c) -> Shape {
            if (in.size() != 3 || in[0] != c.in_ch) throw fail("expects [in_ch,H,W]");
            return {c.out_ch, 2 * in[1], 2 * in[2]};
          },
          [&](const Dense& d) -> Shape {
            if (in.size() != 1 || in[0] != d.in) throw fail("expects [in]");
            return {d.out};
          },
          [&](const BatchNorm& b) -> Shape {
            if ((in.size() != 1 && in.size() != 3) || in[0] != b.ch) throw fail("expects [ch] or [ch,H,W]");
            return in;
          },
          [&](const Activation&) -> Shape { return in; },
          [&](const MaxPool&) -> Shape {
            if (in.size() != 3 || in[1] < 2 || in[2] < 2) throw fail("expects [C,H,W] with H,W >= 2");
            return {in[0], in[1] / 2, in[2] / 2};
          },
          [&](const Flatten&) -> Shape { return {numel(in)}; },
          [&](const Reshape& r) -> Shape {
            if (numel(r.shape) != numel(in)) throw fail("element count mismatch for " + to_string(r.shape));
            return r.shape;
          },
      },
      layer);
}

/// Per-layer shapes: element 0 is the network input, element i+1 the output of layer i.
inline std::vector<Shape> infer_shapes(const NetworkSpec& net) {
  if (net.input_shape.empty() || numel(net.input_shape) == 0) throw numeric_error("network input shape is empty");
  std::vector<Shape> shapes{net.input_shape};
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    shapes.push_back(layer_output_shape(net.layers[i], shapes.back(), i));
  return shapes;
}

inline Shape output_shape(const NetworkSpec& net) { return infer_shapes(net).back(); }

template <class L>
bool is_layer(const LayerSpec& l) {
  return std::holds_alternative<L>(l);
}

}  // namespace faultface::nn
