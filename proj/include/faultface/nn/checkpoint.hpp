#pragma once
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "faultface/nn/layers.hpp"
#include "faultface/nn/params.hpp"

namespace faultface::nn {

// Layout (all integers and floats little-endian):
//   "FFNN" u32 version u32 layer_count
//   per layer: u32 trainable_count, u32 state_count
//     per tensor: u32 rank, rank x u64 dims, numel x f64
inline constexpr char kCheckpointMagic[4] = {'F', 'F', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto u = std::bit_cast<U>(value);
  char buf[sizeof(U)];
  for (std::size_t b = 0; b < sizeof(U); ++b) buf[b] = static_cast<char>((u >> (8 * b)) & 0xff);
  out.write(buf, sizeof(U));
}

template <class T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char buf[sizeof(U)];
  in.read(reinterpret_cast<char*>(buf), sizeof(U));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(U))) throw data_error("checkpoint truncated");
  U u = 0;
  for (std::size_t b = sizeof(U); b-- > 0;) u = (u << 8) | buf[b];
  return std::bit_cast<T>(u);
}

inline void put_tensor(std::ostream& out, const NdArray& a) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.rank()));
  for (auto d : a.shape) put_le<std::uint64_t>(out, d);
  for (double v : a.data) put_le<double>(out, v);
}

inline NdArray get_tensor(std::istream& in) {
  const auto rank = get_le<std::uint32_t>(in);
  if (rank > 8) throw data_error("checkpoint tensor rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  for (auto& d : shape) d = get_le<std::uint64_t>(in);
  if (numel(shape) > (std::size_t{1} << 32)) throw data_error("checkpoint tensor too large");
  NdArray a(shape);
  for (auto& v : a.data) v = get_le<double>(in);
  return a;
}

}  // namespace detail

inline void write_checkpoint(const ParamSet& p, std::ostream& out) {
  out.write(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.layers.size()));
  for (const auto& l : p.layers) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.trainable.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.state.size()));
    for (const auto& t : l.trainable) detail::put_tensor(out, t);
    for (const auto& t : l.state) detail::put_tensor(out, t);
  }
}

inline ParamSet read_checkpoint(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kCheckpointMagic)) throw data_error("not a checkpoint file");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw data_error("unsupported checkpoint version " + std::to_string(version));
  const auto layers = detail::get_le<std::uint32_t>(in);
  ParamSet p;
  p.layers.resize(layers);
  for (auto& l : p.layers) {
    const auto nt = detail::get_le<std::uint32_t>(in);
    const auto ns = detail::get_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < nt; ++i) l.trainable.push_back(detail::get_tensor(in));
    for (std::uint32_t i = 0; i < ns; ++i) l.state.push_back(detail::get_tensor(in));
  }
  return p;
}

inline void save_checkpoint(const ParamSet& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write checkpoint '" + path.string() + "'");
  write_checkpoint(p, out);
}

inline ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

/// Throws unless every tensor shape matches what `net` expects.
inline void check_params_match(const NetworkSpec& net, const ParamSet& p) {
  if (p.layers.size() != net.layers.size())
    throw data_error("checkpoint has " + std::to_string(p.layers.size()) + " layers, network has " +
                     std::to_string(net.layers.size()));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto shapes = trainable_shapes(net.layers[i]);
    bool ok = p.layers[i].trainable.size() == shapes.size();
    for (std::size_t k = 0; ok && k < shapes.size(); ++k) ok = p.layers[i].trainable[k].shape == shapes[k];
    if (ok && std::holds_alternative<BatchNorm>(net.layers[i]))
      ok = p.layers[i].state.size() == 2 && p.layers[i].state[0].shape == shapes[0] &&
           p.layers[i].state[1].shape == shapes[0];
    if (!ok) throw data_error("checkpoint layer " + std::to_string(i) + " does not fit " + layer_name(net.layers[i]));
  }
}

}  // namespace faultface::nn
