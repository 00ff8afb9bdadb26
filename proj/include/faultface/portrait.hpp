#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "faultface/behavior.hpp"
#include "faultface/dataset.hpp"
#include "faultface/error.hpp"

namespace faultface {

enum class PortraitKind : int { CwtMorse = 0, Haar = 1, CMR = 2, Toeplitz = 3, Hankel = 4, Gram = 5 };

inline constexpr std::array<PortraitKind, 6> kAllKinds = {PortraitKind::CwtMorse, PortraitKind::Haar,
                                                          PortraitKind::CMR,      PortraitKind::Toeplitz,
                                                          PortraitKind::Hankel,   PortraitKind::Gram};
inline constexpr std::array<std::string_view, 6> kKindNames = {"CwtMorse", "Haar",   "CMR",
                                                               "Toeplitz", "Hankel", "Gram"};

constexpr std::string_view name_of(PortraitKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

inline std::optional<PortraitKind> parse_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return kAllKinds[i];
  return std::nullopt;
}

/// Row-major 28x28 real matrix, the pre-quantization form of every portrait.
using RealImage = std::array<double, kWindowLength>;
using GrayPixels = std::array<std::uint8_t, kWindowLength>;

struct Portrait {
  GrayPixels pixels{};
  PortraitKind kind = PortraitKind::CMR;
  BehaviorClass label = BehaviorClass::Nominal;
  std::string source_id;
  std::size_t index = 0;

  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * kSide + c]; }
  bool operator==(const Portrait&) const = default;
};

/// round(x) with ties toward +infinity.
inline double round_half_up(double x) { return std::floor(x + 0.5); }

inline std::uint8_t to_gray(double unit) {
  return static_cast<std::uint8_t>(std::clamp(round_half_up(255.0 * unit), 0.0, 255.0));
}

/// Min-max rescale to [0,255] with half-up rounding; a constant matrix is mid-gray 128.
inline GrayPixels quantize_to_gray(const RealImage& m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!std::isfinite(m[i])) throw data_error("non-finite matrix entry at index " + std::to_string(i));
  const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
  GrayPixels out;
  if (*hi == *lo) {
    out.fill(128);
    return out;
  }
  const double min = *lo, span = *hi - *lo;
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = to_gray((m[i] - min) / span);
  return out;
}

namespace detail {

inline void require_window_length(std::span<const double> norm) {
  if (norm.size() != kWindowLength)
    throw data_error("portrait input must have " + std::to_string(kWindowLength) + " samples, got " +
                     std::to_string(norm.size()));
}

/// Mean as s[0] + mean(s - s[0]): exact for constant input.
inline double mean_of(std::span<const double> s) {
  double acc = 0.0;
  for (double v : s) acc += v - s[0];
  return s[0] + acc / static_cast<double>(s.size());
}

}  // namespace detail

inline Portrait make_gray_portrait(const GrayPixels& pixels, PortraitKind kind) {
  Portrait p;
  p.pixels = pixels;
  p.kind = kind;
  return p;
}

/// Direct sample-to-pixel packing: pixel (r,c) = round(255 * norm[28r + c]).
inline Portrait cmr_portrait(std::span<const double> norm) {
  detail::require_window_length(norm);
  GrayPixels px;
  for (std::size_t i = 0; i < kWindowLength; ++i) px[i] = to_gray(norm[i]);
  return make_gray_portrait(px, PortraitKind::CMR);
}

/// 28 generator values, each the mean of 28 consecutive samples.
inline std::array<double, kSide> toeplitz_generator(std::span<const double> norm) {
  detail::require_window_length(norm);
  std::array<double, kSide> c;
  for (std::size_t k = 0; k < kSide; ++k) c[k] = detail::mean_of(norm.subspan(k * kSide, kSide));
  return c;
}

inline RealImage toeplitz_matrix(std::span<const double> norm) {
  const auto c = toeplitz_generator(norm);
  RealImage t;
  for (std::size_t i = 0; i < kSide; ++i)
    for (std::size_t j = 0; j < kSide; ++j) t[i * kSide + j] = c[i > j ? i - j : j - i];
  return t;
}

inline Portrait toeplitz_portrait(std::span<const double> norm) {
  return make_gray_portrait(quantize_to_gray(toeplitz_matrix(norm)), PortraitKind::Toeplitz);
}

inline constexpr std::size_t kHankelValues = 2 * kSide - 1;

/// 55 generator values: 54 pools of 14 samples, then one pool of the last 28.
inline std::array<double, kHankelValues> hankel_generator(std::span<const double> norm) {
  detail::require_window_length(norm);
  constexpr std::size_t pool = 14;
  std::array<double, kHankelValues> h;
  for (std::size_t k = 0; k + 1 < kHankelValues; ++k) h[k] = detail::mean_of(norm.subspan(k * pool, pool));
  h[kHankelValues - 1] = detail::mean_of(norm.subspan((kHankelValues - 1) * pool));
  return h;
}

inline RealImage hankel_matrix(std::span<const double> norm) {
  const auto h = hankel_generator(norm);
  RealImage m;
  for (std::size_t i = 0; i < kSide; ++i)
    for (std::size_t j = 0; j < kSide; ++j) m[i * kSide + j] = h[i + j];
  return m;
}

inline Portrait hankel_portrait(std::span<const double> norm) {
  return make_gray_portrait(quantize_to_gray(hankel_matrix(norm)), PortraitKind::Hankel);
}

/// G = A^T A where column k of A is the contiguous segment norm[28k .. 28k+27].
inline RealImage gram_matrix(std::span<const double> norm) {
  detail::require_window_length(norm);
  RealImage g;
  for (std::size_t i = 0; i < kSide; ++i) {
    for (std::size_t j = i; j < kSide; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < kSide; ++r) acc += norm[i * kSide + r] * norm[j * kSide + r];
      g[i * kSide + j] = acc;
      g[j * kSide + i] = acc;
    }
  }
  return g;
}

inline Portrait gram_portrait(std::span<const double> norm) {
  return make_gray_portrait(quantize_to_gray(gram_matrix(norm)), PortraitKind::Gram);
}

}  // namespace faultface
