#pragma once
#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "faultface/error.hpp"

namespace faultface {

using Complex = std::complex<double>;

/// In-place iterative radix-2 FFT. `inverse` applies the 1/N scale.
inline void fft_inplace(std::span<Complex> a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n == 0) return;
  if (!std::has_single_bit(n)) throw config_error("fft length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // twiddles evaluated directly, no recurrence
        const Complex w(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

inline std::vector<Complex> fft(std::vector<Complex> a) {
  fft_inplace(a, false);
  return a;
}

inline std::vector<Complex> ifft(std::vector<Complex> a) {
  fft_inplace(a, true);
  return a;
}

}  // namespace faultface
