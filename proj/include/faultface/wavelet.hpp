#pragma once
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "faultface/dataset.hpp"
#include "faultface/fft.hpp"
#include "faultface/portrait.hpp"

namespace faultface {

/// Generalized Morse wavelet settings for the CWT portrait.
struct MorseParams {
  double gamma = 3.0;
  double beta = 20.0;
  /// Coarsest center frequency completes this many cycles inside one window.
  double min_cycles = 4.0;
};

inline constexpr std::size_t kFftLength = 1024;
inline constexpr std::size_t kScales = kSide;

/// Radian frequency (per sample) at which the unit-scale wavelet peaks.
inline double morse_peak_frequency(const MorseParams& p) { return std::pow(p.beta / p.gamma, 1.0 / p.gamma); }

/// Frequency response of the analytic Morse wavelet, peak value 2.
inline double morse_response(double omega, const MorseParams& p) {
  if (omega <= 0.0) return 0.0;
  const double amp = 2.0 * std::pow(std::numbers::e * p.gamma / p.beta, p.beta / p.gamma);
  return amp * std::exp(p.beta * std::log(omega) - std::pow(omega, p.gamma));
}

/// Center frequencies in cycles/sample, log-spaced, coarse (row 0) to fine (Nyquist, last row).
inline std::vector<double> morse_center_frequencies(const MorseParams& p) {
  const double f_lo = p.min_cycles / static_cast<double>(kWindowLength);
  const double f_hi = 0.5;
  std::vector<double> f(kScales);
  for (std::size_t r = 0; r < kScales; ++r)
    f[r] = f_lo * std::pow(f_hi / f_lo, static_cast<double>(r) / static_cast<double>(kScales - 1));
  return f;
}

/// Scale s such that the scaled wavelet peaks at frequency f (cycles/sample).
inline std::vector<double> morse_scales(const MorseParams& p) {
  const double wp = morse_peak_frequency(p);
  auto f = morse_center_frequencies(p);
  std::vector<double> s(f.size());
  for (std::size_t r = 0; r < f.size(); ++r) s[r] = wp / (2.0 * std::numbers::pi * f[r]);
  return s;
}

/// Angular frequency of DFT bin k on the padded grid; bins above Nyquist are negative.
inline double bin_omega(std::size_t k, std::size_t n) {
  const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
  return k <= n / 2 ? w : w - 2.0 * std::numbers::pi;
}

/// |CWT| with shape [kScales][784], rows coarse to fine. The window is zero-padded to 1024
/// and the valid first 784 columns are kept.
inline std::vector<std::vector<double>> morse_scalogram(std::span<const double> norm, const MorseParams& p = {}) {
  detail::require_window_length(norm);
  std::vector<Complex> spectrum(kFftLength, Complex(0.0, 0.0));
  for (std::size_t i = 0; i < kWindowLength; ++i) spectrum[i] = norm[i];
  fft_inplace(spectrum);
  const auto scales = morse_scales(p);
  std::vector<std::vector<double>> out(kScales, std::vector<double>(kWindowLength));
  std::vector<Complex> work(kFftLength);
  for (std::size_t r = 0; r < kScales; ++r) {
    for (std::size_t k = 0; k < kFftLength; ++k)
      work[k] = spectrum[k] * morse_response(scales[r] * bin_omega(k, kFftLength), p);
    fft_inplace(work, true);
    for (std::size_t t = 0; t < kWindowLength; ++t) out[r][t] = std::abs(work[t]);
  }
  return out;
}

/// Haar widths in samples, even, from 784 (row 0) down to 2 (last row), geometrically spaced.
inline std::vector<std::size_t> haar_widths() {
  std::vector<std::size_t> w(kScales);
  const double ratio = static_cast<double>(kWindowLength) / 2.0;
  for (std::size_t r = 0; r < kScales; ++r) {
    const double e = static_cast<double>(kScales - 1 - r) / static_cast<double>(kScales - 1);
    const double width = 2.0 * std::pow(ratio, e);
    w[r] = std::max<std::size_t>(2, 2 * static_cast<std::size_t>(round_half_up(width / 2.0)));
  }
  return w;
}

/// Half-sample symmetric extension of x to index i (|overhang| <= x.size()).
inline double symmetric_at(std::span<const double> x, std::ptrdiff_t i) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (i < 0) i = -i - 1;
  if (i >= n) i = 2 * n - i - 1;
  return x[static_cast<std::size_t>(i)];
}

/// Haar response at every time index for every width: c[n] = (sum of the first half minus sum
/// of the second half of the w-sample window starting at n - w/2) / sqrt(w).
inline std::vector<std::vector<double>> haar_scalogram(std::span<const double> norm) {
  detail::require_window_length(norm);
  const auto widths = haar_widths();
  std::vector<std::vector<double>> out(kScales, std::vector<double>(kWindowLength));
  for (std::size_t r = 0; r < kScales; ++r) {
    const auto w = static_cast<std::ptrdiff_t>(widths[r]);
    const auto half = w / 2;
    const double scale = 1.0 / std::sqrt(static_cast<double>(w));
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(kWindowLength); ++n) {
      double first = 0.0, second = 0.0;
      for (std::ptrdiff_t t = 0; t < half; ++t) first += symmetric_at(norm, n - half + t);
      for (std::ptrdiff_t t = 0; t < half; ++t) second += symmetric_at(norm, n + t);
      out[r][static_cast<std::size_t>(n)] = std::abs(first - second) * scale;
    }
  }
  return out;
}

/// Averages 28 consecutive time columns into one, giving the 28x28 scale-by-time image.
inline RealImage pool_scalogram(const std::vector<std::vector<double>>& s) {
  RealImage img;
  for (std::size_t r = 0; r < kScales; ++r)
    for (std::size_t c = 0; c < kSide; ++c)
      img[r * kSide + c] = detail::mean_of(std::span<const double>(s[r]).subspan(c * kSide, kSide));
  return img;
}

inline Portrait cwt_morse_portrait(std::span<const double> norm, double sample_rate, const MorseParams& p = {}) {
  if (!(sample_rate > 0.0)) throw data_error("sample rate must be positive");
  return make_gray_portrait(quantize_to_gray(pool_scalogram(morse_scalogram(norm, p))), PortraitKind::CwtMorse);
}

inline Portrait haar_portrait(std::span<const double> norm) {
  return make_gray_portrait(quantize_to_gray(pool_scalogram(haar_scalogram(norm))), PortraitKind::Haar);
}

/// Normalizes the window and applies the chosen transform; label, source id and index carry through.
inline Portrait make_portrait(PortraitKind kind, const Window& window, double sample_rate, const MorseParams& p = {}) {
  const auto norm = normalize_window(window);
  const std::span<const double> s(norm);
  Portrait out;
  switch (kind) {
    case PortraitKind::CwtMorse: out = cwt_morse_portrait(s, sample_rate, p); break;
    case PortraitKind::Haar: out = haar_portrait(s); break;
    case PortraitKind::CMR: out = cmr_portrait(s); break;
    case PortraitKind::Toeplitz: out = toeplitz_portrait(s); break;
    case PortraitKind::Hankel: out = hankel_portrait(s); break;
    case PortraitKind::Gram: out = gram_portrait(s); break;
  }
  out.label = window.label;
  out.source_id = window.source_id;
  out.index = window.index;
  return out;
}

}  // namespace faultface
