#pragma once
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "faultface/behavior.hpp"
#include "faultface/dataset.hpp"
#include "faultface/error.hpp"
#include "faultface/rng.hpp"

namespace faultface {

/// Six analytically distinct signal families for exercising the pipeline without lab data.
/// Each class is a dominant tone plus a weaker harmonic, a shaft-rate component and white noise.
struct SynthConfig {
  std::uint64_t seed = 0;
  double sample_rate = 12000.0;
  std::size_t windows_per_record = 8;
  double noise_std = 0.3;
  double freq_jitter = 0.03;  // relative, per record
  /// Records per class in class order; the default mirrors the CWRU split (114 records).
  std::array<std::size_t, kNumClasses> records = {4, 28, 28, 23, 15, 16};
};

/// Dominant tone (Hz) per class, spaced roughly an octave apart across the scalogram band.
inline constexpr std::array<double, kNumClasses> kSynthTones = {150.0, 400.0, 900.0, 1800.0, 3200.0, 5000.0};
inline constexpr double kShaftHz = 28.3;

inline std::string synth_record_id(BehaviorClass c, std::size_t i) {
  const auto n = std::to_string(i);
  return std::string(name_of(c)) + "_" + std::string(3 - std::min<std::size_t>(3, n.size()), '0') + n;
}

inline std::vector<VibrationRecord> generate_synthetic(const SynthConfig& cfg) {
  if (!(cfg.sample_rate > 0.0)) throw config_error("synthetic: sample_rate must be positive");
  if (cfg.windows_per_record == 0) throw config_error("synthetic: windows_per_record must be positive");
  std::vector<VibrationRecord> out;
  const std::size_t n = cfg.windows_per_record * kWindowLength;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t r = 0; r < cfg.records[c]; ++r) {
      Rng rng(derive_seed(cfg.seed, "synth", c * 1000 + r));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double f = kSynthTones[c] * (1.0 + cfg.freq_jitter * (2.0 * unit(rng) - 1.0));
      const double amp = 0.8 + 0.4 * unit(rng);
      const double ph0 = two_pi * unit(rng), ph1 = two_pi * unit(rng), ph2 = two_pi * unit(rng);
      VibrationRecord rec;
      rec.id = synth_record_id(class_at(c), r);
      rec.sample_rate = cfg.sample_rate;
      rec.label = class_at(c);
      rec.bearing_end = r % 2 == 0 ? BearingEnd::DriveEnd : BearingEnd::FanEnd;
      rec.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate;
        rec.samples[i] = amp * std::sin(two_pi * f * t + ph0) + 0.3 * amp * std::sin(two_pi * 2.0 * f * t + ph1) +
                         0.2 * std::sin(two_pi * kShaftHz * t + ph2) + cfg.noise_std * gaussian(rng);
      }
      out.push_back(std::move(rec));
    }
  return out;
}

/// Writes `<id>.f64` signals plus `manifest.csv` into `dir`; returns the manifest path.
inline std::filesystem::path write_synthetic(const SynthConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest m;
  for (const auto& rec : generate_synthetic(cfg)) {
    const auto file = rec.id + ".f64";
    save_signal_f64(dir / file, rec.samples);
    m.entries.push_back({file, rec.label, rec.sample_rate, rec.bearing_end});
  }
  const auto path = dir / "manifest.csv";
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path.string() + "'");
  write_manifest(m, out);
  return path;
}

}  // namespace faultface
