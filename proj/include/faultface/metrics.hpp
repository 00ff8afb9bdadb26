#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "faultface/behavior.hpp"
#include "faultface/error.hpp"
#include "faultface/portrait.hpp"

namespace faultface {

/// 6x6 counts; rows are the predicted ("output") class, columns the true ("target") class.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  void add(BehaviorClass predicted, BehaviorClass truth) { ++counts[index_of(predicted)][index_of(truth)]; }
  std::size_t at(BehaviorClass predicted, BehaviorClass truth) const {
    return counts[index_of(predicted)][index_of(truth)];
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& row : counts)
      for (auto v : row) t += v;
    return t;
  }
  std::size_t trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) t += counts[i][i];
    return t;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0;
  double accuracy = 0.0;       // TP / (TP + FP)
  double coverage = 0.0;       // TP / (TP + FN)
  double harmonic_mean = 0.0;  // 2AC / (A + C)
};

namespace detail {
inline double ratio_or_zero(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace detail

/// One-vs-rest indices for class `c`; every 0/0 evaluates to 0.
inline ClassMetrics class_metrics(const ConfusionMatrix& cm, BehaviorClass c) {
  const std::size_t k = index_of(c);
  ClassMetrics m;
  m.tp = cm.counts[k][k];
  for (std::size_t j = 0; j < kNumClasses; ++j) {
    if (j == k) continue;
    m.fp += cm.counts[k][j];
    m.fn += cm.counts[j][k];
  }
  const double tp = static_cast<double>(m.tp);
  m.accuracy = detail::ratio_or_zero(tp, tp + static_cast<double>(m.fp));
  m.coverage = detail::ratio_or_zero(tp, tp + static_cast<double>(m.fn));
  m.harmonic_mean = detail::ratio_or_zero(2.0 * m.accuracy * m.coverage, m.accuracy + m.coverage);
  return m;
}

struct MetricsReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  double overall_accuracy = 0.0;
};

inline MetricsReport report_all(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw data_error("confusion matrix is empty");
  MetricsReport r;
  for (std::size_t i = 0; i < kNumClasses; ++i) r.per_class[i] = class_metrics(cm, class_at(i));
  r.overall_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  return r;
}

// ---- SSIM ---------------------------------------------------------------

inline constexpr double kSsimC1 = (0.01 * 255.0) * (0.01 * 255.0);
inline constexpr double kSsimC2 = (0.03 * 255.0) * (0.03 * 255.0);

/// Whole-image SSIM with population moments over all 784 pixels.
inline double ssim(const GrayPixels& x, const GrayPixels& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cxy += dx * dy;
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  return ((2.0 * mx * my + kSsimC1) * (2.0 * cxy + kSsimC2)) / ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
}

inline double ssim(const Portrait& x, const Portrait& y) { return ssim(x.pixels, y.pixels); }

struct SsimStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double range = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t originals = 0;
  std::size_t generated = 0;
  /// values[i * generated + j] = ssim(original i, generated j)
  std::vector<double> values;
};

inline SsimStats summarize(std::vector<double> values, std::size_t originals, std::size_t generated) {
  SsimStats s;
  s.originals = originals;
  s.generated = generated;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  s.range = s.max - s.min;
  s.values = std::move(values);
  return s;
}

/// SSIM of every (original, generated) pair, aggregated in index order.
inline SsimStats ssim_distribution(const std::vector<Portrait>& originals, const std::vector<Portrait>& generated) {
  if (originals.empty() || generated.empty()) throw data_error("ssim_distribution needs non-empty lists");
  std::vector<double> values;
  values.reserve(originals.size() * generated.size());
  for (const auto& o : originals)
    for (const auto& g : generated) values.push_back(ssim(o, g));
  return summarize(std::move(values), originals.size(), generated.size());
}

// ---- CSV reports --------------------------------------------------------

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Header row of true classes; one row per predicted class.
inline void write_confusion_csv(const ConfusionMatrix& cm, std::ostream& out) {
  out << "predicted\\true";
  for (auto n : kClassNames) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    out << kClassNames[r];
    for (std::size_t c = 0; c < kNumClasses; ++c) out << ',' << cm.counts[r][c];
    out << '\n';
  }
}

inline void write_metrics_csv(const MetricsReport& r, std::ostream& out) {
  out << "class,TP,FP,FN,accuracy,coverage,harmonic_mean\n";
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    const auto& m = r.per_class[i];
    out << kClassNames[i] << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << fixed6(m.accuracy) << ','
        << fixed6(m.coverage) << ',' << fixed6(m.harmonic_mean) << '\n';
  }
}

inline void write_ssim_pairs_csv(const std::vector<Portrait>& originals, const std::vector<Portrait>& generated,
                                 const SsimStats& s, std::ostream& out) {
  out << "orig_id,gen_id,ssim\n";
  for (std::size_t i = 0; i < originals.size(); ++i)
    for (std::size_t j = 0; j < generated.size(); ++j)
      out << originals[i].source_id << '_' << originals[i].index << ',' << generated[j].source_id << '_'
          << generated[j].index << ',' << fixed6(s.values[i * generated.size() + j]) << '\n';
}

}  // namespace faultface
