#pragma once
#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "faultface/behavior.hpp"
#include "faultface/error.hpp"

namespace faultface {

/// Side of the 28x28 portrait; a window holds exactly one sample per pixel.
inline constexpr std::size_t kSide = 28;
inline constexpr std::size_t kWindowLength = kSide * kSide;

struct VibrationRecord {
  std::string id;
  std::vector<double> samples;
  double sample_rate = 12000.0;
  BehaviorClass label = BehaviorClass::Nominal;
  BearingEnd bearing_end = BearingEnd::DriveEnd;
};

struct Window {
  std::array<double, kWindowLength> values{};
  std::string source_id;
  std::size_t index = 0;
  BehaviorClass label = BehaviorClass::Nominal;
};

struct ManifestEntry {
  std::string path;
  BehaviorClass label = BehaviorClass::Nominal;
  double sample_rate = 12000.0;
  BearingEnd bearing_end = BearingEnd::DriveEnd;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses `path,label,sample_rate,bearing_end` lines. Blank lines are skipped;
/// errors name the 1-based line number and the offending token.
inline Manifest parse_manifest(std::istream& in, const std::string& origin = "<manifest>") {
  Manifest m;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto where = origin + ":" + std::to_string(lineno);
    auto fields = detail::split(line, ',');
    if (fields.size() != 4)
      throw data_error(where + ": expected 4 comma-separated fields, got " + std::to_string(fields.size()));
    ManifestEntry e;
    e.path = fields[0];
    if (e.path.empty()) throw data_error(where + ": empty path");
    auto label = parse_class(fields[1]);
    if (!label) throw data_error(where + ": unknown label '" + fields[1] + "'");
    e.label = *label;
    auto rate = detail::parse_double(fields[2]);
    if (!rate || !(*rate > 0.0) || !std::isfinite(*rate))
      throw data_error(where + ": invalid sample rate '" + fields[2] + "'");
    e.sample_rate = *rate;
    auto end = parse_bearing_end(fields[3]);
    if (!end) throw data_error(where + ": unknown bearing end '" + fields[3] + "'");
    e.bearing_end = *end;
    if (!seen.insert(e.path).second) throw data_error(where + ": duplicate path '" + e.path + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest '" + path.string() + "'");
  return parse_manifest(in, path.string());
}

inline void write_manifest(const Manifest& m, std::ostream& out) {
  for (const auto& e : m.entries) {
    std::ostringstream rate;
    rate.precision(17);
    rate << e.sample_rate;
    out << e.path << ',' << name_of(e.label) << ',' << rate.str() << ',' << name_of(e.bearing_end) << '\n';
  }
}

/// Reads a signal file: raw little-endian float64 when the name ends in
/// `.f64`, otherwise headerless text with one real per line.
inline std::vector<double> load_signal(const std::filesystem::path& path) {
  std::vector<double> out;
  if (path.extension() == ".f64") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open signal '" + path.string() + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 8 != 0) throw data_error("signal '" + path.string() + "' is not a multiple of 8 bytes");
    out.resize(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint64_t u = 0;
      for (int b = 7; b >= 0; --b) u = (u << 8) | static_cast<unsigned char>(bytes[i * 8 + b]);
      out[i] = std::bit_cast<double>(u);
    }
    return out;
  }
  std::ifstream in(path);
  if (!in) throw data_error("cannot open signal '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = detail::trim(line);
    if (t.empty()) continue;
    auto v = detail::parse_double(t);
    if (!v) throw data_error(path.string() + ":" + std::to_string(lineno) + ": not a number '" + t + "'");
    out.push_back(*v);
  }
  return out;
}

inline void save_signal_f64(const std::filesystem::path& path, const std::vector<double>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write signal '" + path.string() + "'");
  for (double v : samples) {
    auto u = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((u >> (8 * b)) & 0xff);
    out.write(buf, 8);
  }
}

/// Loads every record named in the manifest; relative paths resolve against `base_dir`.
inline std::vector<VibrationRecord> load_records(const Manifest& m, const std::filesystem::path& base_dir) {
  std::vector<VibrationRecord> records;
  records.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    std::filesystem::path p(e.path);
    if (p.is_relative()) p = base_dir / p;
    VibrationRecord r;
    r.id = std::filesystem::path(e.path).stem().string();
    r.samples = load_signal(p);
    if (r.samples.empty()) throw data_error("signal '" + p.string() + "' is empty");
    r.sample_rate = e.sample_rate;
    r.label = e.label;
    r.bearing_end = e.bearing_end;
    records.push_back(std::move(r));
  }
  return records;
}

/// Complete windows at offsets 0, stride, 2*stride, ...; short records yield none.
inline std::vector<Window> segment_record(const VibrationRecord& record, std::size_t stride = kWindowLength) {
  if (stride == 0) throw config_error("segment stride must be >= 1");
  std::vector<Window> out;
  const auto n = record.samples.size();
  if (n < kWindowLength) return out;
  const std::size_t count = (n - kWindowLength) / stride + 1;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Window w;
    std::copy_n(record.samples.begin() + static_cast<std::ptrdiff_t>(i * stride), kWindowLength, w.values.begin());
    w.source_id = record.id;
    w.index = i;
    w.label = record.label;
    out.push_back(std::move(w));
  }
  return out;
}

using NormalizedWindow = std::array<double, kWindowLength>;

/// Min-max rescale to [0,1]; a constant window maps to 0.5 everywhere.
inline NormalizedWindow normalize_values(const std::array<double, kWindowLength>& values) {
  for (std::size_t i = 0; i < kWindowLength; ++i)
    if (!std::isfinite(values[i])) throw data_error("non-finite sample at index " + std::to_string(i));
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo, max = *hi;
  NormalizedWindow out;
  if (max == min) {
    out.fill(0.5);
    return out;
  }
  const double span = max - min;
  for (std::size_t i = 0; i < kWindowLength; ++i) out[i] = (values[i] - min) / span;
  return out;
}

inline NormalizedWindow normalize_window(const Window& window) { return normalize_values(window.values); }

struct ClassHistogram {
  std::array<std::size_t, kNumClasses> counts{};

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  /// max/min over classes; infinite when some class is empty but others are not, 0 for an empty set.
  double imbalance_ratio() const {
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*hi == 0) return 0.0;
    if (*lo == 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(*hi) / static_cast<double>(*lo);
  }
};

inline ClassHistogram class_histogram(const Manifest& manifest) {
  ClassHistogram h;
  for (const auto& e : manifest.entries) ++h.counts[index_of(e.label)];
  return h;
}

}  // namespace faultface
