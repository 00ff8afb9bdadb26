#pragma once
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "faultface/adversarial.hpp"
#include "faultface/classifier.hpp"
#include "faultface/error.hpp"
#include "faultface/portrait.hpp"

namespace faultface {

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "faultface_out";
  PortraitKind kind = PortraitKind::CwtMorse;
  std::size_t stride = kWindowLength;
  /// Windows taken per record (0 = all). Window 0 of every record is held out as the "original".
  std::size_t windows_per_record = 0;
  GanFlavor flavor = GanFlavor::DCGAN;
  std::uint64_t seed = 0;
  AdvConfig gan;
  std::size_t target_per_class = 1000;
  ClassifierConfig cnn;
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string real_text(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

class IniReader {
 public:
  explicit IniReader(const boost::property_tree::ptree& t) : tree_(t) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
    const auto s = tree_.get_child_optional(section);
    if (!s) return std::nullopt;
    const auto v = s->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return trim(*v);
  }

  void size(const std::string& sec, const std::string& key, std::size_t& out) {
    if (auto v = raw(sec, key)) out = parse_size(sec, key, *v);
  }
  void u64(const std::string& sec, const std::string& key, std::uint64_t& out) {
    if (auto v = raw(sec, key)) out = parse_size(sec, key, *v);
  }
  void real(const std::string& sec, const std::string& key, double& out) {
    if (auto v = raw(sec, key)) out = parse_real(sec, key, *v);
  }
  void sizes(const std::string& sec, const std::string& key, std::vector<std::size_t>& out) {
    if (auto v = raw(sec, key)) {
      out.clear();
      for (const auto& part : split(*v, ',')) out.push_back(parse_size(sec, key, trim(part)));
    }
  }
  void path(const std::string& sec, const std::string& key, std::filesystem::path& out) {
    if (auto v = raw(sec, key)) out = *v;
  }

  /// Every key present in the file must have been consumed.
  void reject_unknown() const {
    for (const auto& [sec, body] : tree_) {
      if (body.empty() && !body.data().empty()) throw config_error("config: key '" + sec + "' outside any section");
      for (const auto& [key, _] : body)
        if (!used_.count(sec + "." + key)) throw config_error("config: unknown key [" + sec + "] " + key);
    }
  }

  static std::size_t parse_size(const std::string& sec, const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long out = 0;
    try {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw config_error("config: [" + sec + "] " + key + " = '" + v + "' is not a nonnegative integer");
    return static_cast<std::size_t>(out);
  }
  static double parse_real(const std::string& sec, const std::string& key, const std::string& v) {
    const auto d = parse_double(v);
    if (!d || !std::isfinite(*d)) throw config_error("config: [" + sec + "] " + key + " = '" + v + "' is not a number");
    return *d;
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Derived per-component seeds, so the one global seed reaches every stochastic stage.
inline std::uint64_t gan_seed(const ExperimentConfig& c, BehaviorClass cls) {
  return derive_seed(c.seed, "gan", index_of(cls));
}
inline std::uint64_t balance_seed(const ExperimentConfig& c) { return derive_seed(c.seed, "balance"); }
inline std::uint64_t cnn_seed(const ExperimentConfig& c) { return derive_seed(c.seed, "cnn"); }

inline void validate(const ExperimentConfig& c) {
  if (c.stride == 0) throw config_error("config: [experiment] stride must be positive");
  if (c.target_per_class == 0) throw config_error("config: [balance] target_per_class must be positive");
  validate(c.gan);
  validate(c.cnn);
  if (c.cnn.train_per_class + c.cnn.val_per_class > c.target_per_class)
    throw config_error("config: [cnn] train_per_class + val_per_class exceeds [balance] target_per_class");
}

/// Parses the INI text. Relative paths are resolved against `base_dir`.
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  detail::IniReader r(tree);
  ExperimentConfig c;
  const std::string ex = "experiment", g = "gan", b = "balance", n = "cnn";
  r.path(ex, "manifest", c.manifest);
  r.path(ex, "output_dir", c.output_dir);
  if (auto v = r.raw(ex, "kind")) {
    const auto k = parse_kind(*v);
    if (!k) throw config_error("config: [experiment] kind '" + *v + "' is not a portrait kind");
    c.kind = *k;
  }
  r.size(ex, "stride", c.stride);
  r.size(ex, "windows_per_record", c.windows_per_record);
  if (auto v = r.raw(ex, "flavor")) {
    const auto f = parse_flavor(*v);
    if (!f) throw config_error("config: [experiment] flavor '" + *v + "' is not DCGAN or MlpGAN");
    c.flavor = *f;
  }
  r.u64(ex, "seed", c.seed);

  r.real(g, "learning_rate", c.gan.learning_rate);
  r.size(g, "iterations", c.gan.iterations);
  r.size(g, "batch_size", c.gan.batch_size);
  r.size(g, "k", c.gan.k);
  r.size(g, "noise_dim", c.gan.noise_dim);
  if (auto v = r.raw(g, "lr_decay"); v && *v != "none") c.gan.lr_decay = detail::IniReader::parse_real(g, "lr_decay", *v);
  r.size(g, "lr_decay_interval", c.gan.lr_decay_interval);
  r.real(g, "beta1", c.gan.beta1);
  r.real(g, "beta2", c.gan.beta2);
  r.real(g, "leaky_alpha", c.gan.leaky_alpha);
  r.real(g, "init_std", c.gan.init_std);
  r.size(g, "checkpoint_interval", c.gan.checkpoint_interval);
  r.sizes(g, "gen_widths", c.gan.gen_widths);
  r.sizes(g, "disc_widths", c.gan.disc_widths);
  r.sizes(g, "mlp_gen_widths", c.gan.mlp_gen_widths);
  r.sizes(g, "mlp_disc_widths", c.gan.mlp_disc_widths);

  r.size(b, "target_per_class", c.target_per_class);

  r.size(n, "epochs", c.cnn.epochs);
  r.real(n, "learning_rate", c.cnn.learning_rate);
  r.size(n, "batch_size", c.cnn.batch_size);
  r.size(n, "train_per_class", c.cnn.train_per_class);
  r.size(n, "val_per_class", c.cnn.val_per_class);
  r.real(n, "beta1", c.cnn.beta1);
  r.real(n, "beta2", c.cnn.beta2);
  r.sizes(n, "widths", c.cnn.widths);
  r.reject_unknown();

  if (!c.manifest.empty() && c.manifest.is_relative() && !base_dir.empty()) c.manifest = base_dir / c.manifest;
  if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;
  c.gan.seed = c.seed;
  c.cnn.seed = cnn_seed(c);
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config '" + path.string() + "'");
  return parse_config(in, path.parent_path());
}

/// Canonical INI echo of every setting; parse_config(write_config(c)) reproduces c.
inline void write_config(const ExperimentConfig& c, std::ostream& out) {
  using detail::join_sizes;
  using detail::real_text;
  out << "[experiment]\n"
      << "manifest = " << c.manifest.string() << '\n'
      << "output_dir = " << c.output_dir.string() << '\n'
      << "kind = " << name_of(c.kind) << '\n'
      << "stride = " << c.stride << '\n'
      << "windows_per_record = " << c.windows_per_record << '\n'
      << "flavor = " << name_of(c.flavor) << '\n'
      << "seed = " << c.seed << "\n\n"
      << "[gan]\n"
      << "learning_rate = " << real_text(c.gan.learning_rate) << '\n'
      << "iterations = " << c.gan.iterations << '\n'
      << "batch_size = " << c.gan.batch_size << '\n'
      << "k = " << c.gan.k << '\n'
      << "noise_dim = " << c.gan.noise_dim << '\n'
      << "lr_decay = " << (c.gan.lr_decay ? real_text(*c.gan.lr_decay) : "none") << '\n'
      << "lr_decay_interval = " << c.gan.lr_decay_interval << '\n'
      << "beta1 = " << real_text(c.gan.beta1) << '\n'
      << "beta2 = " << real_text(c.gan.beta2) << '\n'
      << "leaky_alpha = " << real_text(c.gan.leaky_alpha) << '\n'
      << "init_std = " << real_text(c.gan.init_std) << '\n'
      << "checkpoint_interval = " << c.gan.checkpoint_interval << '\n'
      << "gen_widths = " << join_sizes(c.gan.gen_widths) << '\n'
      << "disc_widths = " << join_sizes(c.gan.disc_widths) << '\n'
      << "mlp_gen_widths = " << join_sizes(c.gan.mlp_gen_widths) << '\n'
      << "mlp_disc_widths = " << join_sizes(c.gan.mlp_disc_widths) << "\n\n"
      << "[balance]\n"
      << "target_per_class = " << c.target_per_class << "\n\n"
      << "[cnn]\n"
      << "epochs = " << c.cnn.epochs << '\n'
      << "learning_rate = " << real_text(c.cnn.learning_rate) << '\n'
      << "batch_size = " << c.cnn.batch_size << '\n'
      << "train_per_class = " << c.cnn.train_per_class << '\n'
      << "val_per_class = " << c.cnn.val_per_class << '\n'
      << "beta1 = " << real_text(c.cnn.beta1) << '\n'
      << "beta2 = " << real_text(c.cnn.beta2) << '\n'
      << "widths = " << join_sizes(c.cnn.widths) << '\n';
}

/// Key reference for --help: section, key, default.
inline std::string config_reference() {
  std::ostringstream o;
  write_config(ExperimentConfig{}, o);
  return o.str();
}

}  // namespace faultface
