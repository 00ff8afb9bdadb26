#pragma once
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "faultface/adversarial.hpp"
#include "faultface/classifier.hpp"
#include "faultface/config.hpp"
#include "faultface/dataset.hpp"
#include "faultface/metrics.hpp"
#include "faultface/pgm.hpp"
#include "faultface/wavelet.hpp"
#include "json.hpp"

namespace faultface {

namespace fs = std::filesystem;

using Logger = std::function<void(const std::string&)>;

inline Logger stderr_logger() {
  return [](const std::string& line) { std::clog << "[faultface] " << line << '\n'; };
}
inline Logger quiet_logger() {
  return [](const std::string&) {};
}

/// Worker limit for per-class GAN training; FAULTFACE_WORKERS, default 1.
inline std::size_t worker_count() {
  const char* v = std::getenv("FAULTFACE_WORKERS");
  if (!v || !*v) return 1;
  try {
    const auto n = std::stoul(v);
    if (n == 0) throw config_error("FAULTFACE_WORKERS must be at least 1");
    return n;
  } catch (const std::logic_error&) {
    throw config_error(std::string("FAULTFACE_WORKERS is not a number: '") + v + "'");
  }
}

// ---- files --------------------------------------------------------------

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot hash '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw data_error("sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

template <class Fn>
inline fs::path write_text(const fs::path& path, Fn&& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path.string() + "'");
  body(out);
  if (!out) throw data_error("write failed for '" + path.string() + "'");
  return path;
}

// ---- stages ---------------------------------------------------------------

struct IngestResult {
  Manifest manifest;
  std::vector<VibrationRecord> records;
  ClassHistogram histogram;
};

inline void write_histogram_csv(const ClassHistogram& h, std::ostream& out) {
  out << "class,count\n";
  for (std::size_t i = 0; i < kNumClasses; ++i) out << kClassNames[i] << ',' << h.counts[i] << '\n';
  out << "total," << h.total() << '\n';
}

inline IngestResult stage_ingest(const fs::path& manifest, const fs::path& out_dir, const Logger& log) {
  IngestResult r;
  r.manifest = load_manifest(manifest);
  if (r.manifest.entries.empty()) throw data_error("manifest '" + manifest.string() + "' has no records");
  r.records = load_records(r.manifest, manifest.parent_path());
  r.histogram = class_histogram(r.manifest);
  log("ingest: " + std::to_string(r.records.size()) + " records, imbalance ratio " + fixed6(r.histogram.imbalance_ratio()));
  log("wrote " + write_text(out_dir / "ingest" / "histogram.csv", [&](std::ostream& o) {
                   write_histogram_csv(r.histogram, o);
                 }).string());
  return r;
}

/// Window 0 of every record is the held-out "original"; later windows feed the GANs.
struct PortraitSets {
  std::vector<Portrait> train;
  std::vector<Portrait> originals;
};

inline PortraitSets make_portrait_sets(const std::vector<VibrationRecord>& records, PortraitKind kind, std::size_t stride,
                                       std::size_t windows_per_record) {
  PortraitSets s;
  for (const auto& rec : records) {
    auto windows = segment_record(rec, stride);
    if (windows.empty()) continue;
    if (windows_per_record && windows.size() > windows_per_record) windows.resize(windows_per_record);
    for (const auto& w : windows) {
      auto p = make_portrait(kind, w, rec.sample_rate);
      (w.index == 0 ? s.originals : s.train).push_back(std::move(p));
    }
  }
  return s;
}

inline PortraitSets stage_portraits(const std::vector<VibrationRecord>& records, const ExperimentConfig& cfg,
                                    const fs::path& out_dir, const Logger& log) {
  auto s = make_portrait_sets(records, cfg.kind, cfg.stride, cfg.windows_per_record);
  if (s.originals.empty()) throw data_error("no record is long enough for one 784-sample window");
  for (auto [sub, set] : {std::pair{"train", &s.train}, std::pair{"original", &s.originals}}) {
    const auto dir = out_dir / "portraits" / sub;
    fs::create_directories(dir);
    for (const auto& p : *set) save_portrait(p, dir);
    log("wrote " + std::to_string(set->size()) + " portraits to " + dir.string());
  }
  return s;
}

inline std::vector<Portrait> of_class(const std::vector<Portrait>& ps, BehaviorClass c) {
  std::vector<Portrait> out;
  for (const auto& p : ps)
    if (p.label == c) out.push_back(p);
  return out;
}

inline fs::path gan_stem(const fs::path& gan_dir, BehaviorClass c) { return gan_dir / std::string(name_of(c)); }

struct GanOutcome {
  GanModel model;
  std::vector<LossRecord> history;
};

/// Trains one GAN per class (up to `workers` at a time) and writes checkpoints and loss histories.
/// Each class has its own derived seed, so results do not depend on the worker count.
inline std::map<BehaviorClass, GanOutcome> stage_train_gans(const std::vector<Portrait>& train, const ExperimentConfig& cfg,
                                                            const fs::path& gan_dir, std::size_t workers,
                                                            const Logger& log) {
  fs::create_directories(gan_dir);
  std::array<std::vector<Portrait>, kNumClasses> data;
  for (auto c : kAllClasses) {
    data[index_of(c)] = of_class(train, c);
    if (data[index_of(c)].empty())
      throw data_error("no training portraits for class " + std::string(name_of(c)) +
                       " (window 0 of each record is held out; records need at least two windows)");
  }
  std::array<GanOutcome, kNumClasses> results;
  std::array<std::exception_ptr, kNumClasses> errors{};
  std::mutex log_mutex;
  auto run = [&](std::size_t i) {
    try {
      const auto c = class_at(i);
      auto acfg = cfg.gan;
      acfg.seed = gan_seed(cfg, c);
      const auto t0 = std::chrono::steady_clock::now();
      auto r = train_adversarial(build_gan(cfg.flavor, acfg), data[i], acfg, [&](const GanModel& m) {
        save_gan(m, acfg, gan_dir / (std::string(name_of(c)) + "_iter" + std::to_string(m.iteration)));
      });
      save_gan(r.model, acfg, gan_stem(gan_dir, c));
      write_text(gan_dir / (std::string(name_of(c)) + "_loss.csv"), [&](std::ostream& o) { write_loss_csv(r.history, o); });
      results[i] = {std::move(r.model), std::move(r.history)};
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard lock(log_mutex);
      log("trained " + std::string(name_of(cfg.flavor)) + " for " + std::string(name_of(c)) + " on " +
          std::to_string(data[i].size()) + " portraits in " + std::to_string(static_cast<long>(secs)) + " s; wrote " +
          gan_stem(gan_dir, c).string() + ".{gen.ffnn,disc.ffnn,json}");
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t n = std::clamp<std::size_t>(workers, 1, kNumClasses);
  if (n == 1) {
    for (std::size_t i = 0; i < kNumClasses; ++i) run(i);
  } else {
    std::size_t next = 0;
    std::mutex next_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(next_mutex);
            if (next == kNumClasses) return;
            i = next++;
          }
          run(i);
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::map<BehaviorClass, GanOutcome> out;
  for (std::size_t i = 0; i < kNumClasses; ++i) out.emplace(class_at(i), std::move(results[i]));
  return out;
}

inline std::map<BehaviorClass, GanModel> load_gans(const fs::path& gan_dir) {
  std::map<BehaviorClass, GanModel> out;
  for (auto c : kAllClasses) out.emplace(c, load_gan(gan_stem(gan_dir, c)));
  return out;
}

inline BalancedSet stage_balance(const std::map<BehaviorClass, GanModel>& models, std::size_t target, std::uint64_t seed,
                                 const fs::path& out_dir, const Logger& log) {
  std::map<BehaviorClass, std::string> ids;
  for (const auto& [c, m] : models)
    ids[c] = std::string(name_of(c)) + "@" + std::to_string(m.iteration);
  auto set = balance_dataset(models, target, seed, ids);
  const auto dir = out_dir / "balanced";
  fs::create_directories(dir);
  for (const auto& p : set.portraits) save_portrait(p, dir);
  write_text(dir / "provenance.csv", [&](std::ostream& o) { write_provenance_csv(set.provenance, o); });
  log("wrote " + std::to_string(set.portraits.size()) + " balanced portraits and provenance.csv to " + dir.string());
  return set;
}

using SsimReport = std::map<BehaviorClass, SsimStats>;

inline void write_ssim_summary_csv(const SsimReport& r, std::ostream& out) {
  out << "class,mean,std,range,pairs\n";
  for (const auto& [c, s] : r)
    out << name_of(c) << ',' << fixed6(s.mean) << ',' << fixed6(s.std) << ',' << fixed6(s.range) << ','
        << s.values.size() << '\n';
}

/// Per class: every original against every generated portrait of that class.
inline SsimReport stage_ssim(const std::vector<Portrait>& originals, const std::vector<Portrait>& generated,
                             const fs::path& out_dir, const Logger& log) {
  SsimReport r;
  const auto dir = out_dir / "ssim";
  for (auto c : kAllClasses) {
    const auto o = of_class(originals, c), g = of_class(generated, c);
    if (o.empty() || g.empty()) continue;
    const auto s = ssim_distribution(o, g);
    write_text(dir / (std::string(name_of(c)) + "_pairs.csv"), [&](std::ostream& out) { write_ssim_pairs_csv(o, g, s, out); });
    r.emplace(c, s);
  }
  if (r.empty()) throw data_error("ssim-report: no class has both original and generated portraits");
  log("wrote " + write_text(dir / "summary.csv", [&](std::ostream& out) { write_ssim_summary_csv(r, out); }).string());
  return r;
}

inline ClassifierResult stage_train_cnn(const std::vector<Portrait>& data, const ClassifierConfig& cfg, PortraitKind kind,
                                        const fs::path& out_dir, const Logger& log) {
  const auto dir = out_dir / "cnn";
  fs::create_directories(dir);
  auto r = train_cnn(build_cnn(cfg), data, cfg);
  save_cnn(r.net, cfg, kind, dir / "model");
  write_text(dir / "history.csv", [&](std::ostream& o) { write_history_csv(r.history, o); });
  log("trained CNN for " + std::to_string(cfg.epochs) + " epochs; wrote " + (dir / "model").string() +
      ".{ffnn,json} and history.csv");
  return r;
}

inline MetricsReport write_evaluation(const ConfusionMatrix& cm, const fs::path& dir, const std::string& name,
                                      const Logger& log) {
  write_text(dir / (name + "_confusion.csv"), [&](std::ostream& o) { write_confusion_csv(cm, o); });
  const auto report = report_all(cm);
  write_text(dir / (name + "_metrics.csv"), [&](std::ostream& o) { write_metrics_csv(report, o); });
  log(name + " accuracy " + fixed6(report.overall_accuracy) + " over " + std::to_string(cm.total()) +
      " portraits; wrote " + (dir / (name + "_{confusion,metrics}.csv")).string());
  return report;
}

// ---- summary --------------------------------------------------------------

struct StageStatus {
  std::string name;
  std::string status = "pending";  // pending | ok | failed
  std::string detail;
};

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"ingest", "portrait", "train-gan", "balance",
                                                 "ssim-report", "train-cnn", "evaluate"};
  return names;
}

struct RunSummary {
  std::vector<StageStatus> stages;
  std::optional<MetricsReport> validation;
  std::optional<MetricsReport> original;
  SsimReport ssim;
  std::map<BehaviorClass, LossRecord> final_losses;
};

/// Key/value digest of a run; contains no paths or times so repeated runs compare byte for byte.
inline void write_summary_csv(const RunSummary& s, std::ostream& out) {
  out << "metric,value\n";
  if (s.validation) out << "validation_accuracy," << fixed6(s.validation->overall_accuracy) << '\n';
  if (s.original) out << "original_accuracy," << fixed6(s.original->overall_accuracy) << '\n';
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    const auto c = class_at(i);
    const std::string n(name_of(c));
    if (auto it = s.final_losses.find(c); it != s.final_losses.end())
      out << "gan_d_loss_" << n << ',' << fixed6(it->second.d_loss) << '\n'
          << "gan_g_loss_" << n << ',' << fixed6(it->second.g_loss) << '\n';
    if (auto it = s.ssim.find(c); it != s.ssim.end())
      out << "ssim_mean_" << n << ',' << fixed6(it->second.mean) << '\n'
          << "ssim_std_" << n << ',' << fixed6(it->second.std) << '\n'
          << "ssim_range_" << n << ',' << fixed6(it->second.range) << '\n';
    for (const auto& [tag, rep] : {std::pair{"validation", &s.validation}, std::pair{"original", &s.original}})
      if (*rep) {
        const auto& m = (*rep)->per_class[i];
        out << tag << "_A_" << n << ',' << fixed6(m.accuracy) << '\n'
            << tag << "_C_" << n << ',' << fixed6(m.coverage) << '\n'
            << tag << "_F_" << n << ',' << fixed6(m.harmonic_mean) << '\n';
      }
  }
}

inline nlohmann::ordered_json metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["overall_accuracy"] = r.overall_accuracy;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    const auto& m = r.per_class[i];
    j["per_class"][std::string(kClassNames[i])] = {
        {"TP", m.tp}, {"FP", m.fp}, {"FN", m.fn}, {"accuracy", m.accuracy}, {"coverage", m.coverage},
        {"harmonic_mean", m.harmonic_mean}};
  }
  return j;
}

/// Relative path and SHA-256 of every file under `root` except the summary itself, sorted by path.
inline nlohmann::ordered_json artifact_inventory(const fs::path& root) {
  std::vector<fs::path> files;
  if (fs::is_directory(root))
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() != "summary.json") files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  auto arr = nlohmann::ordered_json::array();
  for (const auto& f : files) arr.push_back({{"path", f.generic_string()}, {"sha256", sha256_file(root / f)}});
  return arr;
}

inline void write_summary(const RunSummary& s, const ExperimentConfig& cfg, const fs::path& out_dir, const Logger& log) {
  write_text(out_dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(s, o); });
  nlohmann::ordered_json j;
  std::ostringstream ini;
  write_config(cfg, ini);
  j["config"] = ini.str();
  j["seed"] = cfg.seed;
  j["gan"] = to_json(cfg.gan);
  j["cnn"] = to_json(cfg.cnn);
  j["flavor"] = name_of(cfg.flavor);
  j["kind"] = name_of(cfg.kind);
  j["target_per_class"] = cfg.target_per_class;
  auto stages = nlohmann::ordered_json::array();
  for (const auto& st : s.stages) {
    nlohmann::ordered_json e{{"stage", st.name}, {"status", st.status}};
    if (!st.detail.empty()) e["detail"] = st.detail;
    stages.push_back(e);
  }
  j["stages"] = stages;
  if (s.validation) j["validation"] = metrics_json(*s.validation);
  if (s.original) j["original"] = metrics_json(*s.original);
  for (const auto& [c, st] : s.ssim)
    j["ssim"][std::string(name_of(c))] = {{"mean", st.mean}, {"std", st.std}, {"range", st.range}, {"pairs", st.values.size()}};
  j["artifacts"] = artifact_inventory(out_dir);
  write_text(out_dir / "summary.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  log("wrote " + (out_dir / "summary.json").string());
}

// ---- whole run ------------------------------------------------------------

/// Runs every stage in order. A failing stage is recorded in summary.json and rethrown with its name.
inline RunSummary run_experiment(const ExperimentConfig& cfg, const Logger& log = stderr_logger()) {
  validate(cfg);
  if (cfg.manifest.empty()) throw config_error("config: [experiment] manifest is required");
  const auto& out = cfg.output_dir;
  fs::create_directories(out);
  {
    std::ostringstream ini;
    write_config(cfg, ini);
    write_text(out / "config.ini", [&](std::ostream& o) { o << ini.str(); });
  }
  RunSummary s;
  for (const auto& n : stage_names()) s.stages.push_back({n});
  std::size_t current = 0;
  auto stage = [&](auto&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    log("stage " + s.stages[current].name);
    try {
      body();
    } catch (const Error& e) {
      s.stages[current].status = "failed";
      s.stages[current].detail = e.what();
      write_summary(s, cfg, out, log);
      throw Error(e.kind(), "stage " + s.stages[current].name + ": " + e.what());
    } catch (const std::exception& e) {
      s.stages[current].status = "failed";
      s.stages[current].detail = e.what();
      write_summary(s, cfg, out, log);
      throw data_error("stage " + s.stages[current].name + ": " + e.what());
    }
    s.stages[current].status = "ok";
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log("stage " + s.stages[current].name + " done in " + std::to_string(static_cast<long>(secs)) + " s");
    ++current;
  };

  IngestResult ingest;
  PortraitSets portraits;
  std::map<BehaviorClass, GanOutcome> gans;
  BalancedSet balanced;
  ClassifierResult cnn;
  stage([&] { ingest = stage_ingest(cfg.manifest, out, log); });
  stage([&] { portraits = stage_portraits(ingest.records, cfg, out, log); });
  stage([&] {
    gans = stage_train_gans(portraits.train, cfg, out / "gan", worker_count(), log);
    for (const auto& [c, g] : gans)
      if (!g.history.empty()) s.final_losses[c] = g.history.back();
  });
  stage([&] {
    std::map<BehaviorClass, GanModel> models;
    for (const auto& [c, g] : gans) models.emplace(c, g.model);
    balanced = stage_balance(models, cfg.target_per_class, balance_seed(cfg), out, log);
  });
  stage([&] { s.ssim = stage_ssim(portraits.originals, balanced.portraits, out, log); });
  stage([&] { cnn = stage_train_cnn(balanced.portraits, cfg.cnn, cfg.kind, out, log); });
  stage([&] {
    std::vector<const Portrait*> val;
    for (auto i : cnn.split.val) val.push_back(&balanced.portraits[i]);
    s.validation = write_evaluation(evaluate(cnn.net, val), out / "eval", "validation", log);
    s.original = write_evaluation(evaluate(cnn.net, portraits.originals), out / "eval", "original", log);
  });
  write_summary(s, cfg, out, log);
  return s;
}

}  // namespace faultface
