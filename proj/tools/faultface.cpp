// faultface command line: every pipeline stage as a subcommand, plus run-all and a synthetic-data generator.
#include <CLI11.hpp>

#include <iostream>

#include "faultface/faultface.hpp"

using namespace faultface;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

ExperimentConfig base_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.gan.seed = cfg.seed;
    cfg.cnn.seed = cnn_seed(cfg);
  }
  return cfg;
}

Logger logger(const Common& c) { return c.quiet ? quiet_logger() : stderr_logger(); }

BehaviorClass class_arg(const std::string& s) {
  const auto c = parse_class(s);
  if (!c) throw config_error("unknown class '" + s + "'");
  return *c;
}

PortraitKind kind_arg(const std::string& s) {
  const auto k = parse_kind(s);
  if (!k) throw config_error("unknown portrait kind '" + s + "'");
  return *k;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FaultFace: vibration faceportraits, per-class GAN balancing and CNN fault detection"};
  app.require_subcommand(1);
  app.footer("Config file keys and defaults (INI):\n\n" + config_reference() +
             "\nEnvironment: FAULTFACE_WORKERS limits concurrent GAN trainings (default 1).\n"
             "Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.");
  Common common;
  app.add_flag("-q,--quiet", common.quiet, "Suppress progress logging");

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "INI config file supplying hyperparameters");
    sub->add_option("--seed", common.seed, "Override the global seed");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Write the six-family synthetic dataset (signals + manifest.csv)");
  std::string synth_out;
  SynthConfig sc;
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", sc.seed, "Seed")->capture_default_str();
  synth->add_option("--windows", sc.windows_per_record, "Windows (784 samples) per record")->capture_default_str();
  synth->add_option("--noise", sc.noise_std, "White-noise standard deviation")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load a manifest and its signals; report the class histogram");
  std::string manifest, out_dir = ".";
  ingest->add_option("-m,--manifest", manifest, "Manifest CSV (path,label,sample_rate,bearing_end)")->required();
  ingest->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();

  // portrait
  auto* portrait = app.add_subcommand("portrait", "Turn every record window into faceportraits (PGM)");
  std::string kind_name = "CwtMorse";
  std::size_t stride = kWindowLength, windows = 0;
  portrait->add_option("-m,--manifest", manifest, "Manifest CSV")->required();
  portrait->add_option("-k,--kind", kind_name, "CwtMorse|Haar|CMR|Toeplitz|Hankel|Gram")->capture_default_str();
  portrait->add_option("--stride", stride, "Window stride in samples")->capture_default_str();
  portrait->add_option("--windows", windows, "Windows per record (0 = all)")->capture_default_str();
  portrait->add_option("-o,--out", out_dir, "Output directory (portraits/train, portraits/original)")->required();

  // train-gan
  auto* train_gan = app.add_subcommand("train-gan", "Train one class's GAN on a portrait directory");
  std::string portraits_dir, class_name, flavor_name;
  std::optional<std::size_t> iterations;
  train_gan->add_option("-p,--portraits", portraits_dir, "Directory of training portraits")->required();
  train_gan->add_option("--class", class_name, "Behavior class to train")->required();
  train_gan->add_option("--flavor", flavor_name, "DCGAN|MlpGAN (default from config)");
  train_gan->add_option("--iterations", iterations, "Override the iteration count");
  train_gan->add_option("-o,--out", out_dir, "Output directory for <Class>.{gen.ffnn,disc.ffnn,json}")->required();
  add_config(train_gan);

  // generate
  auto* generate = app.add_subcommand("generate", "Sample portraits from a trained generator");
  std::string model_stem;
  std::size_t count = 0;
  std::uint64_t gen_seed = 0;
  generate->add_option("--model", model_stem, "Checkpoint stem (without .gen.ffnn)")->required();
  generate->add_option("-n,--count", count, "Number of portraits")->required();
  generate->add_option("--seed", gen_seed, "Noise seed")->capture_default_str();
  generate->add_option("-o,--out", out_dir, "Output directory")->required();

  // balance
  auto* balance = app.add_subcommand("balance", "Build the balanced set from one generator per class");
  std::string models_dir;
  std::optional<std::size_t> target;
  balance->add_option("--models", models_dir, "Directory holding <Class>.* checkpoints")->required();
  balance->add_option("--target", target, "Portraits per class (default from config)");
  balance->add_option("-o,--out", out_dir, "Output directory (balanced/)")->required();
  add_config(balance);

  // ssim-report
  auto* ssim_report = app.add_subcommand("ssim-report", "Pairwise SSIM of originals vs generated, per class");
  std::string originals_dir, generated_dir;
  ssim_report->add_option("--originals", originals_dir, "Original portraits")->required();
  ssim_report->add_option("--generated", generated_dir, "Generated portraits")->required();
  ssim_report->add_option("-o,--out", out_dir, "Output directory (ssim/)")->required();

  // train-cnn
  auto* train_cnn_cmd = app.add_subcommand("train-cnn", "Train the six-class CNN on a balanced portrait directory");
  std::string data_dir;
  std::optional<std::size_t> epochs;
  train_cnn_cmd->add_option("-d,--data", data_dir, "Balanced portraits")->required();
  train_cnn_cmd->add_option("--epochs", epochs, "Override the epoch count");
  train_cnn_cmd->add_option("-o,--out", out_dir, "Output directory (cnn/)")->required();
  add_config(train_cnn_cmd);

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Confusion matrix and A/C/F metrics of a CNN on portraits");
  std::string report_name = "original";
  evaluate_cmd->add_option("--model", model_stem, "CNN checkpoint stem (without .ffnn)")->required();
  evaluate_cmd->add_option("-d,--data", data_dir, "Labeled portraits")->required();
  evaluate_cmd->add_option("--name", report_name, "Report name prefix")->capture_default_str();
  evaluate_cmd->add_option("-o,--out", out_dir, "Output directory")->required();

  // run-all
  auto* run_all = app.add_subcommand("run-all", "Run every stage from a config file");
  std::string run_out;
  run_all->add_option("-o,--out", run_out, "Override the output directory");
  add_config(run_all);
  run_all->get_option("--config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const auto log = logger(common);
    if (*synth) {
      const auto path = write_synthetic(sc, synth_out);
      log("wrote " + path.string());
    } else if (*ingest) {
      const auto r = stage_ingest(manifest, out_dir, log);
      write_histogram_csv(r.histogram, std::cout);
    } else if (*portrait) {
      ExperimentConfig cfg;
      cfg.kind = kind_arg(kind_name);
      cfg.stride = stride;
      cfg.windows_per_record = windows;
      const auto records = load_records(load_manifest(manifest), fs::path(manifest).parent_path());
      stage_portraits(records, cfg, out_dir, log);
    } else if (*train_gan) {
      auto cfg = base_config(common);
      if (!flavor_name.empty()) {
        const auto f = parse_flavor(flavor_name);
        if (!f) throw config_error("unknown flavor '" + flavor_name + "'");
        cfg.flavor = *f;
      }
      if (iterations) cfg.gan.iterations = *iterations;
      const auto cls = class_arg(class_name);
      auto data = of_class(load_portrait_dir(portraits_dir), cls);
      if (data.empty()) throw data_error("no " + class_name + " portraits in '" + portraits_dir + "'");
      auto acfg = cfg.gan;
      acfg.seed = gan_seed(cfg, cls);
      fs::create_directories(out_dir);
      const auto r = train_adversarial(build_gan(cfg.flavor, acfg), data, acfg);
      save_gan(r.model, acfg, gan_stem(out_dir, cls));
      write_text(fs::path(out_dir) / (class_name + "_loss.csv"), [&](std::ostream& o) { write_loss_csv(r.history, o); });
      log("wrote " + gan_stem(out_dir, cls).string() + ".{gen.ffnn,disc.ffnn,json}");
    } else if (*generate) {
      const auto m = load_gan(model_stem);
      fs::create_directories(out_dir);
      for (const auto& p : generate_portraits(m, count, gen_seed)) save_portrait(p, out_dir);
      log("wrote " + std::to_string(count) + " portraits to " + out_dir);
    } else if (*balance) {
      const auto cfg = base_config(common);
      stage_balance(load_gans(models_dir), target.value_or(cfg.target_per_class), balance_seed(cfg), out_dir, log);
    } else if (*ssim_report) {
      const auto r = stage_ssim(load_portrait_dir(originals_dir), load_portrait_dir(generated_dir), out_dir, log);
      write_ssim_summary_csv(r, std::cout);
    } else if (*train_cnn_cmd) {
      auto cfg = base_config(common);
      if (epochs) cfg.cnn.epochs = *epochs;
      const auto data = load_portrait_dir(data_dir);
      if (data.empty()) throw data_error("no portraits in '" + data_dir + "'");
      const auto r = stage_train_cnn(data, cfg.cnn, data.front().kind, out_dir, log);
      if (!r.history.empty()) std::cout << "validation accuracy " << fixed6(r.history.back().val_acc) << '\n';
    } else if (*evaluate_cmd) {
      const auto model = load_cnn(model_stem);
      const auto data = load_portrait_dir(data_dir);
      for (const auto& p : data)
        if (p.kind != model.kind)
          throw data_error("portrait kind " + std::string(name_of(p.kind)) + " does not match the model's " +
                           std::string(name_of(model.kind)));
      const auto report = write_evaluation(evaluate(model.net, data), out_dir, report_name, log);
      write_metrics_csv(report, std::cout);
      std::cout << "overall_accuracy," << fixed6(report.overall_accuracy) << '\n';
    } else if (*run_all) {
      auto cfg = base_config(common);
      if (!run_out.empty()) cfg.output_dir = run_out;
      const auto s = run_experiment(cfg, log);
      std::cout << "validation accuracy " << fixed6(s.validation->overall_accuracy) << "\noriginal accuracy "
                << fixed6(s.original->overall_accuracy) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "faultface: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "faultface: " << e.what() << '\n';
    return exit_code(ErrorKind::Data);
  }
  return 0;
}
