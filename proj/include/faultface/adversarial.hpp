#pragma once
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "faultface/behavior.hpp"
#include "faultface/error.hpp"
#include "faultface/metrics.hpp"
#include "faultface/model.hpp"
#include "faultface/nn/adam.hpp"
#include "faultface/nn/checkpoint.hpp"
#include "faultface/nn/loss.hpp"
#include "faultface/nn/network.hpp"
#include "faultface/pgm.hpp"
#include "faultface/portrait.hpp"
#include "faultface/rng.hpp"
#include "json.hpp"

namespace faultface {

enum class GanFlavor { DCGAN, MlpGAN };

inline std::string_view name_of(GanFlavor f) { return f == GanFlavor::DCGAN ? "DCGAN" : "MlpGAN"; }

inline std::optional<GanFlavor> parse_flavor(std::string_view s) {
  if (s == "DCGAN") return GanFlavor::DCGAN;
  if (s == "MlpGAN") return GanFlavor::MlpGAN;
  return std::nullopt;
}

struct AdvConfig {
  double learning_rate = 1e-4;
  std::size_t iterations = 2000;
  std::size_t batch_size = 32;
  std::size_t k = 1;  // discriminator updates per generator update
  std::size_t noise_dim = 100;
  std::uint64_t seed = 0;
  /// Multiplies the learning rate by this factor every `lr_decay_interval` iterations.
  std::optional<double> lr_decay;
  std::size_t lr_decay_interval = 1000;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double leaky_alpha = 0.2;
  double init_std = 0.02;
  /// 0 disables periodic checkpoints.
  std::size_t checkpoint_interval = 0;
  std::vector<std::size_t> gen_widths = {128, 64, 32};
  std::vector<std::size_t> disc_widths = {32, 64, 128};
  std::vector<std::size_t> mlp_gen_widths = {256, 512, 1024};
  std::vector<std::size_t> mlp_disc_widths = {512, 256};
};

inline void validate(const AdvConfig& c) {
  auto fail = [](const std::string& what) { return config_error("adversarial config: " + what); };
  if (!(c.learning_rate > 0.0)) throw fail("learning_rate must be positive");
  if (c.batch_size == 0) throw fail("batch_size must be positive");
  if (c.k == 0) throw fail("k must be positive");
  if (c.noise_dim == 0) throw fail("noise_dim must be positive");
  if (c.lr_decay && !(*c.lr_decay > 0.0)) throw fail("lr_decay must be positive");
  if (c.lr_decay && c.lr_decay_interval == 0) throw fail("lr_decay_interval must be positive");
  if (c.gen_widths.size() != 3 || c.disc_widths.size() != 3) throw fail("DCGAN needs three generator and three discriminator widths");
  if (c.mlp_gen_widths.size() != 3 || c.mlp_disc_widths.size() != 2) throw fail("MLP-GAN needs 3 generator and 2 discriminator widths");
  for (auto w : c.gen_widths) if (w == 0) throw fail("zero width");
  for (auto w : c.disc_widths) if (w == 0) throw fail("zero width");
}

struct GanModel {
  Net generator;
  Net discriminator;
  GanFlavor flavor = GanFlavor::DCGAN;
  BehaviorClass class_label = BehaviorClass::Nominal;
  PortraitKind portrait_kind = PortraitKind::CwtMorse;
  std::size_t iteration = 0;
};

inline nn::Shape image_shape() { return {1, kSide, kSide}; }

/// Generator: noise -> 7x7 seed -> x2 -> x2 -> 28x28 Tanh. Discriminator: three stride-2 convs and a
/// single fully connected output. No pooling anywhere.
inline GanModel build_dcgan(const AdvConfig& cfg) {
  validate(cfg);
  using namespace nn;
  const auto [g0, g1, g2] = std::tuple{cfg.gen_widths[0], cfg.gen_widths[1], cfg.gen_widths[2]};
  const auto [d0, d1, d2] = std::tuple{cfg.disc_widths[0], cfg.disc_widths[1], cfg.disc_widths[2]};
  const double a = cfg.leaky_alpha;
  GanModel m;
  m.flavor = GanFlavor::DCGAN;
  m.generator.spec = {{cfg.noise_dim},
                      {Dense{cfg.noise_dim, 7 * 7 * g0}, Reshape{{g0, 7, 7}}, BatchNorm{g0}, Activation{Act::ReLU},
                       TConv{g0, g1}, BatchNorm{g1}, Activation{Act::ReLU}, TConv{g1, g2}, Conv{g2, 1, 1},
                       Activation{Act::Tanh}}};
  m.discriminator.spec = {image_shape(),
                          {Conv{1, d0, 2}, Activation{Act::LeakyReLU, a}, Conv{d0, d1, 2}, BatchNorm{d1},
                           Activation{Act::LeakyReLU, a}, Conv{d1, d2, 2}, BatchNorm{d2}, Activation{Act::LeakyReLU, a},
                           Flatten{}, Dense{d2 * 4 * 4, 1}, Activation{Act::Sigmoid}}};
  m.generator.params = init_params(m.generator.spec, derive_seed(cfg.seed, "gen-init"), cfg.init_std);
  m.discriminator.params = init_params(m.discriminator.spec, derive_seed(cfg.seed, "disc-init"), cfg.init_std);
  return m;
}

/// Fully connected baseline: generator 100->256->512->1024->784, discriminator 784->512->256->1.
inline GanModel build_mlp_gan(const AdvConfig& cfg) {
  validate(cfg);
  using namespace nn;
  const double a = cfg.leaky_alpha;
  const auto& gw = cfg.mlp_gen_widths;
  const auto& dw = cfg.mlp_disc_widths;
  GanModel m;
  m.flavor = GanFlavor::MlpGAN;
  m.generator.spec = {{cfg.noise_dim},
                      {Dense{cfg.noise_dim, gw[0]}, Activation{Act::LeakyReLU, a}, BatchNorm{gw[0]},
                       Dense{gw[0], gw[1]}, Activation{Act::LeakyReLU, a}, BatchNorm{gw[1]}, Dense{gw[1], gw[2]},
                       Activation{Act::LeakyReLU, a}, BatchNorm{gw[2]}, Dense{gw[2], kWindowLength},
                       Activation{Act::Tanh}, Reshape{image_shape()}}};
  m.discriminator.spec = {image_shape(),
                          {Flatten{}, Dense{kWindowLength, dw[0]}, Activation{Act::LeakyReLU, a}, Dense{dw[0], dw[1]},
                           Activation{Act::LeakyReLU, a}, Dense{dw[1], 1}, Activation{Act::Sigmoid}}};
  m.generator.params = init_params(m.generator.spec, derive_seed(cfg.seed, "gen-init"), cfg.init_std);
  m.discriminator.params = init_params(m.discriminator.spec, derive_seed(cfg.seed, "disc-init"), cfg.init_std);
  return m;
}

inline GanModel build_gan(GanFlavor f, const AdvConfig& cfg) {
  return f == GanFlavor::DCGAN ? build_dcgan(cfg) : build_mlp_gan(cfg);
}

// ---- pixel mapping --------------------------------------------------------

inline double pixel_to_unit(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }

inline std::uint8_t unit_to_pixel(double v) {
  return static_cast<std::uint8_t>(std::clamp(round_half_up(255.0 * (v + 1.0) / 2.0), 0.0, 255.0));
}

/// Portraits as a [N,1,28,28] batch in [-1,1].
inline nn::NdArray to_batch(const std::vector<const Portrait*>& ps) {
  nn::NdArray b(nn::batched(ps.size(), image_shape()));
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < kWindowLength; ++j) b[i * kWindowLength + j] = pixel_to_unit(ps[i]->pixels[j]);
  return b;
}

inline nn::NdArray noise_batch(std::size_t n, std::size_t dim, Rng& rng) {
  nn::NdArray z({n, dim});
  for (auto& v : z.data) v = gaussian(rng);
  return z;
}

// ---- training -------------------------------------------------------------

/// Optimizer state for both networks; owned by one training loop.
struct GanOptimizers {
  nn::AdamState gen;
  nn::AdamState disc;
};

inline GanOptimizers make_optimizers(const GanModel& m, const AdvConfig& cfg) {
  return {nn::make_adam_state(m.generator.params, cfg.learning_rate, cfg.beta1, cfg.beta2),
          nn::make_adam_state(m.discriminator.params, cfg.learning_rate, cfg.beta1, cfg.beta2)};
}

struct StepLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

namespace detail {

inline void check_finite(double v, const char* what, std::size_t iteration) {
  if (!std::isfinite(v))
    throw numeric_error(std::string(what) + " is not finite at iteration " + std::to_string(iteration));
}

inline void add_scaled(nn::GradSet& acc, const nn::GradSet& g, double s) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l)
    for (std::size_t k = 0; k < acc.layers[l].size(); ++k)
      for (std::size_t i = 0; i < acc.layers[l][k].size(); ++i) acc.layers[l][k][i] += s * g.layers[l][k][i];
}

}  // namespace detail

/// One alternating update: k discriminator steps on (real -> 1, detached fake -> 0) with
/// d_loss = (BCE_real + BCE_fake) / 2, then one non-saturating generator step (D(G(z)) -> 1).
/// The generator step reuses the fakes of the last discriminator step. Losses are the values
/// evaluated inside the step, before the corresponding parameter update.
inline StepLosses adversarial_step(GanModel& model, GanOptimizers& opt, const nn::NdArray& real_batch, Rng& noise,
                                   const AdvConfig& cfg) {
  using namespace nn;
  const auto want = batched(cfg.batch_size, image_shape());
  if (real_batch.shape != want)
    throw numeric_error("adversarial_step: real batch shape " + to_string(real_batch.shape) + ", expected " +
                        to_string(want));
  const std::size_t n = cfg.batch_size;
  const std::size_t iter = model.iteration;
  auto& G = model.generator;
  auto& D = model.discriminator;
  const NdArray ones({n, 1}, 1.0), zeros({n, 1}, 0.0);

  StepLosses out;
  ForwardResult fake;
  for (std::size_t s = 0; s < cfg.k; ++s) {
    fake = forward(G.spec, G.params, noise_batch(n, cfg.noise_dim, noise), Mode::Train);
    auto real_fwd = forward(D.spec, D.params, real_batch, Mode::Train);
    const auto real_loss = loss_bce(real_fwd.output, ones);
    auto grads = backward(D.spec, D.params, real_fwd.tape, real_loss.grad).grads;
    apply_state(D.params, real_fwd.state);
    auto fake_fwd = forward(D.spec, D.params, fake.output, Mode::Train);
    const auto fake_loss = loss_bce(fake_fwd.output, zeros);
    const auto fake_grads = backward(D.spec, D.params, fake_fwd.tape, fake_loss.grad).grads;
    apply_state(D.params, fake_fwd.state);
    for (auto& l : grads.layers)
      for (auto& t : l)
        for (auto& v : t.data) v *= 0.5;
    faultface::detail::add_scaled(grads, fake_grads, 0.5);
    out.d_loss = 0.5 * (real_loss.loss + fake_loss.loss);
    faultface::detail::check_finite(out.d_loss, "discriminator loss", iter);
    adam_update(D.params, grads, opt.disc);
  }

  auto judged = forward(D.spec, D.params, fake.output, Mode::Train);
  const auto g_loss = loss_bce(judged.output, ones);
  out.g_loss = g_loss.loss;
  faultface::detail::check_finite(out.g_loss, "generator loss", iter);
  const auto through_d = backward(D.spec, D.params, judged.tape, g_loss.grad);
  const auto g_grads = backward(G.spec, G.params, fake.tape, through_d.input_grad).grads;
  adam_update(G.params, g_grads, opt.gen);
  apply_state(G.params, fake.state);
  ++model.iteration;
  return out;
}

struct LossRecord {
  std::size_t iter = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct TrainResult {
  GanModel model;
  std::vector<LossRecord> history;
};

using CheckpointHook = std::function<void(const GanModel&)>;

/// Trains on `real` portraits (all of one class and kind), sampling minibatches with replacement.
/// `on_checkpoint` runs every cfg.checkpoint_interval iterations when both are set.
inline TrainResult train_adversarial(GanModel model, const std::vector<Portrait>& real, const AdvConfig& cfg,
                                     const CheckpointHook& on_checkpoint = {}) {
  validate(cfg);
  if (real.empty()) throw data_error("train_adversarial: no real portraits for " + std::string(name_of(model.class_label)));
  for (const auto& p : real)
    if (p.kind != real[0].kind || p.label != real[0].label)
      throw data_error("train_adversarial: portraits must share one kind and class");
  model.class_label = real[0].label;
  model.portrait_kind = real[0].kind;
  auto opt = make_optimizers(model, cfg);
  Rng sampler(derive_seed(cfg.seed, "gan-batches"));
  Rng noise(derive_seed(cfg.seed, "gan-noise"));
  TrainResult r;
  r.history.reserve(cfg.iterations);
  std::vector<const Portrait*> picks(cfg.batch_size);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (cfg.lr_decay && it > 0 && it % cfg.lr_decay_interval == 0) {
      opt.gen.lr *= *cfg.lr_decay;
      opt.disc.lr *= *cfg.lr_decay;
    }
    for (auto& p : picks) p = &real[uniform_index(sampler, real.size())];
    const auto losses = adversarial_step(model, opt, to_batch(picks), noise, cfg);
    r.history.push_back({model.iteration, losses.d_loss, losses.g_loss});
    if (on_checkpoint && cfg.checkpoint_interval && model.iteration % cfg.checkpoint_interval == 0)
      on_checkpoint(model);
  }
  r.model = std::move(model);
  return r;
}

// ---- generation and balancing --------------------------------------------

/// Infer-mode samples mapped (-1,1) -> [0,255]; tagged with the model's class and kind.
inline std::vector<Portrait> generate_portraits(const GanModel& model, std::size_t n, std::uint64_t seed,
                                                const std::string& source_id = "gen") {
  std::vector<Portrait> out;
  out.reserve(n);
  Rng rng(seed);
  const std::size_t noise_dim = model.generator.spec.input_shape.at(0);
  constexpr std::size_t chunk = 64;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    const auto y = nn::infer(model.generator.spec, model.generator.params, noise_batch(m, noise_dim, rng));
    for (std::size_t i = 0; i < m; ++i) {
      Portrait p;
      for (std::size_t j = 0; j < kWindowLength; ++j) p.pixels[j] = unit_to_pixel(y[i * kWindowLength + j]);
      p.kind = model.portrait_kind;
      p.label = model.class_label;
      p.source_id = source_id;
      p.index = start + i;
      out.push_back(std::move(p));
    }
  }
  return out;
}

/// Raw generator output for a noise batch in Infer mode, values in (-1,1).
inline nn::NdArray generator_output(const GanModel& model, const nn::NdArray& z) {
  return nn::infer(model.generator.spec, model.generator.params, z);
}

struct ProvenanceEntry {
  std::string file;
  BehaviorClass label = BehaviorClass::Nominal;
  std::string origin;      // "synthetic"
  std::string model_id;    // checkpoint identifier of the producing generator
};

struct BalancedSet {
  std::vector<Portrait> portraits;
  std::vector<ProvenanceEntry> provenance;
};

/// Exactly `target_per_class` generated portraits for each class, one model per class.
/// `model_ids` (optional, by class) names the checkpoint recorded in the provenance.
inline BalancedSet balance_dataset(const std::map<BehaviorClass, GanModel>& models, std::size_t target_per_class,
                                   std::uint64_t seed, const std::map<BehaviorClass, std::string>& model_ids = {}) {
  if (target_per_class == 0) throw config_error("balance: target_per_class must be positive");
  std::optional<PortraitKind> kind;
  for (auto c : kAllClasses) {
    const auto it = models.find(c);
    if (it == models.end()) throw data_error("balance: no model for class " + std::string(name_of(c)));
    if (kind && it->second.portrait_kind != *kind) throw data_error("balance: models disagree on portrait kind");
    kind = it->second.portrait_kind;
  }
  BalancedSet out;
  for (auto c : kAllClasses) {
    const auto& model = models.at(c);
    auto ps = generate_portraits(model, target_per_class, derive_seed(seed, "balance", index_of(c)), "syn");
    const auto id_it = model_ids.find(c);
    const std::string id = id_it == model_ids.end() ? std::string(name_of(c)) : id_it->second;
    for (auto& p : ps) {
      out.provenance.push_back({portrait_filename(p), c, "synthetic", id});
      out.portraits.push_back(std::move(p));
    }
  }
  return out;
}

inline void write_provenance_csv(const std::vector<ProvenanceEntry>& entries, std::ostream& out) {
  out << "file,label,origin,model\n";
  for (const auto& e : entries) out << e.file << ',' << name_of(e.label) << ',' << e.origin << ',' << e.model_id << '\n';
}

// ---- reports and persistence ---------------------------------------------

inline void write_loss_csv(const std::vector<LossRecord>& h, std::ostream& out) {
  out << "iter,d_loss,g_loss\n";
  for (const auto& r : h) out << r.iter << ',' << fixed6(r.d_loss) << ',' << fixed6(r.g_loss) << '\n';
}

inline nlohmann::ordered_json to_json(const AdvConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["iterations"] = c.iterations;
  j["batch_size"] = c.batch_size;
  j["k"] = c.k;
  j["noise_dim"] = c.noise_dim;
  j["seed"] = c.seed;
  j["lr_decay"] = c.lr_decay ? nlohmann::ordered_json(*c.lr_decay) : nlohmann::ordered_json(nullptr);
  j["lr_decay_interval"] = c.lr_decay_interval;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["leaky_alpha"] = c.leaky_alpha;
  j["init_std"] = c.init_std;
  j["gen_widths"] = c.gen_widths;
  j["disc_widths"] = c.disc_widths;
  j["mlp_gen_widths"] = c.mlp_gen_widths;
  j["mlp_disc_widths"] = c.mlp_disc_widths;
  return j;
}

inline AdvConfig adv_config_from_json(const nlohmann::json& j) {
  AdvConfig c;
  c.learning_rate = j.at("learning_rate");
  c.iterations = j.at("iterations");
  c.batch_size = j.at("batch_size");
  c.k = j.at("k");
  c.noise_dim = j.at("noise_dim");
  c.seed = j.at("seed");
  if (!j.at("lr_decay").is_null()) c.lr_decay = j.at("lr_decay").get<double>();
  c.lr_decay_interval = j.at("lr_decay_interval");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.leaky_alpha = j.at("leaky_alpha");
  c.init_std = j.at("init_std");
  c.gen_widths = j.at("gen_widths").get<std::vector<std::size_t>>();
  c.disc_widths = j.at("disc_widths").get<std::vector<std::size_t>>();
  c.mlp_gen_widths = j.at("mlp_gen_widths").get<std::vector<std::size_t>>();
  c.mlp_disc_widths = j.at("mlp_disc_widths").get<std::vector<std::size_t>>();
  return c;
}

/// Writes `<stem>.gen.ffnn`, `<stem>.disc.ffnn` and the `<stem>.json` sidecar.
inline void save_gan(const GanModel& m, const AdvConfig& cfg, const std::filesystem::path& stem) {
  nn::save_checkpoint(m.generator.params, stem.string() + ".gen.ffnn");
  nn::save_checkpoint(m.discriminator.params, stem.string() + ".disc.ffnn");
  nlohmann::ordered_json meta;
  meta["flavor"] = name_of(m.flavor);
  meta["class"] = name_of(m.class_label);
  meta["kind"] = name_of(m.portrait_kind);
  meta["iteration"] = m.iteration;
  meta["seed"] = cfg.seed;
  meta["config"] = to_json(cfg);
  std::ofstream out(stem.string() + ".json");
  if (!out) throw data_error("cannot write '" + stem.string() + ".json'");
  out << meta.dump(2) << '\n';
}

inline GanModel load_gan(const std::filesystem::path& stem) {
  std::ifstream in(stem.string() + ".json");
  if (!in) throw data_error("cannot open '" + stem.string() + ".json'");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw data_error("bad GAN metadata '" + stem.string() + ".json': " + e.what());
  }
  const auto flavor = parse_flavor(meta.at("flavor").get<std::string>());
  const auto cls = parse_class(meta.at("class").get<std::string>());
  const auto kind = parse_kind(meta.at("kind").get<std::string>());
  if (!flavor || !cls || !kind) throw data_error("bad GAN metadata '" + stem.string() + ".json'");
  auto m = build_gan(*flavor, adv_config_from_json(meta.at("config")));
  m.generator.params = nn::load_checkpoint(stem.string() + ".gen.ffnn");
  m.discriminator.params = nn::load_checkpoint(stem.string() + ".disc.ffnn");
  nn::check_params_match(m.generator.spec, m.generator.params);
  nn::check_params_match(m.discriminator.spec, m.discriminator.params);
  m.class_label = *cls;
  m.portrait_kind = *kind;
  m.iteration = meta.at("iteration");
  return m;
}

}  // namespace faultface
