// End-to-end acceptance gate. Prints one PASS/FAIL line per criterion; exit status 1 if any fails.
//   acceptance [--work DIR] [N ...]     run only the listed criteria (default 1..8)
#include <Eigen/Eigenvalues>
#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "faultface/faultface.hpp"
#include "faultface/nn/grad_check.hpp"
#include "oracles.hpp"

using namespace faultface;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh(const fs::path& d) {
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// ---- 1: gradients ----------------------------------------------------------

Outcome gradients() {
  using namespace nn;
  std::vector<std::pair<std::string, NetworkSpec>> nets = {
      {"Conv s1", {{2, 5, 5}, {Conv{2, 3, 1}}}},
      {"Conv s1 wide", {{2, 5, 5}, {Conv{2, 6, 1}}}},
      {"Conv s2", {{2, 5, 6}, {Conv{2, 3, 2}}}},
      {"TConv", {{2, 3, 3}, {TConv{2, 2}}}},
      {"Dense", {{6}, {Dense{6, 4}}}},
      {"BatchNorm 2d", {{3, 3, 3}, {BatchNorm{3}}}},
      {"BatchNorm 1d", {{5}, {BatchNorm{5}}}},
      {"MaxPool", {{2, 4, 4}, {MaxPool{}}}},
      {"Flatten/Reshape", {{2, 2, 3}, {Flatten{}, Reshape{{3, 2, 2}}}}},
      {"ReLU", {{7}, {Activation{Act::ReLU}}}},
      {"LeakyReLU", {{7}, {Activation{Act::LeakyReLU, 0.2}}}},
      {"Tanh", {{7}, {Activation{Act::Tanh}}}},
      {"Sigmoid", {{7}, {Activation{Act::Sigmoid}}}},
  };
  AdvConfig g;
  g.noise_dim = 4;
  g.gen_widths = {2, 2, 2};
  g.disc_widths = {2, 2, 2};
  const auto gan = build_dcgan(g);
  nets.push_back({"DCGAN generator", gan.generator.spec});
  nets.push_back({"DCGAN discriminator", gan.discriminator.spec});
  ClassifierConfig c;
  c.widths = {2, 2, 2};
  nets.push_back({"CNN", build_cnn(c).spec});

  constexpr std::size_t kTrials = 100;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0, skipped = 0;
  const std::size_t assembled = nets.size() - 3;
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const auto& [name, net] = nets[i];
    GradCheckOptions opt;
    // The assembled 28x28 networks are checked on a batch of 2 to keep the suite inside its budget.
    if (i >= assembled) opt.batch = 2;
    for (std::size_t t = 0; t < kTrials; ++t) {
      const auto r = grad_check(net, derive_seed(1, name, t), opt);
      for (const auto& e : r.entries) checked += e.checked, skipped += e.skipped;
      if (r.max_error() > worst) worst = r.max_error(), worst_name = name;
    }
  }
  return {worst < 1e-5, std::to_string(nets.size()) + " networks x " + std::to_string(kTrials) +
                            " trials, max rel err " + fmt(worst) + " (" + worst_name + "), " +
                            std::to_string(checked) + " coords, " + std::to_string(skipped) + " kink-skipped"};
}

// ---- 2: transform structure ------------------------------------------------

Outcome transforms() {
  Rng rng(2);
  std::size_t failures = 0;
  double min_eig = 0.0;
  std::string first;
  auto fail = [&](const std::string& what) {
    if (failures++ == 0) first = what;
  };
  for (int t = 0; t < 1000; ++t) {
    Window w;
    const double f = 0.002 + 0.2 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (std::size_t i = 0; i < kWindowLength; ++i)
      w.values[i] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i)) + gaussian(rng);
    const auto x = normalize_window(w);
    const auto tm = toeplitz_matrix(x), hm = hankel_matrix(x), gm = gram_matrix(x);
    for (std::size_t i = 0; i < kSide; ++i)
      for (std::size_t j = 0; j < kSide; ++j) {
        if (tm[i * kSide + j] != tm[j * kSide + i]) fail("toeplitz symmetry");
        if (i + 1 < kSide && j + 1 < kSide && tm[i * kSide + j] != tm[(i + 1) * kSide + j + 1]) fail("toeplitz diagonals");
        if (i > 0 && j + 1 < kSide && hm[i * kSide + j] != hm[(i - 1) * kSide + j + 1]) fail("hankel anti-diagonals");
        if (gm[i * kSide + j] != gm[j * kSide + i]) fail("gram symmetry");
      }
    const Eigen::Matrix<double, 28, 28, Eigen::RowMajor> g(gm.data());
    const double e = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().minCoeff();
    min_eig = t == 0 ? e : std::min(min_eig, e);
    if (e < -1e-9) fail("gram not PSD");

    // CMR: pixel (r, c) is sample 28r + c, and the grid point of each pixel maps back to it.
    const auto p = cmr_portrait(x);
    std::vector<double> back(kWindowLength);
    for (std::size_t i = 0; i < kWindowLength; ++i) {
      if (p.pixels[i] != static_cast<int>(std::floor(255.0 * x[i] + 0.5))) fail("cmr pixel formula");
      back[i] = p.pixels[i] / 255.0;
    }
    if (cmr_portrait(back).pixels != p.pixels) fail("cmr inverse");

    std::vector<double> constant(kWindowLength, std::uniform_real_distribution<double>(-5.0, 5.0)(rng));
    for (const auto& row : haar_scalogram(constant))
      for (double v : row)
        if (v != 0.0) fail("haar constant response");
  }
  // Position bijection: a lone impulse at sample i lights exactly pixel i.
  for (std::size_t i = 0; i < kWindowLength; ++i) {
    std::vector<double> x(kWindowLength, 0.0);
    x[i] = 1.0;
    const auto p = cmr_portrait(x);
    for (std::size_t k = 0; k < kWindowLength; ++k)
      if (p.pixels[k] != (k == i ? 255 : 0)) fail("cmr impulse position");
  }

  // Morse: peak row of the FFT scalogram vs an O(N^2) direct convolution with the inverse-DFT kernel.
  const MorseParams mp;
  const auto scales = morse_scales(mp);
  const auto freqs = morse_center_frequencies(mp);
  std::vector<std::vector<std::complex<double>>> kernels;
  for (double s : scales) kernels.push_back(oracle::morse_kernel(s, mp));
  double worst_rel = 0.0;
  std::size_t peak_matches = 0;
  for (int k = 0; k < 10; ++k) {
    const double f = freqs[2] * std::pow(freqs[25] / freqs[2], k / 9.0);
    std::vector<double> x(kWindowLength);
    for (std::size_t i = 0; i < kWindowLength; ++i) x[i] = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i));
    const auto s = morse_scalogram(x, mp);
    std::size_t fast_peak = 0, slow_peak = 0, nearest = 0;
    double fast_best = -1.0, slow_best = -1.0, scale_max = 0.0, tone_diff = 0.0;
    for (std::size_t r = 0; r < kScales; ++r) {
      const auto o = oracle::morse_row(x, kernels[r]);
      double ef = 0.0, eo = 0.0, diff = 0.0;
      // interior columns only: the edges see the zero padding
      for (std::size_t t = 196; t < 588; ++t) {
        ef += s[r][t] * s[r][t];
        eo += o[t] * o[t];
      }
      for (std::size_t t = 0; t < kWindowLength; ++t) {
        diff = std::max(diff, std::abs(s[r][t] - o[t]));
        scale_max = std::max(scale_max, o[t]);
      }
      tone_diff = std::max(tone_diff, diff);
      if (ef > fast_best) fast_best = ef, fast_peak = r;
      if (eo > slow_best) slow_best = eo, slow_peak = r;
      if (std::abs(std::log(freqs[r] / f)) < std::abs(std::log(freqs[nearest] / f))) nearest = r;
    }
    worst_rel = std::max(worst_rel, tone_diff / scale_max);
    if (fast_peak == slow_peak && (fast_peak + 1 >= nearest && fast_peak <= nearest + 1)) ++peak_matches;
  }
  if (peak_matches != 10) fail("morse peak scale");
  if (worst_rel > 1e-9) fail("morse rows differ from oracle");
  return {failures == 0, "1000 windows; min Gram eigenvalue " + fmt(min_eig) + "; Morse peaks " +
                             std::to_string(peak_matches) + "/10, max row deviation " + fmt(worst_rel) +
                             (failures ? "; " + std::to_string(failures) + " failures, first: " + first : "")};
}

// ---- 3: SSIM ----------------------------------------------------------------

Portrait random_portrait(Rng& rng) {
  Portrait p;
  std::uniform_int_distribution<int> px(0, 255);
  // Mix noise images with structured ones so the oracle sees correlated pairs too.
  const int mode = px(rng) % 3;
  const double a = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (std::size_t i = 0; i < kWindowLength; ++i)
    p.pixels[i] = mode == 0 ? static_cast<std::uint8_t>(px(rng))
                            : static_cast<std::uint8_t>(std::clamp(128.0 + 100.0 * std::sin(a * i) + 20.0 * gaussian(rng), 0.0, 255.0));
  return p;
}

Outcome ssim_checks() {
  Rng rng(3);
  double worst_id = 0.0, worst_oracle = 0.0;
  bool symmetric = true;
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_portrait(rng), b = random_portrait(rng);
    worst_id = std::max(worst_id, std::abs(ssim(a, a) - 1.0));
    symmetric = symmetric && ssim(a, b) == ssim(b, a);
    worst_oracle = std::max(worst_oracle, std::abs(ssim(a, b) - oracle::ssim(a, b)));
  }
  return {worst_id <= 1e-12 && symmetric && worst_oracle <= 1e-12,
          "1000 pairs; |ssim(a,a)-1| <= " + fmt(worst_id) + ", symmetric " + (symmetric ? "yes" : "NO") +
              ", max oracle deviation " + fmt(worst_oracle)};
}

// ---- 4: metrics ---------------------------------------------------------------

Outcome metrics_checks() {
  Rng rng(4);
  std::size_t mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 300);
    std::vector<std::pair<int, int>> pairs(n);
    ConfusionMatrix cm;
    for (auto& [pred, truth] : pairs) {
      pred = static_cast<int>(uniform_index(rng, kNumClasses));
      // bias toward the diagonal so every regime (perfect, empty, mixed) shows up
      truth = uniform_index(rng, 3) == 0 ? static_cast<int>(uniform_index(rng, kNumClasses)) : pred;
      cm.add(class_at(pred), class_at(truth));
    }
    for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
      const auto o = oracle::tally(pairs, c);
      const auto m = class_metrics(cm, class_at(c));
      const double a = oracle::safe_div(o.tp, o.tp + o.fp), cov = oracle::safe_div(o.tp, o.tp + o.fn);
      if (m.tp != o.tp || m.fp != o.fp || m.fn != o.fn || m.accuracy != a || m.coverage != cov ||
          m.harmonic_mean != oracle::safe_div(2 * a * cov, a + cov))
        ++mismatches;
    }
  }
  // Table 3 diagonal, listed as Ball, InnerRace, LoadCenter, LoadOpposite, LoadOrthogonal, Nominal.
  using B = BehaviorClass;
  const std::array<std::pair<B, std::size_t>, kNumClasses> diag = {
      {{B::Ball, 28}, {B::InnerRace, 28}, {B::LoadCenter, 23}, {B::LoadOpposite, 15}, {B::LoadOrthogonal, 16}, {B::Nominal, 4}}};
  ConfusionMatrix cm;
  for (auto [c, n] : diag) cm.counts[index_of(c)][index_of(c)] = n;
  const auto r = report_all(cm);
  bool ones = r.overall_accuracy == 1.0;
  for (const auto& m : r.per_class) ones = ones && m.accuracy == 1.0 && m.coverage == 1.0 && m.harmonic_mean == 1.0;
  return {mismatches == 0 && ones,
          "500 random lists, " + std::to_string(mismatches) + " mismatching class tallies; table diagonal all ones: " +
              (ones ? "yes" : "NO")};
}

// ---- 5: DCGAN convergence -------------------------------------------------------

struct GanRun {
  double ssim0 = 0.0, ssim1 = 0.0;
  bool finite = true;
  double seconds = 0.0;
};

GanRun gan_convergence(const fs::path& csv) {
  SynthConfig sc;
  sc.records = {0, 1, 0, 0, 0, 0};
  sc.windows_per_record = 1;
  const auto rec = generate_synthetic(sc).front();
  Window w;
  std::copy(rec.samples.begin(), rec.samples.end(), w.values.begin());
  w.label = rec.label;
  const auto target = make_portrait(PortraitKind::CMR, w, rec.sample_rate);

  Rng rng(derive_seed(5, "noisy-copies"));
  std::vector<Portrait> reals(64, target);
  for (auto& p : reals)
    for (auto& v : p.pixels) v = static_cast<std::uint8_t>(std::clamp(std::floor(v + 8.0 * gaussian(rng) + 0.5), 0.0, 255.0));

  AdvConfig cfg;
  cfg.iterations = 2000;
  cfg.batch_size = 32;
  cfg.learning_rate = 2e-4;
  cfg.seed = 5;
  const auto mean_ssim = [&](const GanModel& m) {
    double s = 0.0;
    for (const auto& p : generate_portraits(m, 64, derive_seed(5, "samples"))) s += ssim(p, target);
    return s / 64.0;
  };
  GanRun r;
  const auto model = build_dcgan(cfg);
  r.ssim0 = mean_ssim(model);
  const auto t0 = Clock::now();
  const auto res = train_adversarial(model, reals, cfg);
  r.seconds = seconds_since(t0);
  r.ssim1 = mean_ssim(res.model);
  for (const auto& h : res.history) r.finite = r.finite && std::isfinite(h.d_loss) && std::isfinite(h.g_loss);
  write_text(csv, [&](std::ostream& o) {
    o << "metric,value\nssim_iteration0," << fixed6(r.ssim0) << "\nssim_final," << fixed6(r.ssim1) << "\nd_loss_final,"
      << fixed6(res.history.back().d_loss) << "\ng_loss_final," << fixed6(res.history.back().g_loss) << '\n';
  });
  return r;
}

Outcome gan_check(const fs::path& work) {
  const auto r = gan_convergence(work / "gan_summary.csv");
  return {r.finite && r.ssim1 > r.ssim0 && r.ssim1 >= 0.5 && r.seconds < 600.0,
          "mean SSIM " + fmt(r.ssim0) + " -> " + fmt(r.ssim1) + ", losses finite " + (r.finite ? "yes" : "NO") + ", " +
              fmt(r.seconds) + " s training"};
}

// ---- 6: end-to-end on synthetic data ------------------------------------------------

struct PipelineRun {
  RunSummary summary;
  double seconds = 0.0;
};

PipelineRun pipeline_run(const fs::path& dir) {
  fresh(dir);
  auto cfg = load_config(fs::path(FAULTFACE_SOURCE_DIR) / "configs" / "desk.cfg");
  SynthConfig sc;
  sc.windows_per_record = cfg.windows_per_record;
  const auto t0 = Clock::now();
  cfg.manifest = write_synthetic(sc, dir / "synthetic");
  cfg.output_dir = dir / "out";
  PipelineRun r;
  r.summary = run_experiment(cfg, quiet_logger());
  r.seconds = seconds_since(t0);
  return r;
}

Outcome pipeline_check(const fs::path& work) {
  const auto r = pipeline_run(work / "run");
  const double val = r.summary.validation->overall_accuracy, orig = r.summary.original->overall_accuracy;
  return {val >= 0.95 && orig >= 0.95 && r.seconds < 1800.0,
          "validation accuracy " + fmt(val) + ", held-out originals " + fmt(orig) + ", " + fmt(r.seconds) + " s"};
}

// ---- 7: determinism -----------------------------------------------------------------

Outcome determinism_check(const fs::path& work) {
  // Reuse the first runs when criteria 5 and 6 already produced them in this invocation.
  if (!fs::exists(work / "gan_summary.csv")) gan_convergence(work / "gan_summary.csv");
  if (!fs::exists(work / "run" / "out" / "summary.csv")) pipeline_run(work / "run");
  gan_convergence(work / "gan_summary_repeat.csv");
  pipeline_run(work / "repeat");
  const bool gan_same = slurp(work / "gan_summary.csv") == slurp(work / "gan_summary_repeat.csv");
  const auto a = slurp(work / "run" / "out" / "summary.csv"), b = slurp(work / "repeat" / "out" / "summary.csv");
  const bool run_same = !a.empty() && a == b;
  return {gan_same && run_same, std::string("GAN summary identical: ") + (gan_same ? "yes" : "NO") +
                                    ", run-all summary identical: " + (run_same ? "yes" : "NO") + " (" +
                                    std::to_string(a.size()) + " bytes)"};
}

// ---- 8: serialization round trips -----------------------------------------------------

bool bitwise_equal(const nn::ParamSet& a, const nn::ParamSet& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (auto [x, y] : {std::pair{&a.layers[l].trainable, &b.layers[l].trainable}, std::pair{&a.layers[l].state, &b.layers[l].state}}) {
      if (x->size() != y->size()) return false;
      for (std::size_t k = 0; k < x->size(); ++k) {
        const auto &u = (*x)[k], &v = (*y)[k];
        if (u.shape != v.shape || std::memcmp(u.ptr(), v.ptr(), u.size() * sizeof(double)) != 0) return false;
      }
    }
  }
  return true;
}

Outcome roundtrip_check(const fs::path& work) {
  using namespace nn;
  fresh(work / "roundtrip");
  Rng rng(8);
  std::size_t ckpt_ok = 0, pgm_ok = 0;
  for (int t = 0; t < 100; ++t) {
    // random small network, random values across many binades (and signed zeros)
    const std::size_t c = 1 + uniform_index(rng, 4), o = 1 + uniform_index(rng, 4);
    NetworkSpec net{{c, 6, 6}, {Conv{c, o, 1 + uniform_index(rng, 2)}, BatchNorm{o}, Activation{Act::ReLU}, Flatten{}}};
    const auto flat = output_shape(net)[0];
    net.layers.push_back(Dense{flat, 1 + uniform_index(rng, 5)});
    auto p = init_params(net, rng());
    for (auto& l : p.layers) {
      for (auto* group : {&l.trainable, &l.state})
        for (auto& a : *group)
          for (auto& v : a.data) v = uniform_index(rng, 50) == 0 ? -0.0 : std::ldexp(gaussian(rng), static_cast<int>(uniform_index(rng, 80)) - 40);
    }
    const auto path = work / "roundtrip" / ("net" + std::to_string(t) + ".ffnn");
    save_checkpoint(p, path);
    const auto back = load_checkpoint(path);
    std::stringstream again;
    write_checkpoint(back, again);
    if (bitwise_equal(p, back) && again.str() == slurp(path)) ++ckpt_ok;

    Portrait q;
    q.kind = kAllKinds[uniform_index(rng, kAllKinds.size())];
    q.label = class_at(uniform_index(rng, kNumClasses));
    q.source_id = "rec" + std::to_string(t);
    q.index = uniform_index(rng, 1000);
    for (auto& v : q.pixels) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
    const auto file = save_portrait(q, work / "roundtrip");
    const auto q2 = load_portrait(file);
    std::stringstream bytes;
    write_pgm(q2, bytes);
    if (q2 == q && bytes.str() == slurp(file)) ++pgm_ok;
  }
  fs::remove_all(work / "roundtrip");
  return {ckpt_ok == 100 && pgm_ok == 100,
          "checkpoints " + std::to_string(ckpt_ok) + "/100, PGM " + std::to_string(pgm_ok) + "/100 bitwise exact"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "faultface_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) work = argv[++i];
    else only.insert(std::stoi(a));
  }
  fresh(work);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite (< 120 s)", gradients},
      {"transform structure (< 60 s)", transforms},
      {"SSIM", ssim_checks},
      {"metrics", metrics_checks},
      {"DCGAN convergence", [&] { return gan_check(work); }},
      {"synthetic end-to-end", [&] { return pipeline_check(work); }},
      {"determinism", [&] { return determinism_check(work); }},
      {"round trips", [&] { return roundtrip_check(work); }},
  };
  const std::array<double, 8> budgets = {120, 60, 0, 0, 0, 0, 0, 0};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = seconds_since(t0);
    if (budgets[i] > 0 && s >= budgets[i]) o.pass = false;
    failed += !o.pass;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": " << o.detail
              << " [" << fmt(s) << " s]" << std::endl;
  }
  return failed ? 1 : 0;
}
