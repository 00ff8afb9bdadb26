#pragma once
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "faultface/behavior.hpp"
#include "faultface/error.hpp"
#include "faultface/metrics.hpp"
#include "faultface/model.hpp"
#include "faultface/nn/adam.hpp"
#include "faultface/nn/checkpoint.hpp"
#include "faultface/nn/loss.hpp"
#include "faultface/nn/network.hpp"
#include "faultface/portrait.hpp"
#include "faultface/rng.hpp"
#include "json.hpp"

namespace faultface {

struct ClassifierConfig {
  std::size_t epochs = 100;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t train_per_class = 300;
  std::size_t val_per_class = 700;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::vector<std::size_t> widths = {16, 32, 64};
};

inline void validate(const ClassifierConfig& c) {
  auto fail = [](const std::string& what) { return config_error("classifier config: " + what); };
  if (!(c.learning_rate > 0.0)) throw fail("learning_rate must be positive");
  if (c.batch_size == 0) throw fail("batch_size must be positive");
  if (c.train_per_class == 0 || c.val_per_class == 0) throw fail("train/val sizes must be positive");
  if (c.widths.size() != 3) throw fail("three convolution widths required");
  for (auto w : c.widths)
    if (w == 0) throw fail("zero width");
}

/// Three 3x3 convs (ReLU), pooling after the first two only: 28 -> 14 -> 7, then six sigmoid outputs.
inline Net build_cnn(const ClassifierConfig& cfg) {
  validate(cfg);
  using namespace nn;
  const auto& w = cfg.widths;
  Net n;
  n.spec = {{1, kSide, kSide},
            {Conv{1, w[0], 1}, Activation{Act::ReLU}, MaxPool{}, Conv{w[0], w[1], 1}, Activation{Act::ReLU}, MaxPool{},
             Conv{w[1], w[2], 1}, Activation{Act::ReLU}, Flatten{}, Dense{w[2] * 7 * 7, kNumClasses},
             Activation{Act::Sigmoid}}};
  // He-normal weights: unit draws scaled by sqrt(2 / fan_in); biases stay zero.
  n.params = init_params(n.spec, derive_seed(cfg.seed, "cnn-init"), 1.0);
  for (std::size_t l = 0; l < n.spec.layers.size(); ++l) {
    std::size_t fan_in = 0;
    if (const auto* c = std::get_if<Conv>(&n.spec.layers[l])) fan_in = c->in_ch * kTaps;
    if (const auto* d = std::get_if<Dense>(&n.spec.layers[l])) fan_in = d->in;
    if (fan_in == 0) continue;
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : n.params.layers[l].trainable[0].data) v *= scale;
  }
  return n;
}

struct Prediction {
  BehaviorClass cls = BehaviorClass::Nominal;
  std::array<double, kNumClasses> scores{};
};

/// Argmax; the lowest index wins ties.
inline std::size_t argmax_index(const double* s) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumClasses; ++i)
    if (s[i] > s[best]) best = i;
  return best;
}

inline Prediction make_prediction(const double* s) {
  Prediction p;
  std::copy(s, s + kNumClasses, p.scores.begin());
  p.cls = class_at(argmax_index(s));
  return p;
}

namespace detail {

inline nn::NdArray portrait_batch(const std::vector<const Portrait*>& ps) {
  nn::NdArray b({ps.size(), 1, kSide, kSide});
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < kWindowLength; ++j) b[i * kWindowLength + j] = ps[i]->pixels[j] / 255.0;
  return b;
}

inline nn::NdArray one_hot(const std::vector<const Portrait*>& ps) {
  nn::NdArray t({ps.size(), kNumClasses}, 0.0);
  for (std::size_t i = 0; i < ps.size(); ++i) t[i * kNumClasses + index_of(ps[i]->label)] = 1.0;
  return t;
}

}  // namespace detail

inline Prediction predict(const Net& net, const Portrait& p) {
  const auto y = nn::infer(net.spec, net.params, detail::portrait_batch({&p}));
  return make_prediction(y.ptr());
}

/// One forward per portrait: batched GEMMs block differently by batch size, so this keeps every
/// score bit-identical to a single predict call.
inline std::vector<Prediction> predict_batch(const Net& net, const std::vector<const Portrait*>& ps) {
  std::vector<Prediction> out;
  out.reserve(ps.size());
  for (const auto* p : ps) out.push_back(predict(net, *p));
  return out;
}

inline std::vector<Prediction> predict_batch(const Net& net, const std::vector<Portrait>& ps) {
  std::vector<const Portrait*> ptrs;
  for (const auto& p : ps) ptrs.push_back(&p);
  return predict_batch(net, ptrs);
}

/// Rows = predicted class, columns = true class.
inline ConfusionMatrix evaluate(const Net& net, const std::vector<const Portrait*>& ps) {
  if (ps.empty()) throw data_error("evaluate: no portraits");
  ConfusionMatrix cm;
  const auto preds = predict_batch(net, ps);
  for (std::size_t i = 0; i < ps.size(); ++i) cm.add(preds[i].cls, ps[i]->label);
  return cm;
}

inline ConfusionMatrix evaluate(const Net& net, const std::vector<Portrait>& ps) {
  std::vector<const Portrait*> ptrs;
  for (const auto& p : ps) ptrs.push_back(&p);
  return evaluate(net, ptrs);
}

inline double accuracy(const ConfusionMatrix& cm) {
  return cm.total() == 0 ? 0.0 : static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

/// Mean one-hot BCE over a portrait set in Infer mode.
inline double mean_loss(const Net& net, const std::vector<const Portrait*>& ps) {
  if (ps.empty()) throw data_error("mean_loss: no portraits");
  double acc = 0.0;
  for (const auto* p : ps)
    acc += nn::loss_bce(nn::infer(net.spec, net.params, detail::portrait_batch({p})), detail::one_hot({p})).loss;
  return acc / static_cast<double>(ps.size());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_acc = 0.0;  // on each minibatch before its update
  double val_acc = 0.0;    // after the epoch
  double loss = 0.0;       // mean minibatch loss
};

struct Split {
  std::vector<std::size_t> train;  // indices into the input data
  std::vector<std::size_t> val;
};

/// Per class: seeded shuffle of that class's portraits, first train_per_class to training, the next
/// val_per_class to validation. Extra portraits are left unused.
inline Split split_dataset(const std::vector<Portrait>& data, const ClassifierConfig& cfg) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[index_of(data[i].label)].push_back(i);
  Split s;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    const std::size_t need = cfg.train_per_class + cfg.val_per_class;
    if (idx.size() < need)
      throw data_error("train_cnn: class " + std::string(name_of(class_at(c))) + " has " + std::to_string(idx.size()) +
                       " portraits, needs " + std::to_string(need));
    Rng rng(derive_seed(cfg.seed, "cnn-split", c));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + cfg.train_per_class);
    s.val.insert(s.val.end(), idx.begin() + cfg.train_per_class, idx.begin() + need);
  }
  return s;
}

struct ClassifierResult {
  Net net;
  std::vector<EpochRecord> history;
  Split split;
};

inline ClassifierResult train_cnn(Net net, const std::vector<Portrait>& data, const ClassifierConfig& cfg) {
  using namespace nn;
  validate(cfg);
  for (const auto& p : data)
    if (p.kind != data.front().kind) throw data_error("train_cnn: portraits of mixed kinds");
  ClassifierResult r;
  r.split = split_dataset(data, cfg);
  std::vector<const Portrait*> val;
  for (auto i : r.split.val) val.push_back(&data[i]);
  auto order = r.split.train;
  auto opt = make_adam_state(net.params, cfg.learning_rate, cfg.beta1, cfg.beta2);
  Rng shuffle(derive_seed(cfg.seed, "cnn-shuffle"));
  std::vector<const Portrait*> batch;
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle, i)]);
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = s; i < std::min(order.size(), s + cfg.batch_size); ++i) batch.push_back(&data[order[i]]);
      const auto fwd = forward(net.spec, net.params, faultface::detail::portrait_batch(batch), Mode::Train);
      const auto loss = loss_bce(fwd.output, faultface::detail::one_hot(batch));
      if (!std::isfinite(loss.loss))
        throw numeric_error("train_cnn: loss is not finite in epoch " + std::to_string(e));
      for (std::size_t i = 0; i < batch.size(); ++i)
        correct += class_at(argmax_index(fwd.output.ptr() + i * kNumClasses)) == batch[i]->label;
      loss_sum += loss.loss * static_cast<double>(batch.size());
      adam_update(net.params, backward(net.spec, net.params, fwd.tape, loss.grad).grads, opt);
    }
    const double n = static_cast<double>(order.size());
    r.history.push_back({e, static_cast<double>(correct) / n, accuracy(evaluate(net, val)), loss_sum / n});
  }
  r.net = std::move(net);
  return r;
}

inline void write_history_csv(const std::vector<EpochRecord>& h, std::ostream& out) {
  out << "epoch,train_acc,val_acc\n";
  for (const auto& r : h) out << r.epoch << ',' << fixed6(r.train_acc) << ',' << fixed6(r.val_acc) << '\n';
}

inline nlohmann::ordered_json to_json(const ClassifierConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["train_per_class"] = c.train_per_class;
  j["val_per_class"] = c.val_per_class;
  j["seed"] = c.seed;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["widths"] = c.widths;
  return j;
}

inline ClassifierConfig classifier_config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.epochs = j.at("epochs");
  c.learning_rate = j.at("learning_rate");
  c.batch_size = j.at("batch_size");
  c.train_per_class = j.at("train_per_class");
  c.val_per_class = j.at("val_per_class");
  c.seed = j.at("seed");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  return c;
}

/// Writes `<stem>.ffnn` and the `<stem>.json` sidecar.
inline void save_cnn(const Net& net, const ClassifierConfig& cfg, PortraitKind kind, const std::filesystem::path& stem) {
  nn::save_checkpoint(net.params, stem.string() + ".ffnn");
  nlohmann::ordered_json meta;
  meta["kind"] = name_of(kind);
  meta["config"] = to_json(cfg);
  std::ofstream out(stem.string() + ".json");
  if (!out) throw data_error("cannot write '" + stem.string() + ".json'");
  out << meta.dump(2) << '\n';
}

struct LoadedCnn {
  Net net;
  PortraitKind kind = PortraitKind::CwtMorse;
};

inline LoadedCnn load_cnn(const std::filesystem::path& stem) {
  std::ifstream in(stem.string() + ".json");
  if (!in) throw data_error("cannot open '" + stem.string() + ".json'");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw data_error("bad classifier metadata '" + stem.string() + ".json': " + e.what());
  }
  const auto kind = parse_kind(meta.at("kind").get<std::string>());
  if (!kind) throw data_error("bad classifier metadata '" + stem.string() + ".json'");
  LoadedCnn r{build_cnn(classifier_config_from_json(meta.at("config"))), *kind};
  r.net.params = nn::load_checkpoint(stem.string() + ".ffnn");
  nn::check_params_match(r.net.spec, r.net.params);
  return r;
}

}  // namespace faultface
