#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "faultface/nn/adam.hpp"
#include "faultface/nn/checkpoint.hpp"
#include "faultface/nn/grad_check.hpp"
#include "faultface/nn/loss.hpp"
#include "faultface/nn/network.hpp"
#include "oracles.hpp"

using namespace faultface;
using namespace faultface::nn;

namespace {

NdArray random_array(Shape s, Rng& rng, double scale = 1.0) {
  NdArray a(std::move(s));
  for (auto& v : a.data) v = scale * gaussian(rng);
  return a;
}

double max_abs_diff(const NdArray& a, const NdArray& b) {
  EXPECT_EQ(a.shape, b.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void randomize(ParamSet& p, Rng& rng) {
  for (auto& l : p.layers)
    for (auto& t : l.trainable)
      for (auto& v : t.data) v = 0.3 * gaussian(rng);
}

}  // namespace

TEST(Shapes, StaticInferenceAndErrors) {
  NetworkSpec net{{1, 28, 28}, {Conv{1, 4, 2}, Conv{4, 8, 2}, Conv{8, 8, 2}, Flatten{}, Dense{128, 1}}};
  const auto shapes = infer_shapes(net);
  EXPECT_EQ(shapes[1], (Shape{4, 14, 14}));
  EXPECT_EQ(shapes[2], (Shape{8, 7, 7}));
  EXPECT_EQ(shapes[3], (Shape{8, 4, 4}));
  EXPECT_EQ(shapes.back(), (Shape{1}));
  NetworkSpec bad{{1, 28, 28}, {Conv{1, 4, 1}, Dense{10, 2}}};
  try {
    infer_shapes(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
  const auto p = init_params(net, 1);
  EXPECT_THROW(forward(net, p, NdArray({2, 1, 27, 28}), Mode::Infer), Error);
}

TEST(Forward, IdentityDenseReturnsInput) {
  NetworkSpec net{{5}, {Dense{5, 5}}};
  auto p = init_params(net, 1);
  p.layers[0].trainable[0] = NdArray({5, 5}, 0.0);
  for (std::size_t i = 0; i < 5; ++i) p.layers[0].trainable[0][i * 5 + i] = 1.0;
  Rng rng(2);
  const auto x = random_array({3, 5}, rng);
  EXPECT_EQ(infer(net, p, x), x);
}

TEST(Forward, DeltaKernelConvReturnsInput) {
  NetworkSpec net{{1, 9, 7}, {Conv{1, 1, 1}}};
  auto p = init_params(net, 1);
  p.layers[0].trainable[0] = NdArray({1, 1, 3, 3}, 0.0);
  p.layers[0].trainable[0][4] = 1.0;
  Rng rng(3);
  const auto x = random_array({2, 1, 9, 7}, rng);
  EXPECT_EQ(infer(net, p, x), x);
}

TEST(Forward, RandomConvStackMatchesNestedLoopOracle) {
  Rng rng(4);
  for (std::size_t stride : {1, 2}) {
    NetworkSpec net{{2, 9, 8}, {Conv{2, 3, stride}, Conv{3, 2, 2}}};
    auto p = init_params(net, 5);
    randomize(p, rng);
    const auto x = random_array({4, 2, 9, 8}, rng);
    const auto h = oracle::conv2d(x, p.layers[0].trainable[0], p.layers[0].trainable[1], stride);
    const auto y = oracle::conv2d(h, p.layers[1].trainable[0], p.layers[1].trainable[1], 2);
    EXPECT_LT(max_abs_diff(infer(net, p, x), y), 1e-12);
  }
}

// Stride 1 with more than four output channels takes the im2col path instead of the direct loop.
TEST(Forward, WideStrideOneConvMatchesOracle) {
  Rng rng(5);
  NetworkSpec narrow{{3, 30, 29}, {Conv{3, 4, 1}}}, wide{{3, 30, 29}, {Conv{3, 7, 1}}};
  for (const auto& net : {narrow, wide}) {
    auto p = init_params(net, 6);
    randomize(p, rng);
    const auto x = random_array({3, 3, 30, 29}, rng);
    EXPECT_LT(max_abs_diff(infer(net, p, x), oracle::conv2d(x, p.layers[0].trainable[0], p.layers[0].trainable[1], 1)), 1e-12);
  }
}

TEST(Forward, TransposedConvMatchesUpsampleThenConvOracle) {
  Rng rng(6);
  NetworkSpec net{{3, 5, 4}, {TConv{3, 2}, Flatten{}, Dense{2 * 10 * 8, 3}}};
  auto p = init_params(net, 7);
  randomize(p, rng);
  const auto x = random_array({4, 3, 5, 4}, rng);
  const auto up = oracle::tconv2d(x, p.layers[0].trainable[0], p.layers[0].trainable[1]);
  const auto flat = NdArray({4, 160}, up.data);
  const auto y = oracle::dense(flat, p.layers[2].trainable[0], p.layers[2].trainable[1]);
  const auto out = forward(net, p, x, Mode::Train);
  EXPECT_LT(max_abs_diff(out.tape.acts[1], up), 1e-12);
  EXPECT_LT(max_abs_diff(out.output, y), 1e-12);
}

TEST(Forward, MaxPoolAndActivations) {
  NetworkSpec net{{1, 4, 4}, {MaxPool{}}};
  const auto p = init_params(net, 1);
  NdArray x({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>((i * 7) % 16);
  const auto y = infer(net, p, x);
  ASSERT_EQ(y.shape, (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y[0], std::max({x[0], x[1], x[4], x[5]}));
  EXPECT_EQ(y[3], std::max({x[10], x[11], x[14], x[15]}));

  NetworkSpec acts{{4}, {Activation{Act::LeakyReLU, 0.2}}};
  const auto z = infer(acts, init_params(acts, 1), NdArray({1, 4}, {-1.0, 0.0, 2.0, -5.0}));
  EXPECT_EQ(z, NdArray({1, 4}, {-0.2, 0.0, 2.0, -1.0}));
  NetworkSpec sig{{2}, {Activation{Act::Sigmoid}}};
  const auto s = infer(sig, init_params(sig, 1), NdArray({1, 2}, {-800.0, 800.0}));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
}

TEST(BatchNorm, TrainOutputHasZeroMeanUnitVariance) {
  Rng rng(8);
  NetworkSpec net{{3, 4, 4}, {BatchNorm{3}}};
  const auto p = init_params(net, 1);
  for (std::size_t n : {8, 16}) {
    const auto x = random_array({n, 3, 4, 4}, rng, 3.0);
    const auto y = forward(net, p, x, Mode::Train).output;
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0, ss = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t q = 0; q < 16; ++q) s += y[(ni * 3 + c) * 16 + q];
      const double mean = s / (n * 16.0);
      for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t q = 0; q < 16; ++q) ss += std::pow(y[(ni * 3 + c) * 16 + q] - mean, 2);
      EXPECT_LT(std::abs(mean), 1e-6);
      EXPECT_NEAR(ss / (n * 16.0), 1.0, 1e-4);
    }
  }
}

TEST(BatchNorm, RunningStatsReturnedNotMutated) {
  Rng rng(9);
  NetworkSpec net{{2}, {BatchNorm{2}}};
  auto p = init_params(net, 1);
  const auto before = p;
  const auto x = random_array({8, 2}, rng, 2.0);
  const auto r = forward(net, p, x, Mode::Train);
  EXPECT_EQ(p, before);
  ASSERT_EQ(r.state[0].size(), 2u);
  EXPECT_NE(r.state[0][0], p.layers[0].state[0]);
  apply_state(p, r.state);
  EXPECT_EQ(p.layers[0].state, r.state[0]);
  const auto inf = forward(net, p, x, Mode::Infer);
  EXPECT_EQ(inf.state[0], p.layers[0].state);
}

TEST(Backward, ZeroOutputGradGivesZeroGrads) {
  Rng rng(10);
  NetworkSpec net{{1, 6, 6}, {Conv{1, 2, 1}, BatchNorm{2}, Activation{Act::ReLU}, MaxPool{}, Flatten{}, Dense{18, 2}}};
  const auto p = init_params(net, 3);
  const auto fwd = forward(net, p, random_array({4, 1, 6, 6}, rng), Mode::Train);
  const auto b = backward(net, p, fwd.tape, NdArray(fwd.output.shape, 0.0));
  for (const auto& l : b.grads.layers)
    for (const auto& t : l)
      for (double v : t.data) EXPECT_EQ(v, 0.0);
  for (double v : b.input_grad.data) EXPECT_EQ(v, 0.0);
}

TEST(Backward, DenseWeightGradIsOuterProduct) {
  Rng rng(11);
  NetworkSpec net{{3}, {Dense{3, 2}}};
  const auto p = init_params(net, 1);
  const auto x = random_array({1, 3}, rng);
  const auto g = random_array({1, 2}, rng);
  const auto b = backward(net, p, forward(net, p, x, Mode::Train).tape, g);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(b.grads.layers[0][0][o * 3 + i], g[o] * x[i]);
  EXPECT_EQ(b.grads.layers[0][1].data, g.data);
}

TEST(Backward, RejectsMismatchedTapes) {
  NetworkSpec net{{3}, {Dense{3, 2}}};
  NetworkSpec other{{3}, {Dense{3, 2}, Activation{Act::Tanh}}};
  const auto p = init_params(net, 1);
  const auto x = NdArray({1, 3}, 0.5);
  const auto infer_tape = forward(net, p, x, Mode::Infer).tape;
  EXPECT_THROW(backward(net, p, infer_tape, NdArray({1, 2})), Error);
  const auto train_tape = forward(net, p, x, Mode::Train).tape;
  EXPECT_THROW(backward(other, init_params(other, 1), train_tape, NdArray({1, 2})), Error);
  EXPECT_THROW(backward(net, p, train_tape, NdArray({1, 3})), Error);
}

TEST(Backward, DoesNotMutateInputs) {
  Rng rng(12);
  NetworkSpec net{{1, 4, 4}, {TConv{1, 2}, BatchNorm{2}, Activation{Act::Tanh}}};
  const auto p = init_params(net, 2);
  const auto p_copy = p;
  const auto x = random_array({3, 1, 4, 4}, rng);
  const auto fwd = forward(net, p, x, Mode::Train);
  const auto tape_copy = fwd.tape.acts;
  backward(net, p, fwd.tape, random_array(fwd.output.shape, rng));
  EXPECT_EQ(p, p_copy);
  EXPECT_EQ(fwd.tape.acts, tape_copy);
}

TEST(GradCheck, EveryLayerTypeMatchesFiniteDifferences) {
  const std::vector<NetworkSpec> nets = {
      {{2, 5, 5}, {Conv{2, 3, 1}}},
      {{2, 5, 6}, {Conv{2, 3, 2}}},
      {{2, 3, 3}, {TConv{2, 2}}},
      {{6}, {Dense{6, 4}}},
      {{3, 3, 3}, {BatchNorm{3}}},
      {{5}, {BatchNorm{5}}},
      {{2, 4, 4}, {MaxPool{}}},
      {{2, 2, 3}, {Flatten{}, Reshape{{3, 2, 2}}}},
      {{7}, {Activation{Act::ReLU}}},
      {{7}, {Activation{Act::LeakyReLU, 0.2}}},
      {{7}, {Activation{Act::Tanh}}},
      {{7}, {Activation{Act::Sigmoid}}},
  };
  for (const auto& net : nets)
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = grad_check(net, seed);
      EXPECT_TRUE(r.passed()) << layer_name(net.layers[0]) << " seed " << seed << " err " << r.max_error();
    }
}

TEST(GradCheck, SingleActivationIsTight) {
  for (auto a : {Act::Tanh, Act::Sigmoid, Act::LeakyReLU}) {
    const auto r = grad_check({{9}, {Activation{a}}}, 3);
    EXPECT_LT(r.max_error(), 1e-8) << act_name(a);
  }
}

TEST(GradCheck, ConvBatchNormLeakyStack) {
  NetworkSpec net{{1, 6, 6}, {Conv{1, 3, 2}, BatchNorm{3}, Activation{Act::LeakyReLU, 0.2}, Flatten{}, Dense{27, 2}}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(grad_check(net, seed).max_error(), 1e-5);
}

TEST(GradCheck, SameSeedSameReport) {
  NetworkSpec net{{1, 4, 4}, {Conv{1, 2, 1}, Activation{Act::ReLU}, MaxPool{}}};
  const auto a = grad_check(net, 42), b = grad_check(net, 42);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].layer, b.entries[i].layer);
    EXPECT_EQ(a.entries[i].max_rel_error, b.entries[i].max_rel_error);
    EXPECT_EQ(a.entries[i].checked, b.entries[i].checked);
  }
}

TEST(Bce, PerfectPredictionIsNearZero) {
  const auto r = loss_bce(NdArray({4}, 1.0), NdArray({4}, 1.0));
  EXPECT_LE(r.loss, 1e-6);
}

TEST(Bce, HalfPredictionIsLn2) {
  Rng rng(13);
  NdArray t({10});
  for (auto& v : t.data) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  EXPECT_NEAR(loss_bce(NdArray({10}, 0.5), t).loss, std::log(2.0), 1e-15);
}

TEST(Bce, GradientMatchesFiniteDifferences) {
  Rng rng(14);
  NdArray p({3, 2}), t({3, 2});
  for (auto& v : p.data) v = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
  for (auto& v : t.data) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto r = loss_bce(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto hi = p, lo = p;
    hi[i] += 1e-6;
    lo[i] -= 1e-6;
    const double fd = (loss_bce(hi, t).loss - loss_bce(lo, t).loss) / 2e-6;
    EXPECT_LT(std::abs(fd - r.grad[i]) / std::abs(r.grad[i]), 1e-6);
  }
  EXPECT_THROW(loss_bce(NdArray({2}), NdArray({3})), Error);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  NetworkSpec net{{3}, {Dense{3, 2}}};
  const auto p = init_params(net, 1);
  const auto s = make_adam_state(p, 0.1);
  const auto r = adam_step(p, zero_grads(p), s);
  EXPECT_EQ(r.params, p);
  EXPECT_EQ(r.state.t, 1u);
}

TEST(Adam, ScalarRecurrenceMatchesHandEvaluation) {
  ParamSet p;
  p.layers.push_back({{NdArray({1}, 0.0)}, {}});
  GradSet g;
  g.layers.push_back({NdArray({1}, 1.0)});
  auto s = make_adam_state(p, 0.1, 0.9, 0.999, 1e-8);
  // with g = 1 constant: m_hat = v_hat = 1 every step, so each step moves by -lr / (1 + eps)
  double expected = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    adam_update(p, g, s);
    m = 0.9 * m + 0.1;
    v = 0.999 * v + 0.001;
    expected -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.layers[0].trainable[0][0], expected, 1e-15);
    EXPECT_NEAR(p.layers[0].trainable[0][0], -0.1 * t / (1 + 1e-8), 1e-12);
  }
}

TEST(Adam, PureAndDeterministic) {
  Rng rng(15);
  NetworkSpec net{{4}, {Dense{4, 3}, BatchNorm{3}}};
  const auto p = init_params(net, 2);
  auto g = zero_grads(p);
  for (auto& l : g.layers)
    for (auto& t : l)
      for (auto& v : t.data) v = gaussian(rng);
  const auto s = make_adam_state(p, 0.01, 0.5);
  const auto p_copy = p;
  const auto a = adam_step(p, g, s);
  const auto b = adam_step(p, g, s);
  EXPECT_EQ(p, p_copy);
  EXPECT_EQ(s.t, 0u);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.state.m, b.state.m);
  GradSet wrong;
  EXPECT_THROW(adam_step(p, wrong, s), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(16);
  NetworkSpec net{{1, 4, 4}, {Conv{1, 2, 2}, BatchNorm{2}, Flatten{}, Dense{8, 1}}};
  auto p = init_params(net, 3);
  randomize(p, rng);
  p.layers[1].state[0][1] = -0.0;
  p.layers[1].state[1][0] = std::numeric_limits<double>::denorm_min();
  std::stringstream buf;
  write_checkpoint(p, buf);
  const auto q = read_checkpoint(buf);
  ASSERT_EQ(q.layers.size(), p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    for (std::size_t k = 0; k < p.layers[l].trainable.size(); ++k)
      EXPECT_EQ(std::memcmp(p.layers[l].trainable[k].ptr(), q.layers[l].trainable[k].ptr(),
                            8 * p.layers[l].trainable[k].size()),
                0);
  EXPECT_TRUE(std::signbit(q.layers[1].state[0][1]));
  EXPECT_NO_THROW(check_params_match(net, q));
  NetworkSpec other{{1, 4, 4}, {Conv{1, 3, 2}, BatchNorm{3}, Flatten{}, Dense{12, 1}}};
  EXPECT_THROW(check_params_match(other, q), Error);
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream bad("NOPE");
  EXPECT_THROW(read_checkpoint(bad), Error);
  NetworkSpec net{{2}, {Dense{2, 2}}};
  std::stringstream buf;
  write_checkpoint(init_params(net, 1), buf);
  auto s = buf.str();
  std::stringstream truncated(s.substr(0, s.size() - 5));
  EXPECT_THROW(read_checkpoint(truncated), Error);
}
