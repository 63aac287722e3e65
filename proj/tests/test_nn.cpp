// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include "json.hpp"

#include "mmvae/nn.hpp"

namespace mmvae {
namespace {

// Loss v . net(x) as a function of the flat parameter vector.
double linear_loss(const DenseNet& net, std::span<const double> params, const Tensor& x, const Tensor& v) {
  DenseNet copy = net;
  assign(copy, params);
  const auto y = predict(copy, x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += v[i] * y[i];
  return s;
}

std::vector<double> analytic(const DenseNet& net, const Tensor& x, const Tensor& v) {
  auto [y, cache] = forward(net, x);
  return flatten(backward(net, cache, v));
}

TEST(Forward, IdentityLayer) {
  DenseNet net;
  net.layers.push_back({Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3}), Activation::identity});
  const auto x = Tensor::vector({0.5, -2.0, 3.25});
  EXPECT_EQ(predict(net, x), x);
}

TEST(Forward, ReluOnNegativePreactivations) {
  DenseNet net;
  net.layers.push_back({Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, {-1.0, -1.0}), Activation::relu});
  const auto y = predict(net, Tensor::vector({0.25, -4.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(Forward, FrozenTanhNet) {
  const std::array<std::size_t, 3> dims{3, 4, 2};
  const std::array<Activation, 2> acts{Activation::tanh, Activation::tanh};
  auto net = init_net(dims, acts, 11);
  for (auto& l : net.layers) {
    for (double& b : l.bias.values()) b = 0.1;
  }
  const auto y = predict(net, std::vector<double>{0.5, -1.0, 2.0});
  EXPECT_DOUBLE_EQ(y[0], -0.10331258109395687);
  EXPECT_DOUBLE_EQ(y[1], -0.49833755227706417);
}

TEST(Forward, BatchRowsMatchSingleRows) {
  const std::array<std::size_t, 3> dims{3, 5, 2};
  const std::array<Activation, 2> acts{Activation::relu, Activation::identity};
  const auto net = init_net(dims, acts, 2);
  const Tensor batch({2, 3}, {0.1, 0.2, -0.3, 1.0, -1.0, 0.5});
  const auto out = predict(net, batch);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto single = predict(net, batch.row(r));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(out.at(r, c), single[c]);
  }
}

TEST(Forward, ShapeMismatch) {
  const std::array<std::size_t, 2> dims{3, 2};
  const std::array<Activation, 1> acts{Activation::identity};
  const auto net = init_net(dims, acts, 1);
  EXPECT_THROW(forward(net, Tensor::vector({1.0, 2.0})), std::invalid_argument);
}

TEST(Forward, DoesNotMutateNet) {
  const std::array<std::size_t, 3> dims{4, 3, 2};
  const std::array<Activation, 2> acts{Activation::tanh, Activation::identity};
  const auto net = init_net(dims, acts, 8);
  const auto before = flatten(net);
  (void)forward(net, Tensor::vector({1, 2, 3, 4}));
  EXPECT_EQ(flatten(net), before);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const std::array<std::size_t, 3> dims{3, 4, 2};
  const std::array<Activation, 2> acts{Activation::tanh, Activation::relu};
  const auto net = init_net(dims, acts, 3);
  const auto g = analytic(net, Tensor::vector({1.0, -0.5, 0.25}), Tensor({2}));
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Backward, IdentityLayerWeightGradientIsOuterProduct) {
  const std::array<std::size_t, 2> dims{3, 2};
  const std::array<Activation, 1> acts{Activation::identity};
  const auto net = init_net(dims, acts, 4);
  const auto x = Tensor::vector({0.5, -1.5, 2.0});
  const auto v = Tensor::vector({3.0, -0.25});
  auto [y, cache] = forward(net, x);
  const auto g = backward(net, cache, v);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(g.layers[0].weight.at(r, c), v[r] * x[c]);
    EXPECT_EQ(g.layers[0].bias[r], v[r]);
  }
}

TEST(Backward, MatchesFiniteDifferencesOnThreeLayerNets) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (Activation hidden : {Activation::tanh, Activation::relu}) {
      const std::array<std::size_t, 4> dims{6, 7, 5, 3};
      const std::array<Activation, 3> acts{hidden, hidden, Activation::identity};
      auto net = init_net(dims, acts, seed);
      Rng rng(derive_seed(seed, "bias"));
      for (auto& l : net.layers) {
        for (double& b : l.bias.values()) b = 0.1 * rng.normal();
      }
      const auto x = Tensor::vector(rng.normal_vector(6));
      const auto v = Tensor::vector(rng.normal_vector(3));
      const auto params = flatten(net);
      const auto fd = finite_diff_grad([&](std::span<const double> p) { return linear_loss(net, p, x, v); }, params,
                                       1e-5);
      EXPECT_LT(max_relative_error(analytic(net, x, v), fd), 1e-5) << "seed " << seed << " " << to_string(hidden);
    }
  }
}

TEST(Backward, InputGradientMatchesFiniteDifferences) {
  const std::array<std::size_t, 3> dims{4, 6, 2};
  const std::array<Activation, 2> acts{Activation::tanh, Activation::identity};
  const auto net = init_net(dims, acts, 21);
  const std::vector<double> x{0.3, -0.2, 0.9, -1.1};
  const auto v = Tensor::vector({0.7, -1.3});
  auto [y, cache] = forward(net, Tensor::vector(x));
  const auto g = backward(net, cache, v);
  const auto fd = finite_diff_grad(
      [&](std::span<const double> in) {
        const auto out = predict(net, in);
        return v[0] * out[0] + v[1] * out[1];
      },
      x, 1e-5);
  EXPECT_LT(max_relative_error(g.input.values(), fd), 1e-5);
}

TEST(Backward, RejectsStaleCache) {
  const std::array<std::size_t, 2> dims{3, 2};
  const std::array<Activation, 1> acts{Activation::identity};
  auto net = init_net(dims, acts, 4);
  auto [y, cache] = forward(net, Tensor::vector({1, 2, 3}));
  const auto other = net;
  EXPECT_THROW(backward(other, cache, Tensor({2})), std::invalid_argument);
  net.layers[0] = {Tensor({4, 3}), Tensor({4}), Activation::identity};
  EXPECT_THROW(backward(net, cache, Tensor({2})), std::invalid_argument);
}

TEST(FiniteDiff, QuadraticAndConstant) {
  const std::vector<double> theta{1.5, -0.25, 3.0};
  const auto g = finite_diff_grad(
      [](std::span<const double> p) {
        double s = 0.0;
        for (double v : p) s += 0.5 * v * v;
        return s;
      },
      theta, 1e-5);
  for (std::size_t i = 0; i < theta.size(); ++i) EXPECT_NEAR(g[i], theta[i], 1e-9);
  const auto c = finite_diff_grad([](std::span<const double>) { return 4.0; }, theta, 1e-5);
  for (double v : c) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(finite_diff_grad([](std::span<const double>) { return 0.0; }, theta, 0.0), std::invalid_argument);
}

TEST(PredictFlat, DoubleMatchesPredictBitwise) {
  const std::vector<std::size_t> dims{5, 7, 6, 3};
  const std::vector<Activation> acts{Activation::relu, Activation::tanh, Activation::identity};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto net = init_net(dims, acts, seed);
    Rng rng(seed);
    for (auto* t : parameter_tensors(net)) {
      for (double& v : t->values()) v = rng.normal();
    }
    const auto x = rng.normal_vector(5);
    const auto want = predict(net, x);
    const auto params = flatten(net);
    EXPECT_EQ(predict_flat<double>(net, params, x), want);
    const std::vector<long double> pl(params.begin(), params.end()), xl(x.begin(), x.end());
    const auto ext = predict_flat<long double>(net, pl, xl);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(static_cast<double>(ext[i]), want[i], 1e-12);
  }
}

// Wide ReLU nets have gradient components near 1e-6 whose 64-bit central
// differences at h = 1e-5 carry ~1e-11 rounding; the extended loss resolves them.
TEST(FiniteDiff, ExtendedPrecisionOnWideReluNets) {
  const std::vector<std::size_t> dims{32, 64, 64, 32};
  const std::vector<Activation> acts{Activation::relu, Activation::relu, Activation::identity};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto net = init_net(dims, acts, seed);
    Rng rng(derive_seed(seed, "probe"));
    const auto x = rng.normal_vector(32);
    const auto v = rng.normal_vector(32);
    const std::vector<long double> xl(x.begin(), x.end());
    const auto fd = finite_diff_grad_as<long double>(
        [&](std::span<const long double> p) {
          const auto y = predict_flat<long double>(net, p, xl);
          long double s = 0;
          for (std::size_t i = 0; i < y.size(); ++i) s += v[i] * y[i];
          return s;
        },
        flatten(net), 1e-5);
    EXPECT_LT(max_relative_error(analytic(net, Tensor::vector(x), Tensor::vector(v)), fd), 1e-5) << "seed " << seed;
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::vector({0.5, -1.0});
  const Tensor g({2});
  std::vector<Tensor*> params{&p};
  std::vector<const Tensor*> grads{&g};
  auto state = make_adam_state(params);
  adam_step(state, params, grads);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], -1.0);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Tensor p = Tensor::vector({0.0});
  const Tensor g = Tensor::vector({1.0});
  std::vector<Tensor*> params{&p};
  std::vector<const Tensor*> grads{&g};
  auto state = make_adam_state(params);
  adam_step(state, params, grads);
  EXPECT_NEAR(p[0], -0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, QuadraticDecreasesAndConverges) {
  Tensor p = Tensor::vector({1.0});
  Tensor g({1});
  std::vector<Tensor*> params{&p};
  std::vector<const Tensor*> grads{&g};
  auto state = make_adam_state(params);
  double prev = p[0] * p[0];
  for (int t = 0; t < 10; ++t) {
    g[0] = 2.0 * p[0];
    adam_step(state, params, grads);
    EXPECT_LT(p[0] * p[0], prev);
    prev = p[0] * p[0];
  }
  for (int t = 10; t < 5000; ++t) {
    g[0] = 2.0 * p[0];
    adam_step(state, params, grads);
  }
  EXPECT_LT(std::abs(p[0]), 1e-2);
}

TEST(Adam, ShapeMismatch) {
  Tensor p = Tensor::vector({0.0, 1.0});
  const Tensor g = Tensor::vector({1.0});
  std::vector<Tensor*> params{&p};
  std::vector<const Tensor*> grads{&g};
  auto state = make_adam_state(params);
  EXPECT_THROW(adam_step(state, params, grads), std::invalid_argument);
}

TEST(InitNet, DeterministicWithZeroBias) {
  const std::array<std::size_t, 3> dims{64, 64, 10};
  const std::array<Activation, 2> acts{Activation::relu, Activation::identity};
  const auto a = init_net(dims, acts, 77);
  EXPECT_EQ(flatten(a), flatten(init_net(dims, acts, 77)));
  EXPECT_NE(flatten(a), flatten(init_net(dims, acts, 78)));
  for (const auto& l : a.layers) {
    for (double b : l.bias.values()) EXPECT_EQ(b, 0.0);
  }
}

TEST(InitNet, WeightVarianceIsOneOverFanIn) {
  const std::array<std::size_t, 2> dims{64, 64};
  const std::array<Activation, 1> acts{Activation::identity};
  const auto net = init_net(dims, acts, 20240611);
  double s = 0.0, s2 = 0.0;
  const auto w = net.layers[0].weight.values();
  for (double v : w) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var, 1.0 / 64.0, 0.2 / 64.0);
}

TEST(DenseNetJson, RoundTrip) {
  const std::array<std::size_t, 3> dims{3, 4, 2};
  const std::array<Activation, 2> acts{Activation::tanh, Activation::identity};
  const auto net = init_net(dims, acts, 5);
  const nlohmann::json j = net;
  const auto back = j.get<DenseNet>();
  EXPECT_EQ(flatten(back), flatten(net));
  EXPECT_EQ(back.layers[0].activation, Activation::tanh);
}

}  // namespace
}  // namespace mmvae
