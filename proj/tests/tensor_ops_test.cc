// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mrcae/errors.h"
#include "mrcae/ops.h"
#include "test_util.h"

namespace mrcae {
namespace {

using testing::conv1d_reference;
using testing::conv_transpose1d_reference;
using testing::dot;
using testing::max_abs_diff;
using testing::random_filters;
using testing::random_tensor;

// ---------------------------------------------------------------------------
// conv1d

TEST(Conv1d, ZeroInputZeroBiasGivesZero) {
  std::mt19937_64 rng(1);
  auto p = random_filters<double>(3, 2, 5, 3, rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  const Tensor3<double> x(2, 2, 9);
  const auto y = conv1d(x, p);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv1d, CenteredImpulseIsIdentity) {
  Tensor3<double> x(1, 1, 4);
  for (int t = 0; t < 4; ++t) x(0, 0, t) = t + 1;
  FilterSetParams<double> p(1, 1, 3, 1);
  p.w(0, 0, 1) = 1.0;
  const auto y = conv1d(x, p);
  EXPECT_EQ(y.storage(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Conv1d, EvenLengthPutsExtraPadOnTheRight) {
  // Length 4: left pad 1, right pad 2, so tap 1 is the identity tap.
  EXPECT_EQ(same_pad_left(4), 1u);
  Tensor3<double> x(1, 1, 5);
  for (int t = 0; t < 5; ++t) x(0, 0, t) = t + 1;
  FilterSetParams<double> p(1, 1, 4, 1);
  p.w(0, 0, 3) = 1.0;  // reads x[t + 2]
  EXPECT_EQ(conv1d(x, p).storage(), (std::vector<double>{3, 4, 5, 0, 0}));
}

TEST(Conv1d, MatchesDirectSumOracle) {
  std::mt19937_64 rng(11);
  const auto x = random_tensor<double>(1, 2, 8, rng);
  const auto p = random_filters<double>(3, 2, 5, 3, rng);
  EXPECT_LT(max_abs_diff(conv1d(x, p), conv1d_reference(x, p)), 1e-12);
}

TEST(Conv1d, RandomizedOracleEquivalence) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> len(1, 64), taps(1, 9), ch(1, 4), bt(1, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = len(rng), a = taps(rng), c = ch(rng), k = ch(rng), b = bt(rng);
    const auto x = random_tensor<double>(b, c, n, rng);
    const auto p = random_filters<double>(k, c, a, k, rng);
    ASSERT_LT(max_abs_diff(conv1d(x, p), conv1d_reference(x, p)), 1e-12)
        << "n=" << n << " a=" << a;
  }
}

TEST(Conv1d, SinglePrecisionWithinTolerance) {
  std::mt19937_64 rng(13);
  const auto x = random_tensor<double>(2, 3, 64, rng);
  const auto p = random_filters<double>(4, 3, 9, 4, rng);
  const auto yf = conv1d(tensor_cast<float>(x), [&] {
    FilterSetParams<float> q(4, 3, 9, 4);
    std::copy(p.weights.begin(), p.weights.end(), q.weights.begin());
    std::copy(p.bias.begin(), p.bias.end(), q.bias.begin());
    return q;
  }());
  EXPECT_LT(max_abs_diff(tensor_cast<double>(yf), conv1d_reference(x, p)), 1e-5);
}

TEST(Conv1d, ChannelMismatchIsConfigError) {
  std::mt19937_64 rng(14);
  const auto p = random_filters<double>(2, 3, 3, 2, rng);
  EXPECT_THROW(conv1d(Tensor3<double>(1, 2, 8), p), ConfigError);
}

TEST(Conv1d, NonFiniteInputIsNumericError) {
  std::mt19937_64 rng(15);
  const auto p = random_filters<double>(2, 1, 3, 2, rng);
  Tensor3<double> x(1, 1, 4);
  x(0, 0, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(conv1d(x, p), NumericError);
}

// ---------------------------------------------------------------------------
// conv_transpose1d

TEST(ConvTranspose1d, ZeroInputZeroBiasGivesZero) {
  std::mt19937_64 rng(2);
  auto p = random_filters<double>(3, 2, 5, 2, rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  const auto y = conv_transpose1d(Tensor3<double>(1, 3, 7), p);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ConvTranspose1d, UnitLengthFiltersAreTransposedMatrix) {
  std::mt19937_64 rng(3);
  auto p = random_filters<double>(3, 2, 1, 2, rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  const auto u = random_tensor<double>(1, 3, 6, rng);
  const auto y = conv_transpose1d(u, p);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < 6; ++t) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += p.w(k, c, 0) * u(0, k, t);
      EXPECT_NEAR(y(0, c, t), s, 1e-15);
    }
  }
}

TEST(ConvTranspose1d, AdjointIdentity) {
  std::mt19937_64 rng(4);
  const auto u = random_tensor<double>(1, 3, 16, rng);
  const auto v = random_tensor<double>(1, 2, 16, rng);
  const auto conv_p = random_filters<double>(3, 2, 5, 3, rng);
  FilterSetParams<double> tr_p = conv_p;
  tr_p.bias.assign(2, 0.7);
  auto conv_nobias = conv_p;
  std::fill(conv_nobias.bias.begin(), conv_nobias.bias.end(), 0.0);
  auto ty = conv_transpose1d(u, tr_p);
  for (auto& e : ty.data()) e -= 0.7;
  const double lhs = dot(u, conv1d(v, conv_nobias));
  const double rhs = dot(ty, v);
  EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs)));
}

TEST(ConvTranspose1d, RandomizedOracleEquivalence) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(1, 64), taps(1, 9), ch(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = len(rng), a = taps(rng), c = ch(rng), k = ch(rng);
    const auto u = random_tensor<double>(2, k, n, rng);
    const auto p = random_filters<double>(k, c, a, c, rng);
    ASSERT_LT(max_abs_diff(conv_transpose1d(u, p), conv_transpose1d_reference(u, p)),
              1e-12);
  }
}

TEST(ConvTranspose1d, ChannelMismatchIsConfigError) {
  std::mt19937_64 rng(6);
  const auto p = random_filters<double>(3, 2, 3, 2, rng);
  EXPECT_THROW(conv_transpose1d(Tensor3<double>(1, 2, 8), p), ConfigError);
}

// ---------------------------------------------------------------------------
// batchnorm, elu, l1, concat

TEST(BatchNorm, ConstantChannelsMapToZero) {
  Tensor3<double> x(2, 2, 5);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t t = 0; t < 5; ++t) {
      x(b, 0, t) = 3.0;
      x(b, 1, t) = -1.5;
    }
  }
  BatchNormParams<double> p(2);
  const auto y = batchnorm(x, p, Mode::kTrain);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, HandOracle) {
  Tensor3<double> x(1, 1, 3);
  x(0, 0, 0) = 1;
  x(0, 0, 1) = 2;
  x(0, 0, 2) = 3;
  BatchNormParams<double> p(1);
  const auto y = batchnorm(x, p, Mode::kTrain);
  const double s = 1.0 / std::sqrt(2.0 / 3.0 + 1e-3);
  EXPECT_NEAR(y(0, 0, 0), -s, 1e-12);
  EXPECT_NEAR(y(0, 0, 1), 0.0, 1e-12);
  EXPECT_NEAR(y(0, 0, 2), s, 1e-12);
  EXPECT_NEAR(s, 1.2238, 1e-4);
  // running <- 0.99 * running + 0.01 * batch stat
  EXPECT_NEAR(p.running_mean[0], 0.01 * 2.0, 1e-15);
  EXPECT_NEAR(p.running_var[0], 0.99 * 1.0 + 0.01 * (2.0 / 3.0), 1e-15);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  std::mt19937_64 rng(7);
  const auto x = random_tensor<double>(3, 2, 6, rng);
  BatchNormParams<double> p(2);
  p.gamma = {0.0, 0.0};
  p.beta = {0.25, -2.0};
  const auto y = batchnorm(x, p, Mode::kTrain);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t t = 0; t < 6; ++t) {
      EXPECT_EQ(y(b, 0, t), 0.25);
      EXPECT_EQ(y(b, 1, t), -2.0);
    }
  }
}

TEST(BatchNorm, InferUsesRunningStatsOnly) {
  std::mt19937_64 rng(8);
  const auto x = random_tensor<double>(2, 1, 5, rng);
  BatchNormParams<double> p(1);
  p.running_mean = {0.5};
  p.running_var = {4.0};
  p.gamma = {2.0};
  p.beta = {1.0};
  const auto before = p;
  const auto y = batchnorm(x, p, Mode::kInfer);
  EXPECT_EQ(p, before);
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    EXPECT_NEAR(y.data()[i], 2.0 * (x.data()[i] - 0.5) / std::sqrt(4.0 + 1e-3) + 1.0, 1e-12);
  }
  EXPECT_EQ(batchnorm_infer(x, p), y);
}

TEST(BatchNorm, ZeroChannelsIsConfigError) {
  BatchNormParams<double> p(0);
  EXPECT_THROW(batchnorm(Tensor3<double>(1, 0, 4), p, Mode::kTrain), ConfigError);
}

TEST(Elu, ClosedForms) {
  Tensor3<double> x(1, 1, 3);
  x(0, 0, 0) = 0.0;
  x(0, 0, 1) = 1.5;
  x(0, 0, 2) = -1.0;
  const auto y = elu(x);
  EXPECT_EQ(y(0, 0, 0), 0.0);
  EXPECT_EQ(y(0, 0, 1), 1.5);
  EXPECT_NEAR(y(0, 0, 2), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(y(0, 0, 2), -0.63212, 1e-5);
}

TEST(L1Loss, DirectSums) {
  Tensor3<double> p(1, 1, 3), t(1, 1, 3);
  EXPECT_EQ(l1_loss(p, t), 0.0);
  p(0, 0, 0) = 1.0;
  p(0, 0, 1) = -2.0;
  p(0, 0, 2) = 0.5;
  EXPECT_EQ(l1_loss(p, t), 3.5);
  EXPECT_THROW(l1_loss(p, Tensor3<double>(1, 1, 4)), ConfigError);
}

TEST(L1Loss, TieSubgradientIsZero) {
  Tape<double> tape;
  Tensor3<double> target(1, 1, 3);
  target(0, 0, 0) = 1.0;
  Tensor3<double> pred(1, 1, 3);
  pred(0, 0, 0) = 1.0;  // tie
  pred(0, 0, 1) = 2.0;
  pred(0, 0, 2) = -2.0;
  const auto node = tape.input(pred);
  tape.l1_loss(node, target);
  tape.backward();
  EXPECT_EQ(tape.grad(node).storage(), (std::vector<double>{0.0, 1.0, -1.0}));
}

TEST(Concat, SinglePartIsIdentity) {
  std::mt19937_64 rng(9);
  const auto x = random_tensor<double>(2, 3, 5, rng);
  const std::vector<Tensor3<double>> parts{x};
  EXPECT_EQ(concat_channels<double>(parts), x);
}

TEST(Concat, FullScaleChannelSums) {
  for (const auto& counts : {std::vector<std::size_t>{20, 20, 20, 20, 20},
                             std::vector<std::size_t>{50, 25, 20, 20, 20}}) {
    std::vector<Tensor3<double>> parts;
    for (auto c : counts) parts.emplace_back(1, c, 4);
    const std::size_t total = counts[0] == 20 ? 100 : 135;
    EXPECT_EQ(concat_channels<double>(parts).channels(), total);
  }
}

TEST(Concat, StacksInOrderAndRejectsLengthMismatch) {
  Tensor3<double> a(1, 1, 2), b(1, 2, 2);
  a(0, 0, 0) = 1;
  b(0, 1, 1) = 5;
  const std::vector<Tensor3<double>> parts{a, b};
  const auto y = concat_channels<double>(parts);
  EXPECT_EQ(y(0, 0, 0), 1);
  EXPECT_EQ(y(0, 2, 1), 5);
  const std::vector<Tensor3<double>> bad{a, Tensor3<double>(1, 1, 3)};
  EXPECT_THROW(concat_channels<double>(bad), ConfigError);
}

// ---------------------------------------------------------------------------
// Gradients against central differences.

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// d/dv of f at v, by central differences, for every entry of `v`.
std::vector<double> numeric_grad(std::vector<double>& v, const std::function<double()>& f,
                                 double h) {
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double fp = f();
    v[i] = keep - h;
    const double fm = f();
    v[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

void expect_grad_close(const std::vector<double>& analytic,
                       const std::vector<double>& numeric, double tol,
                       const char* what) {
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    EXPECT_LT(rel_err(analytic[i], numeric[i]), tol) << what << "[" << i << "]";
  }
}

TEST(Gradients, Conv1d) {
  std::mt19937_64 rng(21);
  auto x = random_tensor<double>(2, 3, 10, rng);
  auto p = random_filters<double>(4, 3, 5, 4, rng);
  const auto r = random_tensor<double>(2, 4, 10, rng);
  auto f = [&] { return dot(r, conv1d(x, p)); };

  Tape<double> tape;
  auto g = zeros_like(p);
  const auto xn = tape.input(x);
  const auto yn = tape.conv1d(xn, p, &g);
  EXPECT_EQ(tape.records().size(), 1u);
  tape.backward(yn, r);
  EXPECT_TRUE(tape.records().empty());
  expect_grad_close(tape.grad(xn).storage(), numeric_grad(x.storage(), f, 1e-6), 1e-4, "x");
  expect_grad_close(g.weights, numeric_grad(p.weights, f, 1e-6), 1e-4, "w");
  expect_grad_close(g.bias, numeric_grad(p.bias, f, 1e-6), 1e-4, "b");
}

TEST(Gradients, ConvTranspose1d) {
  std::mt19937_64 rng(22);
  auto u = random_tensor<double>(2, 4, 10, rng);
  auto p = random_filters<double>(4, 3, 6, 3, rng);
  const auto r = random_tensor<double>(2, 3, 10, rng);
  auto f = [&] { return dot(r, conv_transpose1d(u, p)); };

  Tape<double> tape;
  auto g = zeros_like(p);
  const auto un = tape.input(u);
  tape.backward(tape.conv_transpose1d(un, p, &g), r);
  expect_grad_close(tape.grad(un).storage(), numeric_grad(u.storage(), f, 1e-6), 1e-4, "u");
  expect_grad_close(g.weights, numeric_grad(p.weights, f, 1e-6), 1e-4, "w");
  expect_grad_close(g.bias, numeric_grad(p.bias, f, 1e-6), 1e-4, "b");
}

TEST(Gradients, BatchNorm) {
  std::mt19937_64 rng(23);
  auto x = random_tensor<double>(3, 2, 7, rng);
  BatchNormParams<double> p(2);
  p.gamma = {1.3, -0.4};
  p.beta = {0.2, 0.5};
  const auto r = random_tensor<double>(3, 2, 7, rng);
  auto f = [&] {
    auto q = p;
    return dot(r, batchnorm(x, q, Mode::kTrain));
  };

  Tape<double> tape;
  BatchNormGrads<double> g(2);
  auto q = p;
  const auto xn = tape.input(x);
  tape.backward(tape.batchnorm(xn, q, &g), r);
  expect_grad_close(tape.grad(xn).storage(), numeric_grad(x.storage(), f, 1e-6), 1e-4, "x");
  expect_grad_close(g.gamma, numeric_grad(p.gamma, f, 1e-6), 1e-4, "gamma");
  expect_grad_close(g.beta, numeric_grad(p.beta, f, 1e-6), 1e-4, "beta");
}

TEST(Gradients, Elu) {
  std::mt19937_64 rng(24);
  auto x = random_tensor<double>(2, 2, 9, rng, 2.0);
  for (auto& v : x.data()) {
    if (std::abs(v) < 1e-2) v = 0.5;  // away from the corner at 0
  }
  const auto r = random_tensor<double>(2, 2, 9, rng);
  auto f = [&] { return dot(r, elu(x)); };
  Tape<double> tape;
  const auto xn = tape.input(x);
  tape.backward(tape.elu(xn), r);
  expect_grad_close(tape.grad(xn).storage(), numeric_grad(x.storage(), f, 1e-6), 1e-4, "x");
}

TEST(Gradients, L1Loss) {
  std::mt19937_64 rng(25);
  auto pred = random_tensor<double>(2, 2, 8, rng);
  const auto target = random_tensor<double>(2, 2, 8, rng);
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    if (std::abs(pred.data()[i] - target.data()[i]) < 1e-3) pred.data()[i] += 0.1;
  }
  auto f = [&] { return l1_loss(pred, target); };
  Tape<double> tape;
  const auto pn = tape.input(pred);
  tape.l1_loss(pn, target);
  tape.backward();
  expect_grad_close(tape.grad(pn).storage(), numeric_grad(pred.storage(), f, 1e-6), 1e-5,
                    "pred");
}

TEST(Gradients, ConcatSplitsGradient) {
  std::mt19937_64 rng(26);
  Tape<double> tape;
  const auto a = tape.input(random_tensor<double>(1, 2, 4, rng));
  const auto b = tape.input(random_tensor<double>(1, 3, 4, rng));
  const std::vector<Tape<double>::Node> parts{a, b};
  const auto out = tape.concat_channels(parts);
  const auto r = random_tensor<double>(1, 5, 4, rng);
  tape.backward(out, r);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(tape.grad(a)(0, c, t), r(0, c, t));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(tape.grad(b)(0, c, t), r(0, c + 2, t));
  }
}

TEST(Tape, OneRecordPerOpInOrder) {
  std::mt19937_64 rng(27);
  const auto p = random_filters<double>(2, 1, 3, 2, rng);
  BatchNormParams<double> bn(2);
  Tape<double> tape;
  const auto x = tape.input(random_tensor<double>(1, 1, 6, rng));
  const auto c = tape.conv1d(x, p, nullptr);
  const auto n = tape.batchnorm(c, bn, nullptr);
  const auto e = tape.elu(n);
  tape.l1_loss(e, Tensor3<double>(1, 2, 6));
  const auto recs = tape.records();
  ASSERT_EQ(recs.size(), 4u);
  EXPECT_EQ(recs[0].op_kind, OpKind::kConv1d);
  EXPECT_EQ(recs[1].op_kind, OpKind::kBatchNorm);
  EXPECT_EQ(recs[2].op_kind, OpKind::kElu);
  EXPECT_EQ(recs[3].op_kind, OpKind::kL1Loss);
  EXPECT_EQ(recs[1].saved_inputs, std::vector<Tape<double>::Node>{c});
}

TEST(Properties, ZeroPropagatesThroughConvNormElu) {
  std::mt19937_64 rng(28);
  auto p = random_filters<double>(3, 2, 5, 3, rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  BatchNormParams<double> bn(3);
  const Tensor3<double> x(2, 2, 12);
  const auto y = elu(batchnorm(conv1d(x, p), bn, Mode::kTrain));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Properties, ShapesPreserved) {
  std::mt19937_64 rng(29);
  const auto x = random_tensor<double>(3, 2, 17, rng);
  const auto p = random_filters<double>(5, 2, 4, 5, rng);
  const auto y = conv1d(x, p);
  EXPECT_EQ(y.batch(), 3u);
  EXPECT_EQ(y.channels(), 5u);
  EXPECT_EQ(y.length(), 17u);
  auto tp = p;
  tp.bias.assign(2, 0.0);
  const auto z = conv_transpose1d(y, tp);
  EXPECT_EQ(z.channels(), 2u);
  EXPECT_EQ(z.length(), 17u);
}

}  // namespace
}  // namespace mrcae
