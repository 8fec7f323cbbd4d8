/* Copyright 2026 The stnface Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "stnface/errors.hpp"
#include "stnface/ops.hpp"
#include "stnface/reference.hpp"
#include "test_util.hpp"

namespace stnface {
namespace {

using test::bit_equal;
using test::random_tensor;

// Direct nested-sum cross-correlation: accumulate taps in (c, ki, kj) order,
// then add the bias.
template <typename T>
BasicTensor<T> conv_oracle(const BasicTensor<T>& x, const BasicTensor<T>& w,
                           const BasicTensor<T>& b, int stride, int pad) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  BasicTensor<T> out({N, K, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          T acc = 0;
          for (int c = 0; c < C; ++c)
            for (int a = 0; a < kh; ++a)
              for (int d = 0; d < kw; ++d) {
                const int y = i * stride - pad + a, xx = j * stride - pad + d;
                if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                acc += w.at(k, c, a, d) * x.at(n, c, y, xx);
              }
          out.at(n, k, i, j) = acc + b[k];
        }
  return out;
}

TEST(Conv2d, ZeroInputGivesBroadcastBias) {
  std::mt19937_64 rng(1);
  Tensor x({2, 3, 5, 5});
  auto w = random_tensor<float>({4, 3, 3, 3}, rng);
  Tensor b({4}, std::vector<float>{0.5f, -1.f, 2.f, 0.f});
  auto y = conv2d_forward(x, w, b, 1, 1);
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) EXPECT_EQ(y.at(n, k, i, j), b[k]);
}

TEST(Conv2d, ImpulseResponseIsUnflippedKernel) {
  TensorD x({1, 1, 3, 3});
  x.at(0, 0, 1, 1) = 1.0;
  TensorD w({1, 1, 3, 3});
  std::iota(w.data().begin(), w.data().end(), 1.0);
  auto y = conv2d_forward(x, w, TensorD({1}), 1, 1);
  // Cross-correlation: out[i,j] = w[1 - (i-1), 1 - (j-1)] = w[2-i, 2-j].
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(y.at(0, 0, i, j), w.at(0, 0, 2 - i, 2 - j));
  EXPECT_EQ(y.at(0, 0, 1, 1), w.at(0, 0, 1, 1));
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int stride = 1 + trial % 2, pad = trial % 3;
    auto xd = random_tensor<double>({1 + trial % 2, 2, 5 + trial % 3, 5}, rng);
    auto wd = random_tensor<double>({3, 2, 3, 3}, rng);
    auto bd = random_tensor<double>({3}, rng);
    EXPECT_TRUE(bit_equal(conv2d_forward(xd, wd, bd, stride, pad),
                          conv_oracle(xd, wd, bd, stride, pad)));

    auto xf = xd.cast<float>();
    auto yf = conv2d_forward(xf, wd.cast<float>(), bd.cast<float>(), stride, pad);
    auto yd = conv_oracle(xd, wd, bd, stride, pad);
    for (std::size_t i = 0; i < yf.numel(); ++i) {
      EXPECT_LE(std::abs(yf[i] - yd[i]), 1e-5 * std::max(1.0, std::abs(yd[i])));
    }
  }
}

TEST(Conv2d, WorkedExampleStride2) {
  std::mt19937_64 rng(3);
  auto x = random_tensor<double>({1, 2, 5, 5}, rng);
  auto w = random_tensor<double>({3, 2, 3, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  auto y = conv2d_forward(x, w, b, 2, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 2, 2}));
  EXPECT_TRUE(bit_equal(y, conv_oracle(x, w, b, 2, 0)));
}

TEST(Conv2d, ParallelEqualsSerialReference) {
  std::mt19937_64 rng(4);
  auto x = random_tensor<float>({3, 4, 9, 7}, rng);
  auto w = random_tensor<float>({5, 4, 3, 3}, rng);
  auto b = random_tensor<float>({5}, rng);
  auto y = conv2d_forward(x, w, b, 1, 1);
  EXPECT_TRUE(bit_equal(y, reference::conv2d_forward(x, w, b, 1, 1)));
  auto g = random_tensor<float>(y.shape(), rng);
  auto fast = conv2d_backward(g, x, w, 1, 1);
  auto ref = reference::conv2d_backward(g, x, w, 1, 1);
  EXPECT_TRUE(bit_equal(fast.input, ref.input));
  EXPECT_TRUE(bit_equal(fast.weight, ref.weight));
  EXPECT_TRUE(bit_equal(fast.bias, ref.bias));
}

TEST(Conv2d, ChannelMismatchNamesBothShapes) {
  Tensor x({1, 3, 4, 4});
  Tensor w({2, 2, 3, 3});
  try {
    conv2d_forward(x, w, Tensor({2}), 1, 0);
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1,3,4,4]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,2,3,3]"), std::string::npos) << msg;
  }
}

TEST(Conv2dBackward, ZeroUpstreamGivesZeroGrads) {
  std::mt19937_64 rng(5);
  auto x = random_tensor<float>({1, 2, 4, 4}, rng);
  auto w = random_tensor<float>({3, 2, 3, 3}, rng);
  auto g = conv2d_backward(Tensor({1, 3, 4, 4}), x, w, 1, 1);
  for (float v : g.input.data()) EXPECT_EQ(v, 0.f);
  for (float v : g.weight.data()) EXPECT_EQ(v, 0.f);
  for (float v : g.bias.data()) EXPECT_EQ(v, 0.f);
}

TEST(Conv2dBackward, ScalarChainRule) {
  TensorD x({1, 1, 1, 1}, std::vector<double>{3.0});
  TensorD w({1, 1, 1, 1}, std::vector<double>{-2.0});
  TensorD g({1, 1, 1, 1}, std::vector<double>{0.5});
  auto r = conv2d_backward(g, x, w, 1, 0);
  EXPECT_EQ(r.weight[0], 1.5);
  EXPECT_EQ(r.input[0], -1.0);
  EXPECT_EQ(r.bias[0], 0.5);
}

TEST(MaxPool, ConstantInput) {
  Tensor x({1, 2, 6, 6}, 3.25f);
  auto r = maxpool2d_forward(x, 2, 2);
  for (float v : r.output.data()) EXPECT_EQ(v, 3.25f);
}

TEST(MaxPool, EnumeratedWindows) {
  Tensor x({1, 1, 4, 4});
  std::iota(x.data().begin(), x.data().end(), 0.f);
  auto r = maxpool2d_forward(x, 2, 2);
  EXPECT_EQ(r.output.storage(), (std::vector<float>{5, 7, 13, 15}));
  EXPECT_EQ(r.argmax, (std::vector<std::int64_t>{5, 7, 13, 15}));
  Tensor g({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  auto gi = maxpool2d_backward(g, r.argmax, x.shape());
  for (int i = 0; i < 16; ++i) {
    const float expect = i == 5 ? 1 : i == 7 ? 2 : i == 13 ? 3 : i == 15 ? 4 : 0;
    EXPECT_EQ(gi[i], expect);
  }
}

TEST(MaxPool, BackwardConservesMass) {
  std::mt19937_64 rng(6);
  for (int k : {2, 3}) {
    auto x = random_tensor<double>({2, 3, 7, 7}, rng);
    auto r = maxpool2d_forward(x, k, 2);
    auto g = random_tensor<double>(r.output.shape(), rng);
    auto gi = maxpool2d_backward(g, r.argmax, x.shape());
    const double a = std::accumulate(g.data().begin(), g.data().end(), 0.0);
    const double b = std::accumulate(gi.data().begin(), gi.data().end(), 0.0);
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(Fc, ZeroWeightOutputsBias) {
  std::mt19937_64 rng(7);
  auto x = random_tensor<float>({4, 5}, rng);
  Tensor w({5, 3});
  Tensor b({3}, std::vector<float>{1, -2, 0.5f});
  auto y = fc_forward(x, w, b);
  for (int n = 0; n < 4; ++n)
    for (int m = 0; m < 3; ++m) EXPECT_EQ(y.at(n, m), b[m]);
}

TEST(Fc, IdentityWeight) {
  std::mt19937_64 rng(8);
  auto x = random_tensor<float>({2, 3}, rng);
  Tensor w({3, 3});
  for (int i = 0; i < 3; ++i) w.at(i, i) = 1.f;
  EXPECT_TRUE(bit_equal(fc_forward(x, w, Tensor({3})), x));
}

TEST(Fc, MatchesMatmulOracle) {
  std::mt19937_64 rng(9);
  auto x = random_tensor<double>({2, 3}, rng);
  auto w = random_tensor<double>({3, 4}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto y = fc_forward(x, w, b);
  for (int n = 0; n < 2; ++n)
    for (int m = 0; m < 4; ++m) {
      double acc = b[m];
      for (int d = 0; d < 3; ++d) acc += x.at(n, d) * w.at(d, m);
      EXPECT_NEAR(y.at(n, m), acc, 1e-14);
    }
  auto g = random_tensor<float>({5, 6}, rng);
  auto xf = random_tensor<float>({5, 7}, rng);
  auto wf = random_tensor<float>({7, 6}, rng);
  auto fast = fc_backward(g, xf, wf);
  auto ref = reference::fc_backward(g, xf, wf);
  EXPECT_TRUE(bit_equal(fast.input, ref.input));
  EXPECT_TRUE(bit_equal(fast.weight, ref.weight));
  EXPECT_TRUE(bit_equal(fast.bias, ref.bias));
  EXPECT_TRUE(bit_equal(fc_forward(xf, wf, Tensor({6})), reference::fc_forward(xf, wf, Tensor({6}))));
}

TEST(Relu, ForwardBackward) {
  Tensor x({1, 4}, std::vector<float>{-1, 0, 2, -3});
  EXPECT_EQ(relu_forward(x).storage(), (std::vector<float>{0, 0, 2, 0}));
  Tensor g({1, 4}, std::vector<float>{1, 1, 1, 1});
  EXPECT_EQ(relu_backward(g, x).storage(), (std::vector<float>{0, 0, 1, 0}));
}

TEST(AvgPool, MeanAndUniformBackward) {
  Tensor x({1, 2, 2, 2}, std::vector<float>{1, 2, 3, 4, -1, -1, -1, -1});
  auto y = avgpool_global_forward(x);
  EXPECT_EQ(y.storage(), (std::vector<float>{2.5f, -1.f}));
  auto g = avgpool_global_backward(Tensor({1, 2}, std::vector<float>{4, 8}), x.shape());
  EXPECT_EQ(g.storage(), (std::vector<float>{1, 1, 1, 1, 2, 2, 2, 2}));
}

TEST(Softmax, UniformLogitsGiveLogM) {
  Tensor x({2, 5});
  const int labels[] = {0, 3};
  auto r = softmax_xent_loss(x, labels);
  EXPECT_NEAR(r.loss, std::log(5.0), 1e-6);
  EXPECT_NEAR(r.grad.at(0, 0), (0.2 - 1.0) / 2, 1e-7);
  EXPECT_NEAR(r.grad.at(0, 1), 0.2 / 2, 1e-7);
}

TEST(Softmax, SaturatedCorrect) {
  Tensor x({1, 2}, std::vector<float>{10, -10});
  const int labels[] = {0};
  EXPECT_LT(softmax_xent_loss(x, labels).loss, 1e-4f);
}

TEST(Softmax, RowsSumToOneAndShiftInvariance) {
  std::mt19937_64 rng(10);
  auto x = random_tensor<float>({4, 6}, rng, -5, 5);
  auto p = softmax_forward(x);
  for (int n = 0; n < 4; ++n) {
    double s = 0;
    for (int m = 0; m < 6; ++m) s += p.at(n, m);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  const int labels[] = {1, 2, 3, 5};
  auto shifted = x;
  for (int m = 0; m < 6; ++m) shifted.at(2, m) += 7.5f;
  EXPECT_NEAR(softmax_xent_loss(x, labels).loss, softmax_xent_loss(shifted, labels).loss, 1e-5);
}

TEST(Softmax, LabelOutOfRange) {
  Tensor x({1, 3});
  const int labels[] = {3};
  EXPECT_THROW(softmax_xent_loss(x, labels), IndexError);
  const int negative[] = {-1};
  EXPECT_THROW(softmax_xent_loss(x, negative), IndexError);
}

TEST(Regression, ExactMatchIsZero) {
  std::mt19937_64 rng(11);
  auto p = random_tensor<float>({3, 4}, rng);
  for (auto mode : {RegressionLoss::kL2, RegressionLoss::kSmoothL1}) {
    auto r = regression_loss(p, p, mode);
    EXPECT_EQ(r.loss, 0.f);
    for (float g : r.grad.data()) EXPECT_EQ(g, 0.f);
  }
}

TEST(Regression, UnitDifferenceL2) {
  Tensor p({2, 4}, 1.f), t({2, 4}, 0.f);
  auto r = regression_loss(p, t, RegressionLoss::kL2);
  EXPECT_FLOAT_EQ(r.loss, 1.f);
  for (float g : r.grad.data()) EXPECT_FLOAT_EQ(g, 2.f / 8);
}

TEST(Regression, SmoothL1Branches) {
  Tensor p({1, 2}, std::vector<float>{0.5f, 3.f}), t({1, 2});
  auto r = regression_loss(p, t, RegressionLoss::kSmoothL1);
  EXPECT_FLOAT_EQ(r.loss, (0.125f + 2.5f) / 2);
  EXPECT_FLOAT_EQ(r.grad[0], 0.5f / 2);
  EXPECT_FLOAT_EQ(r.grad[1], 1.f / 2);
}

TEST(Tensor, ShapeContract) {
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor(Shape{}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  Tensor t({2, 3});
  t.ensure_grad();
  EXPECT_EQ(t.grad().size(), t.numel());
  EXPECT_THROW(t.reshape({4, 2}), DimensionError);
}

}  // namespace
}  // namespace stnface
