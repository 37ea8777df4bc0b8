// Copyright 2026 The mvselect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>

#include "mvs/selector.hpp"
#include "support.hpp"

namespace mvs {
namespace {

constexpr TokenLayout kCtxLayout{2, 2, 2};

SelectorConfig small_selector() {
  SelectorConfig c;
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  return c;
}

torch::Tensor f64(std::vector<double> v) { return torch::tensor(v, torch::kFloat64); }

TEST(Select, TieGoesToLowestIndex) {
  const auto c = choice_from_logits(f64({0, 0}).view({1, 2}));
  EXPECT_DOUBLE_EQ(c.c_hat[0][0].item<double>(), 0.5);
  EXPECT_DOUBLE_EQ(c.c_hat[0][1].item<double>(), 0.5);
  EXPECT_EQ(c.chosen[0], 0);
  EXPECT_TRUE(torch::equal(c.y, f64({1, 0}).view({1, 2})));
  EXPECT_EQ(argmax_rows(f64({0.2, 0.4, 0.4}).view({1, 3}))[0], 1);
}

TEST(Select, SoftmaxClosedForm) {
  const auto c = choice_from_logits(f64({std::log(3.0), 0}).view({1, 2}));
  EXPECT_NEAR(c.c_hat[0][0].item<double>(), 0.75, 1e-15);
  EXPECT_NEAR(c.c_hat[0][1].item<double>(), 0.25, 1e-15);
}

TEST(Select, YIsOneHotOfArgmax) {
  torch::manual_seed(0);
  for (int i = 0; i < 50; ++i) {
    const auto logits = torch::randn({4, 3}, torch::kFloat64) * 5;
    const auto c = choice_from_logits(logits);
    EXPECT_TRUE(torch::equal(c.y, one_hot_rows(argmax_rows(c.c_hat), 3, torch::kFloat64)));
    EXPECT_TRUE(torch::equal(torch::tensor(c.chosen), c.c_hat.argmax(1)));
  }
}

TEST(Select, ShiftInvariance) {
  torch::manual_seed(1);
  for (int i = 0; i < 50; ++i) {
    const auto logits = torch::randn({3, 3}, torch::kFloat64);
    const auto a = choice_from_logits(logits), b = choice_from_logits(logits + 17.25);
    EXPECT_EQ(a.chosen, b.chosen);
    EXPECT_TRUE(torch::equal(a.y, b.y));
  }
}

// Normalisation and strict positivity up to logits of +-50.
TEST(Select, SoftmaxSweep) {
  for (auto dtype : {torch::kFloat64, torch::kFloat32}) {
    for (double hi : {0.0, 1.0, 10.0, 30.0, 50.0}) {
      for (int views : {2, 3, 5}) {
        auto logits = torch::linspace(-hi, hi, views, torch::TensorOptions().dtype(dtype)).view({1, views});
        const auto c = choice_from_logits(logits).c_hat.to(torch::kFloat64);
        EXPECT_NEAR(c.sum().item<double>(), 1.0, 1e-6);
        EXPECT_GT(c.min().item<double>(), 0.0) << hi << " " << views;
        EXPECT_TRUE(torch::isfinite(c).all().item<bool>());
      }
    }
  }
}

TEST(Ste, ForwardValue) {
  const auto y = ste(f64({0.2, 0.8}).view({1, 2}));
  EXPECT_TRUE(torch::equal(y, f64({0, 1}).view({1, 2})));
  EXPECT_THROW(ste(f64({0.2, 0.8})), ShapeError);
}

TEST(Ste, IdentityJacobianLinear) {
  auto c = f64({0.2, 0.8}).view({1, 2}).requires_grad_();
  (ste(c) * f64({3, 5}).view({1, 2})).sum().backward();
  EXPECT_TRUE(torch::equal(c.grad(), f64({3, 5}).view({1, 2})));
}

// d f(ste(c)) / dc equals the finite-difference gradient of f in y, taken at
// the discrete value y_hard.
TEST(Ste, FiniteDifferenceOnSoftPath) {
  const auto w = f64({0.7, -1.3, 2.1}), u = f64({0.4, 0.9, -0.5});
  auto f = [&](const torch::Tensor& y) { return torch::sin(y * w).sum() + (y * u).sum().pow(2); };
  auto c = f64({0.1, 0.6, 0.3}).view({1, 3}).requires_grad_();
  const auto y = ste(c);
  f(y.view({3})).backward();
  const auto y_hard = y.detach().view({3});
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    auto up = y_hard.clone(), down = y_hard.clone();
    up[i] += h;
    down[i] -= h;
    const double fd = (f(up).item<double>() - f(down).item<double>()) / (2 * h);
    const double an = c.grad()[0][i].item<double>();
    EXPECT_LT(std::abs(fd - an) / std::max(std::abs(fd), 1e-12), 1e-4);
  }
}

TEST(Gate, OneHotIsBitExact) {
  torch::manual_seed(2);
  const auto obs = torch::rand({1, 2, 3, 8, 8});
  EXPECT_TRUE(torch::equal(gate_observation(torch::tensor({1.0f, 0.0f}).view({1, 2}), obs), obs.select(1, 0)));
  EXPECT_TRUE(torch::equal(gate_observation(torch::tensor({0.0f, 1.0f}).view({1, 2}), obs), obs.select(1, 1)));
  // Through the STE as well.
  const auto y = ste(torch::tensor({0.3f, 0.7f}).view({1, 2}));
  EXPECT_TRUE(torch::equal(gate_observation(y, obs), obs.select(1, 1)));
  EXPECT_THROW(gate_observation(torch::ones({1, 3}), obs), ShapeError);
}

TEST(Gate, GradientIsViewSum) {
  torch::manual_seed(3);
  const auto obs = torch::rand({1, 3, 2, 4, 4}, torch::kFloat64);
  auto y = f64({0, 1, 0}).view({1, 3}).requires_grad_();
  gate_observation(y, obs).sum().backward();
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    auto up = y.detach().clone(), down = y.detach().clone();
    up[0][i] += h;
    down[0][i] -= h;
    const double fd =
        (gate_observation(up, obs).sum().item<double>() - gate_observation(down, obs).sum().item<double>()) / (2 * h);
    EXPECT_NEAR(y.grad()[0][i].item<double>(), obs[0][i].sum().item<double>(), 1e-9);
    EXPECT_NEAR(fd, obs[0][i].sum().item<double>(), 1e-6);
  }
}

TEST(Net, ShapesAndCallCount) {
  torch::manual_seed(4);
  Selector net(small_selector(), kCtxLayout, 8, 4, 3);
  Context ctx{torch::randn({5, 8, 8}), kCtxLayout, ContextMode::kFullAutoencoder};
  EXPECT_EQ(net->calls(), 0u);
  const auto c = select(net, ctx, torch::randn({5, 4, 3}));
  EXPECT_EQ(c.logits.sizes(), (std::vector<std::int64_t>{5, 2}));
  EXPECT_EQ(net->calls(), 1u);
  EXPECT_THROW(net->forward(ctx, torch::randn({5, 3, 3})), ShapeError);
}

TEST(Net, ActionsInfluenceLogits) {
  torch::manual_seed(5);
  Selector net(small_selector(), kCtxLayout, 8, 4, 3);
  Context ctx{torch::randn({1, 8, 8}), kCtxLayout, ContextMode::kFullAutoencoder};
  const auto a = net->forward(ctx, torch::zeros({1, 4, 3}));
  const auto b = net->forward(ctx, torch::ones({1, 4, 3}));
  EXPECT_GT((a - b).abs().max().item<float>(), 1e-6);
}

TEST(Gradients, FiniteDifferences) {
  torch::manual_seed(6);
  Selector net(small_selector(), kCtxLayout, 8, 3, 3);
  net->to(torch::kFloat64);
  Context ctx{torch::randn({2, 8, 8}, torch::kFloat64), kCtxLayout, ContextMode::kFullAutoencoder};
  const auto actions = torch::randn({2, 3, 3}, torch::kFloat64);
  const auto w = torch::randn({2, 2}, torch::kFloat64);
  auto f = [&] { return (torch::softmax(net->forward(ctx, actions), -1) * w).sum(); };
  EXPECT_LT(testing::max_fd_error(f, net->parameters()), 1e-3);
}

}  // namespace
}  // namespace mvs
