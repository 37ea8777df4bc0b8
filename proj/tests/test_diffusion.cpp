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

#include "mvs/diffusion.hpp"
#include "support.hpp"

namespace mvs {
namespace {

constexpr TokenLayout kCtxLayout{2, 2, 2};

DiffusionConfig small_diffusion(int steps = 5, int dim = 8) {
  DiffusionConfig c;
  c.steps = steps;
  c.dim = dim;
  c.layers = 1;
  c.heads = 2;
  return c;
}

Context random_context(std::int64_t b, int dim, torch::Dtype dtype = torch::kFloat64) {
  return {torch::randn({b, kCtxLayout.total(), dim}, torch::TensorOptions().dtype(dtype)), kCtxLayout,
          ContextMode::kFullAutoencoder};
}

TEST(Schedule, HandComputedProducts) {
  const auto s1 = build_schedule(1, 0.5, 0.5);
  EXPECT_DOUBLE_EQ(s1.alpha_bar(1), 0.5);
  const auto s2 = build_schedule(2, 0.1, 0.2);
  EXPECT_NEAR(s2.alpha_bar(1), 0.9, 1e-15);
  EXPECT_NEAR(s2.alpha_bar(2), 0.72, 1e-15);
  EXPECT_DOUBLE_EQ(s2.alpha_bar_prev(1), 1.0);
}

TEST(Schedule, Monotone) {
  for (auto [k, b0, b1] : {std::tuple{50, 2e-3, 0.4}, std::tuple{50, 1e-4, 0.02}, std::tuple{7, 0.3, 0.3}}) {
    const auto s = build_schedule(k, b0, b1);
    EXPECT_LT(s.alpha_bar(k), s.alpha_bar(1));
    for (int i = 2; i <= k; ++i) {
      EXPECT_GE(s.beta(i), s.beta(i - 1));
      EXPECT_LT(s.alpha_bar(i), s.alpha_bar(i - 1));
      EXPECT_GT(s.alpha_bar(i), 0.0);
    }
  }
  EXPECT_THROW(build_schedule(5, 0.3, 0.2), ConfigError);
  EXPECT_THROW(build_schedule(5, 0.0, 0.2), ConfigError);
  EXPECT_THROW(build_schedule(5, 0.1, 1.0), ConfigError);
  EXPECT_THROW(build_schedule(0, 0.1, 0.2), ConfigError);
}

TEST(Schedule, DeskScheduleReachesNoise) {
  const auto c = desk_preset().diffusion;
  EXPECT_LT(build_schedule(c.steps, c.beta_start, c.beta_end).alpha_bar(c.steps), 1e-3);
}

TEST(AddNoise, Limits) {
  const auto a0 = torch::randn({2, 3, 3}, torch::kFloat64), eps = torch::randn({2, 3, 3}, torch::kFloat64);
  EXPECT_TRUE(torch::equal(add_noise(a0, eps, 1.0), a0));
  EXPECT_TRUE(torch::equal(add_noise(a0, eps, 0.0), eps));
  EXPECT_DOUBLE_EQ(add_noise(torch::ones({1}, torch::kFloat64), torch::zeros({1}, torch::kFloat64), 0.25).item<double>(),
                   0.5);
}

TEST(AddNoise, StepRange) {
  const auto s = build_schedule(4, 0.1, 0.2);
  const auto a = torch::zeros({2, 3, 3});
  EXPECT_THROW(add_noise(s, a, a, torch::tensor({1, 5})), std::out_of_range);
  EXPECT_THROW(add_noise(s, a, a, torch::tensor({0, 1})), std::out_of_range);
  EXPECT_THROW(add_noise(s, a, a, torch::tensor({1})), ShapeError);
}

TEST(AddNoise, ForwardInverseIdentity) {
  const auto s = build_schedule(50, 2e-3, 0.4);
  Rng rng(1);
  for (int k = 1; k <= 50; ++k) {
    const auto a0 = rng.normal({1, 4, 3}, torch::kFloat64), eps = rng.normal({1, 4, 3}, torch::kFloat64);
    const auto ak = add_noise(s, a0, eps, torch::tensor({k}));
    EXPECT_LT((recover_clean(ak, eps, s.alpha_bar(k)) - a0).abs().max().item<double>(), 1e-9) << k;
    EXPECT_LT((ak - add_noise(a0, eps, s.alpha_bar(k))).abs().max().item<double>(), 1e-15);
  }
}

TEST(ActionLoss, ClosedForms) {
  const auto eps = torch::randn({2, 4, 3}, torch::kFloat64);
  EXPECT_EQ(noise_mse(eps, eps).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(noise_mse(torch::zeros({2, 4, 3}, torch::kFloat64), torch::ones({2, 4, 3}, torch::kFloat64))
                       .item<double>(),
                   1.0);
  // A denoiser whose output layer is zero predicts 0 everywhere.
  torch::manual_seed(0);
  Denoiser net(small_diffusion(), kCtxLayout, 8, 4, 3);
  net->to(torch::kFloat64);
  {
    torch::NoGradGuard ng;
    net->action_out->weight.zero_();
    net->action_out->bias.zero_();
  }
  const auto s = build_schedule(5, 0.1, 0.3);
  const auto loss = action_loss(net, s, random_context(2, 8), torch::randn({2, 4, 3}, torch::kFloat64),
                                torch::ones({2, 4, 3}, torch::kFloat64), torch::tensor({1, 5}));
  EXPECT_DOUBLE_EQ(loss.item<double>(), 1.0);
}

// The loss with drawn (eps, k) recomputed by hand from the same stream.
TEST(ActionLoss, StraightLineRecomputation) {
  torch::manual_seed(1);
  Denoiser net(small_diffusion(), kCtxLayout, 8, 4, 3);
  net->to(torch::kFloat64);
  const auto s = build_schedule(5, 0.05, 0.3);
  const auto ctx = random_context(3, 8);
  const auto a0 = torch::randn({3, 4, 3}, torch::kFloat64);
  Rng rng(2), replay(2);
  const double got = action_loss(net, s, ctx, a0, rng).item<double>();

  const auto eps = replay.normal({3, 4, 3}, torch::kFloat64);
  std::vector<std::int64_t> ks;
  for (int i = 0; i < 3; ++i) ks.push_back(replay.uniform_int(1, 5));
  auto noisy = torch::empty_like(a0);
  for (int i = 0; i < 3; ++i) {
    const double ab = s.alpha_bar(static_cast<int>(ks[i]));
    noisy[i] = std::sqrt(ab) * a0[i] + std::sqrt(1 - ab) * eps[i];
  }
  const auto pred = net->forward(ctx, noisy, torch::tensor(ks));
  double acc = 0;
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 4; ++t)
      for (int d = 0; d < 3; ++d) {
        const double r = eps[i][t][d].item<double>() - pred[i][t][d].item<double>();
        acc += r * r;
      }
  EXPECT_NEAR(got, acc / 36.0, 1e-9);
}

TEST(Sampling, SingleStepClosedForm) {
  torch::manual_seed(3);
  Denoiser net(small_diffusion(1), kCtxLayout, 8, 4, 3);
  net->to(torch::kFloat64);
  const auto s = build_schedule(1, 0.3, 0.3);
  const auto ctx = random_context(2, 8);
  Rng rng(4), replay(4);
  const auto out = sample_actions(net, s, ctx, rng);
  const auto x = replay.normal({2, 4, 3}, torch::kFloat64);
  torch::NoGradGuard ng;
  const auto eps_hat = net->forward(ctx, x, torch::tensor({1, 1}));
  // alpha_bar = alpha = 0.7, beta = 0.3, no noise on the last step.
  const auto expected = (x - 0.3 / std::sqrt(0.3) * eps_hat) / std::sqrt(0.7);
  EXPECT_LT((out - expected).abs().max().item<double>(), 1e-12);
}

TEST(Sampling, Deterministic) {
  torch::manual_seed(5);
  Denoiser net(small_diffusion(), kCtxLayout, 8, 4, 3);
  const auto s = build_schedule(5, 0.05, 0.3);
  const auto ctx = random_context(2, 8, torch::kFloat32);
  Rng a(6), b(6);
  EXPECT_TRUE(torch::equal(sample_actions(net, s, ctx, a), sample_actions(net, s, ctx, b)));
}

TEST(Sampling, PosteriorStd) {
  const auto s = build_schedule(3, 0.1, 0.3);
  EXPECT_EQ(posterior_std(s, 1), 0.0);
  const double ab1 = 0.9, ab2 = 0.9 * 0.8;
  EXPECT_NEAR(posterior_std(s, 2), std::sqrt(0.2 * (1 - ab1) / (1 - ab2)), 1e-15);
}

// The clean-chunk form of the step is the same posterior mean; a bound that
// never binds changes nothing, one that binds caps the implied clean chunk.
TEST(Sampling, ClippedStepMatchesUnclipped) {
  auto s = build_schedule(50, 0.002, 0.4);
  const auto x = torch::randn({4, 8, 3}, torch::kFloat64), eps = torch::randn({4, 8, 3}, torch::kFloat64);
  const auto z = torch::randn({4, 8, 3}, torch::kFloat64);
  for (int k : {1, 2, 25, 50}) {
    s.clip = 0;
    const auto plain = ancestral_step(s, x, eps, k, z);
    s.clip = 1e12;
    EXPECT_LT((ancestral_step(s, x, eps, k, z) - plain).abs().max().item<double>(), 1e-9) << k;
  }
  s.clip = 0.5;
  const auto out = ancestral_step(s, x * 100, eps, 1, z);
  EXPECT_LE(out.abs().max().item<double>(), 0.5 + 1e-12);
}

// One constant expert chunk: the sampler must reproduce it.
class ConstantChunk : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    torch::manual_seed(7);
    net_ = new Denoiser(small_diffusion(10, 32), kCtxLayout, 8, 4, 3);
    sched_ = build_schedule(10, 0.02, 0.6);
    target_ = torch::tensor({0.5, -1.0, 1.2}).repeat({4, 1});
    ctx_ = new Context(random_context(1, 8, torch::kFloat32));
    torch::optim::Adam opt((*net_)->parameters(), torch::optim::AdamOptions(2e-3));
    Rng rng(8);
    for (int it = 0; it < 1500; ++it) {
      const std::int64_t b = 32;
      Context ctx{ctx_->tokens.expand({b, -1, -1}), kCtxLayout, ContextMode::kFullAutoencoder};
      opt.zero_grad();
      auto loss = action_loss(*net_, sched_, ctx, target_.unsqueeze(0).expand({b, -1, -1}), rng);
      loss.backward();
      opt.step();
    }
  }
  static void TearDownTestSuite() {
    delete net_;
    delete ctx_;
  }
  static inline Denoiser* net_ = nullptr;
  static inline Context* ctx_ = nullptr;
  static inline NoiseSchedule sched_;
  static inline torch::Tensor target_;
};

TEST_F(ConstantChunk, SampleMatchesExpert) {
  Rng rng(9);
  const std::int64_t b = 16;
  Context ctx{ctx_->tokens.expand({b, -1, -1}), kCtxLayout, ContextMode::kFullAutoencoder};
  const auto out = sample_actions(*net_, sched_, ctx, rng);
  const auto err = (out - target_.unsqueeze(0)).abs();
  EXPECT_LT(err.mean().item<double>(), 0.1);
  EXPECT_LT(err.amax({1, 2}).median().item<double>(), 0.1);
}

// Samples noised at k = 1 are denoised better when the network is told k = 1
// than when it is told k = K; the paired gap exceeds five standard errors.
TEST_F(ConstantChunk, TimestepConditioningMatters) {
  Rng rng(10);
  const std::int64_t n = 1000;
  Context ctx{ctx_->tokens.expand({n, -1, -1}), kCtxLayout, ContextMode::kFullAutoencoder};
  const auto a0 = target_.unsqueeze(0).expand({n, -1, -1});
  torch::NoGradGuard ng;
  const auto eps = rng.normal({n, 4, 3});
  const auto k1 = torch::full({n}, 1, torch::kInt64), kK = torch::full({n}, sched_.steps, torch::kInt64);
  const auto noisy = add_noise(sched_, a0, eps, k1);
  auto per_sample = [&](const torch::Tensor& label) {
    return (eps - (*net_)->forward(ctx, noisy, label)).pow(2).mean({1, 2}).to(torch::kFloat64);
  };
  const auto gap = per_sample(kK) - per_sample(k1);
  const double se = std::sqrt(gap.var().item<double>() / n);
  EXPECT_GT(gap.mean().item<double>(), 5 * se);
}

TEST(Gradients, FiniteDifferences) {
  torch::manual_seed(11);
  Denoiser net(small_diffusion(), kCtxLayout, 8, 3, 3);
  net->to(torch::kFloat64);
  const auto s = build_schedule(5, 0.05, 0.3);
  const auto ctx = random_context(2, 8);
  const auto a0 = torch::randn({2, 3, 3}, torch::kFloat64), eps = torch::randn({2, 3, 3}, torch::kFloat64);
  const auto k = torch::tensor({2, 5});
  auto f = [&] { return action_loss(net, s, ctx, a0, eps, k); };
  EXPECT_LT(testing::max_fd_error(f, net->parameters()), 1e-3);
}

TEST(Denoiser, RejectsWrongShapes) {
  torch::manual_seed(12);
  Denoiser net(small_diffusion(), kCtxLayout, 8, 4, 3);
  const auto ctx = random_context(1, 8, torch::kFloat32);
  EXPECT_THROW(net->forward(ctx, torch::zeros({1, 5, 3}), torch::tensor({1})), ShapeError);
  Context other{torch::zeros({1, 12, 8}), {3, 2, 2}, ContextMode::kFullAutoencoder};
  EXPECT_THROW(net->forward(other, torch::zeros({1, 4, 3}), torch::tensor({1})), ShapeError);
}

}  // namespace
}  // namespace mvs
