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

// Denoising-diffusion action decoder over chunks of T actions.

#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mvs/config.hpp"
#include "mvs/error.hpp"
#include "mvs/mvmae.hpp"
#include "mvs/nn.hpp"
#include "mvs/rng.hpp"

namespace mvs {

// Steps are 1-based: beta(k), alpha_bar(k) for k in [1, K].
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> betas, alphas, alpha_bars;
  // Bound on the predicted clean chunk during sampling; 0 disables it.
  double clip = 0.0;

  double beta(int k) const { return betas.at(k - 1); }
  double alpha(int k) const { return alphas.at(k - 1); }
  double alpha_bar(int k) const { return alpha_bars.at(k - 1); }
  // alpha_bar(0) = 1 by convention.
  double alpha_bar_prev(int k) const { return k <= 1 ? 1.0 : alpha_bars.at(k - 2); }
};

// Linear beta spacing from beta_start to beta_end, cumulative alpha product.
inline NoiseSchedule build_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("build_schedule: steps must be >= 1");
  if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1)) {
    throw ConfigError("build_schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  double prod = 1.0;
  for (int k = 1; k <= steps; ++k) {
    const double b = steps == 1 ? beta_start
                                : beta_start + (beta_end - beta_start) * static_cast<double>(k - 1) / (steps - 1);
    s.betas.push_back(b);
    s.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bars.push_back(prod);
  }
  return s;
}

// sqrt(alpha_bar) * a0 + sqrt(1 - alpha_bar) * eps, elementwise.
inline torch::Tensor add_noise(const torch::Tensor& a0, const torch::Tensor& eps, double alpha_bar) {
  return std::sqrt(alpha_bar) * a0 + std::sqrt(1.0 - alpha_bar) * eps;
}

// Per-sample steps k ([B] int64, each in [1, K]) for chunks [B, T, A].
inline torch::Tensor add_noise(const NoiseSchedule& s, const torch::Tensor& a0, const torch::Tensor& eps,
                               const torch::Tensor& k) {
  const auto b = a0.size(0);
  if (k.numel() != b) throw ShapeError("add_noise: one step per sample required");
  std::vector<double> sa(b), sn(b);
  auto kc = k.to(torch::kInt64).contiguous();
  for (std::int64_t i = 0; i < b; ++i) {
    const auto ki = kc[i].item<std::int64_t>();
    if (ki < 1 || ki > s.steps) throw std::out_of_range("add_noise: diffusion step out of [1, K]");
    sa[i] = std::sqrt(s.alpha_bar(static_cast<int>(ki)));
    sn[i] = std::sqrt(1.0 - s.alpha_bar(static_cast<int>(ki)));
  }
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto ca = torch::tensor(sa, opts).to(a0.scalar_type()).view({b, 1, 1});
  auto cn = torch::tensor(sn, opts).to(a0.scalar_type()).view({b, 1, 1});
  return ca * a0 + cn * eps;
}

// Inverse of add_noise given the noise.
inline torch::Tensor recover_clean(const torch::Tensor& noisy, const torch::Tensor& eps, double alpha_bar) {
  return (noisy - std::sqrt(1.0 - alpha_bar) * eps) / std::sqrt(alpha_bar);
}

// Noise predictor: T action tokens plus one diffusion-step token, each block
// self-attends, cross-attends to the context tokens and applies an MLP.
struct DenoiserImpl : torch::nn::Module {
  DenoiserImpl(const DiffusionConfig& cfg, const TokenLayout& ctx_layout, int ctx_dim, int chunk_length,
               int action_dim)
      : dim_(cfg.dim), chunk_length_(chunk_length), action_dim_(action_dim), ctx_layout_(ctx_layout) {
    const std::int64_t d = cfg.dim;
    ctx_proj = register_module("ctx_proj", torch::nn::Linear(ctx_dim, d));
    ctx_view = register_parameter("ctx_view", nn::trunc_normal({ctx_layout.views, d}));
    ctx_norm = register_module("ctx_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    action_in = register_module("action_in", torch::nn::Linear(action_dim, d));
    action_pos = register_parameter("action_pos", nn::trunc_normal({chunk_length, d}));
    time_fc1 = register_module("time_fc1", torch::nn::Linear(d, d));
    time_fc2 = register_module("time_fc2", torch::nn::Linear(d, d));
    body = register_module("body", nn::Transformer(d, cfg.heads, 4, cfg.layers, d));
    action_out = register_module("action_out", torch::nn::Linear(d, action_dim));
    ctx_pos = register_buffer("ctx_pos", nn::sincos_2d(ctx_layout.rows, ctx_layout.cols, d).to(torch::kFloat32));
  }

  int chunk_length() const { return chunk_length_; }
  int action_dim() const { return action_dim_; }
  torch::Dtype dtype() const { return action_out->weight.scalar_type(); }

  // Context tokens projected to the denoiser width with view and position
  // embeddings: [B, V*P, d]. Reusable across denoising steps.
  torch::Tensor prepare_context(const Context& ctx) {
    if (ctx.layout != ctx_layout_) throw ShapeError("denoiser: context layout mismatch");
    auto emb = (ctx_view.unsqueeze(1) + ctx_pos.unsqueeze(0)).reshape({ctx_layout_.total(), dim_});
    return ctx_norm(ctx_proj(ctx.tokens.to(dtype())) + emb.unsqueeze(0));
  }

  // noisy [B, T, A], k [B] int64 -> predicted noise [B, T, A]
  torch::Tensor forward_prepared(const torch::Tensor& ctx_tokens, const torch::Tensor& noisy, const torch::Tensor& k) {
    const auto b = noisy.size(0);
    if (noisy.dim() != 3 || noisy.size(1) != chunk_length_ || noisy.size(2) != action_dim_) {
      throw ShapeError("denoiser: expected chunk [B, " + std::to_string(chunk_length_) + ", " +
                       std::to_string(action_dim_) + "]");
    }
    auto t = nn::sincos_1d(k.to(torch::kFloat64), dim_).to(dtype());
    t = time_fc2(torch::gelu(time_fc1(t))).unsqueeze(1);
    auto a = action_in(noisy.to(dtype())) + action_pos.unsqueeze(0);
    auto x = body->forward(torch::cat({t, a}, 1), torch::Tensor(), ctx_tokens);
    return action_out(x.narrow(1, 1, chunk_length_)).view({b, chunk_length_, action_dim_});
  }

  torch::Tensor forward(const Context& ctx, const torch::Tensor& noisy, const torch::Tensor& k) {
    return forward_prepared(prepare_context(ctx), noisy, k);
  }

  torch::nn::Linear ctx_proj{nullptr}, action_in{nullptr}, time_fc1{nullptr}, time_fc2{nullptr}, action_out{nullptr};
  torch::nn::LayerNorm ctx_norm{nullptr};
  nn::Transformer body{nullptr};
  torch::Tensor ctx_view, action_pos, ctx_pos;

 private:
  std::int64_t dim_;
  int chunk_length_;
  int action_dim_;
  TokenLayout ctx_layout_;
};
TORCH_MODULE(Denoiser);

// Mean over all elements of (eps - predicted)^2.
inline torch::Tensor noise_mse(const torch::Tensor& predicted, const torch::Tensor& eps) {
  if (!predicted.sizes().equals(eps.sizes())) throw ShapeError("noise_mse: shape mismatch");
  return (eps.to(predicted.scalar_type()) - predicted).pow(2).mean();
}

// Noise-prediction loss for given noise and steps.
inline torch::Tensor action_loss(Denoiser& net, const NoiseSchedule& sched, const Context& ctx,
                                 const torch::Tensor& a0, const torch::Tensor& eps, const torch::Tensor& k) {
  const auto noisy = add_noise(sched, a0.to(net->dtype()), eps.to(net->dtype()), k);
  return noise_mse(net->forward(ctx, noisy, k), eps);
}

// Uniform diffusion step in [1, K] per sample.
inline torch::Tensor sample_steps(const NoiseSchedule& sched, std::int64_t batch, Rng& rng) {
  auto k = torch::empty({batch}, torch::kInt64);
  for (std::int64_t i = 0; i < batch; ++i) k[i] = rng.uniform_int(1, sched.steps);
  return k;
}

// Draws eps ~ N(0, I) and k ~ U{1..K}, then evaluates the loss.
inline torch::Tensor action_loss(Denoiser& net, const NoiseSchedule& sched, const Context& ctx,
                                 const torch::Tensor& a0, Rng& rng) {
  const auto eps = rng.normal(a0.sizes(), net->dtype());
  const auto k = sample_steps(sched, a0.size(0), rng);
  return action_loss(net, sched, ctx, a0, eps, k);
}

// Posterior standard deviation used by the ancestral update at step k.
inline double posterior_std(const NoiseSchedule& s, int k) {
  if (k <= 1) return 0.0;
  return std::sqrt(s.beta(k) * (1.0 - s.alpha_bar_prev(k)) / (1.0 - s.alpha_bar(k)));
}

// x_{k-1} = (x_k - beta_k / sqrt(1 - alpha_bar_k) * eps_hat) / sqrt(alpha_k) + sigma_k * z.
// With s.clip > 0 the same posterior mean is formed from the predicted clean
// chunk a0_hat = (x_k - sqrt(1 - alpha_bar_k) eps_hat) / sqrt(alpha_bar_k),
// clamped to [-clip, clip].
inline torch::Tensor ancestral_step(const NoiseSchedule& s, const torch::Tensor& x, const torch::Tensor& eps_hat,
                                    int k, const torch::Tensor& z) {
  torch::Tensor mean;
  if (s.clip > 0) {
    const double ab = s.alpha_bar(k), ab_prev = s.alpha_bar_prev(k);
    const auto a0_hat = ((x - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab)).clamp(-s.clip, s.clip);
    mean = (std::sqrt(ab_prev) * s.beta(k) / (1.0 - ab)) * a0_hat +
           (std::sqrt(s.alpha(k)) * (1.0 - ab_prev) / (1.0 - ab)) * x;
  } else {
    mean = (x - (s.beta(k) / std::sqrt(1.0 - s.alpha_bar(k))) * eps_hat) / std::sqrt(s.alpha(k));
  }
  if (k <= 1) return mean;
  return mean + posterior_std(s, k) * z;
}

// Iterative denoising from N(0, I) for k = K..1. Returns normalised chunks
// [B, T, A]; the caller denormalises.
inline torch::Tensor sample_actions(Denoiser& net, const NoiseSchedule& sched, const Context& ctx, Rng& rng) {
  torch::NoGradGuard no_grad;
  const auto b = ctx.tokens.size(0);
  const auto ctx_tokens = net->prepare_context(ctx);
  auto x = rng.normal({b, net->chunk_length(), net->action_dim()}, net->dtype());
  for (int k = sched.steps; k >= 1; --k) {
    const auto kt = torch::full({b}, k, torch::kInt64);
    const auto eps_hat = net->forward_prepared(ctx_tokens, x, kt);
    const auto z = k > 1 ? rng.normal(x.sizes(), net->dtype()) : torch::zeros_like(x);
    x = ancestral_step(sched, x, eps_hat, k, z);
  }
  return x;
}

}  // namespace mvs
