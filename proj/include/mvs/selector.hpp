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

// Next-view selection: a transformer over [query | context | actions] gives
// logits over the cameras, softmax turns them into probabilities, and a
// straight-through estimator makes the choice one-hot in value while passing
// gradients to the probabilities unchanged. The one-hot vector contracts the
// stack of candidate observations, so the next chunk's loss reaches the
// selector through the chosen image.

#pragma once

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <vector>

#include "mvs/config.hpp"
#include "mvs/error.hpp"
#include "mvs/mvmae.hpp"
#include "mvs/nn.hpp"

namespace mvs {

struct SelectorImpl : torch::nn::Module {
  SelectorImpl(const SelectorConfig& cfg, const TokenLayout& ctx_layout, int ctx_dim, int chunk_length,
               int action_dim)
      : dim_(cfg.dim), chunk_length_(chunk_length), action_dim_(action_dim), ctx_layout_(ctx_layout) {
    const std::int64_t d = cfg.dim;
    query = register_parameter("query", nn::trunc_normal({d}));
    ctx_proj = register_module("ctx_proj", torch::nn::Linear(ctx_dim, d));
    ctx_view = register_parameter("ctx_view", nn::trunc_normal({ctx_layout.views, d}));
    action_in = register_module("action_in", torch::nn::Linear(action_dim, d));
    action_pos = register_parameter("action_pos", nn::trunc_normal({chunk_length, d}));
    body = register_module("body", nn::Transformer(d, cfg.heads, 4, cfg.layers));
    head = register_module("head", torch::nn::Linear(d, ctx_layout.views));
    ctx_pos = register_buffer("ctx_pos", nn::sincos_2d(ctx_layout.rows, ctx_layout.cols, d).to(torch::kFloat32));
  }

  torch::Dtype dtype() const { return head->weight.scalar_type(); }
  std::int64_t num_views() const { return ctx_layout_.views; }

  // Context [B, V*P, D] and actions [B, T, A] -> logits [B, V].
  torch::Tensor forward(const Context& ctx, const torch::Tensor& actions) {
    ++calls_;
    if (ctx.layout != ctx_layout_) throw ShapeError("selector: context layout mismatch");
    if (actions.dim() != 3 || actions.size(1) != chunk_length_ || actions.size(2) != action_dim_) {
      throw ShapeError("selector: action chunk has the wrong shape");
    }
    const auto b = ctx.tokens.size(0);
    auto emb = (ctx_view.unsqueeze(1) + ctx_pos.unsqueeze(0)).reshape({ctx_layout_.total(), dim_});
    auto c = ctx_proj(ctx.tokens.to(dtype())) + emb.unsqueeze(0);
    auto a = action_in(actions.to(dtype())) + action_pos.unsqueeze(0);
    auto q = query.view({1, 1, dim_}).expand({b, 1, dim_});
    auto x = body(torch::cat({q, c, a}, 1));
    return head(x.select(1, 0));
  }

  // Number of forward evaluations so far.
  std::size_t calls() const { return calls_.load(); }

  torch::nn::Linear ctx_proj{nullptr}, action_in{nullptr}, head{nullptr};
  nn::Transformer body{nullptr};
  torch::Tensor query, ctx_view, action_pos, ctx_pos;

 private:
  std::int64_t dim_;
  int chunk_length_;
  int action_dim_;
  TokenLayout ctx_layout_;
  std::atomic<std::size_t> calls_{0};
};
TORCH_MODULE(Selector);

// Row-wise argmax, lowest index on ties.
inline std::vector<std::int64_t> argmax_rows(const torch::Tensor& probs) {
  const auto p = probs.detach().to(torch::kFloat64).contiguous();
  auto acc = p.accessor<double, 2>();
  std::vector<std::int64_t> out(p.size(0));
  for (std::int64_t i = 0; i < p.size(0); ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < p.size(1); ++j)
      if (acc[i][j] > acc[i][best]) best = j;
    out[i] = best;
  }
  return out;
}

inline torch::Tensor one_hot_rows(const std::vector<std::int64_t>& index, std::int64_t n, torch::Dtype dtype) {
  auto y = torch::zeros({static_cast<std::int64_t>(index.size()), n}, torch::TensorOptions().dtype(dtype));
  for (std::size_t i = 0; i < index.size(); ++i) y[static_cast<std::int64_t>(i)][index[i]] = 1.0;
  return y;
}

namespace detail {

// y = c_hat + sg[y_hard - c_hat]: forward returns exactly y_hard, backward is
// the identity.
struct StraightThrough : torch::autograd::Function<StraightThrough> {
  static torch::Tensor forward(torch::autograd::AutogradContext*, const torch::Tensor& c_hat) {
    return one_hot_rows(argmax_rows(c_hat), c_hat.size(1), c_hat.scalar_type());
  }
  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext*,
                                               torch::autograd::tensor_list grad_out) {
    return {grad_out[0]};
  }
};

}  // namespace detail

// Straight-through one-hot of probabilities [B, V].
inline torch::Tensor ste(const torch::Tensor& c_hat) {
  if (c_hat.dim() != 2) throw ShapeError("ste: expected [B, V] probabilities");
  return detail::StraightThrough::apply(c_hat);
}

struct ViewChoice {
  torch::Tensor logits;  // [B, V]
  torch::Tensor c_hat;   // [B, V] softmax(logits)
  torch::Tensor y;       // [B, V] one-hot value, soft gradient
  std::vector<std::int64_t> chosen;
};

inline ViewChoice choice_from_logits(const torch::Tensor& logits) {
  ViewChoice c;
  c.logits = logits;
  c.c_hat = torch::softmax(logits, -1);
  c.y = ste(c.c_hat);
  c.chosen = argmax_rows(c.c_hat);
  return c;
}

inline ViewChoice select(Selector& net, const Context& ctx, const torch::Tensor& actions) {
  return choice_from_logits(net->forward(ctx, actions));
}

// o = sum_v y_v * O_v for y [B, V] and observations [B, V, ...].
inline torch::Tensor gate_observation(const torch::Tensor& y, const torch::Tensor& observations) {
  if (y.dim() != 2 || observations.dim() < 2 || observations.size(0) != y.size(0) ||
      observations.size(1) != y.size(1)) {
    throw ShapeError("gate_observation: need y [B, V] and observations [B, V, ...] with matching B, V");
  }
  std::vector<std::int64_t> shape{y.size(0), y.size(1)};
  for (std::int64_t i = 2; i < observations.dim(); ++i) shape.push_back(1);
  return (y.view(shape) * observations.to(y.scalar_type())).sum(1);
}

}  // namespace mvs
