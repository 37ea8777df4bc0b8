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

// Transformer building blocks shared by the autoencoder, the denoiser and the
// view selector.

#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "mvs/error.hpp"

namespace mvs::nn {

// Fixed 1D sinusoidal embedding of real positions: [N] -> [N, dim].
// First half sin, second half cos, frequencies 1 / 10000^(i / (dim/2)).
inline torch::Tensor sincos_1d(const torch::Tensor& positions, std::int64_t dim) {
  if (dim % 2 != 0) throw ShapeError("sincos_1d: dim must be even");
  const auto half = dim / 2;
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const auto i = torch::arange(half, opts);
  const auto omega = 1.0 / torch::pow(10000.0, i / static_cast<double>(half));
  const auto arg = positions.to(torch::kFloat64).reshape({-1, 1}) * omega.reshape({1, -1});
  return torch::cat({torch::sin(arg), torch::cos(arg)}, 1);
}

// Fixed 2D sinusoidal table for a rows x cols grid, row-major: [rows*cols, dim].
// The first dim/2 channels encode the row, the rest the column.
inline torch::Tensor sincos_2d(std::int64_t rows, std::int64_t cols, std::int64_t dim) {
  if (dim % 4 != 0) throw ShapeError("sincos_2d: dim must be divisible by 4");
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const auto r = torch::arange(rows, opts).repeat_interleave(cols);
  const auto c = torch::arange(cols, opts).repeat({rows});
  return torch::cat({sincos_1d(r, dim / 2), sincos_1d(c, dim / 2)}, 1);
}

// Multi-head attention from `x` to `context`. `key_pad` ([B, Lk] bool, true
// = ignore) excludes padded keys.
struct AttentionImpl : torch::nn::Module {
  AttentionImpl(std::int64_t dim, std::int64_t heads, std::int64_t kv_dim)
      : heads_(heads), head_dim_(dim / heads) {
    if (dim % heads != 0) throw ShapeError("attention: dim not divisible by heads");
    q = register_module("q", torch::nn::Linear(dim, dim));
    k = register_module("k", torch::nn::Linear(kv_dim, dim));
    v = register_module("v", torch::nn::Linear(kv_dim, dim));
    out = register_module("out", torch::nn::Linear(dim, dim));
  }

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context,
                        const torch::Tensor& key_pad = {}) {
    const auto b = x.size(0), lq = x.size(1), lk = context.size(1);
    auto split = [&](const torch::Tensor& t, std::int64_t len) {
      return t.view({b, len, heads_, head_dim_}).transpose(1, 2);
    };
    const auto qh = split(q(x), lq);
    const auto kh = split(k(context), lk);
    const auto vh = split(v(context), lk);
    auto scores = torch::matmul(qh, kh.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim_));
    if (key_pad.defined()) {
      scores = scores.masked_fill(key_pad.view({b, 1, 1, lk}), -std::numeric_limits<double>::infinity());
    }
    const auto attn = torch::softmax(scores, -1);
    const auto y = torch::matmul(attn, vh).transpose(1, 2).reshape({b, lq, heads_ * head_dim_});
    return out(y);
  }

  torch::nn::Linear q{nullptr}, k{nullptr}, v{nullptr}, out{nullptr};

 private:
  std::int64_t heads_;
  std::int64_t head_dim_;
};
TORCH_MODULE(Attention);

struct MlpImpl : torch::nn::Module {
  MlpImpl(std::int64_t dim, std::int64_t hidden) {
    fc1 = register_module("fc1", torch::nn::Linear(dim, hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, dim));
  }
  torch::Tensor forward(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Mlp);

// Pre-norm transformer block: self-attention, optional cross-attention to a
// context sequence, MLP. Each sub-layer is residual.
struct BlockImpl : torch::nn::Module {
  BlockImpl(std::int64_t dim, std::int64_t heads, std::int64_t mlp_ratio, std::int64_t context_dim = 0) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    attn = register_module("attn", Attention(dim, heads, dim));
    if (context_dim > 0) {
      norm_cross = register_module("norm_cross", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
      cross = register_module("cross", Attention(dim, heads, context_dim));
    }
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    mlp = register_module("mlp", Mlp(dim, dim * mlp_ratio));
  }

  torch::Tensor forward(torch::Tensor x, const torch::Tensor& key_pad = {},
                        const torch::Tensor& context = {}) {
    const auto h = norm1(x);
    x = x + attn(h, h, key_pad);
    if (cross) {
      if (!context.defined()) throw ShapeError("cross-attention block needs a context");
      x = x + cross(norm_cross(x), context);
    }
    return x + mlp(norm2(x));
  }

  torch::nn::LayerNorm norm1{nullptr}, norm_cross{nullptr}, norm2{nullptr};
  Attention attn{nullptr}, cross{nullptr};
  Mlp mlp{nullptr};
};
TORCH_MODULE(Block);

// Stack of blocks followed by a final LayerNorm.
struct TransformerImpl : torch::nn::Module {
  TransformerImpl(std::int64_t dim, std::int64_t heads, std::int64_t mlp_ratio, std::int64_t layers,
                  std::int64_t context_dim = 0) {
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (std::int64_t i = 0; i < layers; ++i) blocks->push_back(Block(dim, heads, mlp_ratio, context_dim));
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  }

  torch::Tensor forward(torch::Tensor x, const torch::Tensor& key_pad = {}, const torch::Tensor& context = {}) {
    for (const auto& m : *blocks) x = m->as<BlockImpl>()->forward(x, key_pad, context);
    return norm(x);
  }

  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(Transformer);

// Small init for learned embeddings and special tokens.
inline torch::Tensor trunc_normal(at::IntArrayRef shape, double std = 0.02) {
  return torch::randn(shape).clamp(-2.0, 2.0) * std;
}

}  // namespace mvs::nn
