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

// Multi-view masked autoencoder.
//
// A strided convolutional stem turns every view into a grid of patch tokens.
// Training hides whole views and a fraction of the remaining patches; the
// encoder sees only visible tokens (plus learned view and fixed 2D sin-cos
// position embeddings), the decoder fills every position of every view from
// the latents, a shared mask token and one appended proprioceptive-state
// token. At policy time the decoder output reconstructed from a single view
// is the multi-view context.

#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "mvs/config.hpp"
#include "mvs/error.hpp"
#include "mvs/nn.hpp"
#include "mvs/rng.hpp"

namespace mvs {

// Token order is (view, row, col), row-major within a view.
struct TokenLayout {
  std::int64_t views = 0, rows = 0, cols = 0;
  std::int64_t per_view() const { return rows * cols; }
  std::int64_t total() const { return views * rows * cols; }
  std::int64_t view_of(std::int64_t id) const { return id / per_view(); }
  std::int64_t row_of(std::int64_t id) const { return (id % per_view()) / cols; }
  std::int64_t col_of(std::int64_t id) const { return id % cols; }
  bool operator==(const TokenLayout&) const = default;
};

struct TokenGrid {
  torch::Tensor tokens;  // [B, V, P, D_feat]
  TokenLayout layout;
  std::int64_t batch() const { return tokens.size(0); }
  torch::Tensor flat() const { return tokens.reshape({tokens.size(0), layout.total(), tokens.size(-1)}); }
};

struct SampleMask {
  std::vector<std::uint8_t> visible;  // per token id
  std::vector<int> masked_views;
  std::int64_t visible_count() const { return std::count(visible.begin(), visible.end(), std::uint8_t{1}); }
  std::vector<std::int64_t> visible_ids() const {
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < visible.size(); ++i)
      if (visible[i]) ids.push_back(static_cast<std::int64_t>(i));
    return ids;
  }
  bool operator==(const SampleMask&) const = default;
};

struct MaskRecord {
  TokenLayout layout;
  std::vector<SampleMask> samples;

  // [B, V*P] of 0/1 in the given dtype.
  torch::Tensor visible_tensor(torch::Dtype dtype) const {
    const auto b = static_cast<std::int64_t>(samples.size());
    auto t = torch::zeros({b, layout.total()}, torch::kUInt8);
    auto acc = t.accessor<std::uint8_t, 2>();
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t j = 0; j < layout.total(); ++j) acc[i][j] = samples[i].visible[j];
    return t.to(dtype);
  }
  bool operator==(const MaskRecord&) const = default;
};

// Visible count after patch masking n tokens at ratio rho.
inline std::int64_t kept_token_count(std::int64_t n, double rho) {
  return std::llround((1.0 - rho) * static_cast<double>(n));
}

// Dual masking for one sample: with probability view_mask_prob every view but
// one uniformly chosen survivor is hidden; then round((1-rho)*n) of the n
// tokens of the still-visible views are kept, chosen uniformly without
// replacement.
inline SampleMask draw_sample_mask(const TokenLayout& layout, double rho, double view_mask_prob, Rng& rng) {
  SampleMask m;
  m.visible.assign(layout.total(), 0);
  std::vector<int> live_views;
  if (layout.views > 1 && rng.bernoulli(view_mask_prob)) {
    const int survivor = static_cast<int>(rng.uniform_int(0, layout.views - 1));
    live_views.push_back(survivor);
    for (int v = 0; v < layout.views; ++v)
      if (v != survivor) m.masked_views.push_back(v);
  } else {
    live_views.resize(layout.views);
    std::iota(live_views.begin(), live_views.end(), 0);
  }
  std::vector<std::int64_t> candidates;
  for (int v : live_views)
    for (std::int64_t p = 0; p < layout.per_view(); ++p) candidates.push_back(v * layout.per_view() + p);
  const auto keep = kept_token_count(static_cast<std::int64_t>(candidates.size()), rho);
  if (keep < 1) throw ConfigError("masking configuration leaves zero visible tokens");
  // Partial Fisher-Yates: the first `keep` entries are a uniform subset.
  for (std::int64_t i = 0; i < keep; ++i) {
    const auto j = rng.uniform_int(i, static_cast<std::int64_t>(candidates.size()) - 1);
    std::swap(candidates[i], candidates[j]);
    m.visible[candidates[i]] = 1;
  }
  return m;
}

inline MaskRecord draw_masks(const TokenLayout& layout, std::int64_t batch, const MaeConfig& cfg, Rng& rng) {
  MaskRecord r{layout, {}};
  for (std::int64_t b = 0; b < batch; ++b) {
    r.samples.push_back(draw_sample_mask(layout, cfg.patch_mask_ratio, cfg.view_mask_prob, rng));
  }
  return r;
}

// Every token of `view` visible, all other views masked.
inline MaskRecord single_view_record(const TokenLayout& layout, const std::vector<std::int64_t>& views) {
  MaskRecord r{layout, {}};
  for (auto v : views) {
    if (v < 0 || v >= layout.views) throw std::out_of_range("view index out of range");
    SampleMask m;
    m.visible.assign(layout.total(), 0);
    for (std::int64_t p = 0; p < layout.per_view(); ++p) m.visible[v * layout.per_view() + p] = 1;
    for (int o = 0; o < layout.views; ++o)
      if (o != v) m.masked_views.push_back(o);
    r.samples.push_back(std::move(m));
  }
  return r;
}

inline MaskRecord all_visible_record(const TokenLayout& layout, std::int64_t batch) {
  MaskRecord r{layout, {}};
  for (std::int64_t b = 0; b < batch; ++b) r.samples.push_back({std::vector<std::uint8_t>(layout.total(), 1), {}});
  return r;
}

// Zeroes the masked tokens of `grid`.
inline TokenGrid mask_grid(const TokenGrid& grid, const MaskRecord& record) {
  if (record.layout != grid.layout || static_cast<std::int64_t>(record.samples.size()) != grid.batch()) {
    throw ShapeError("mask record does not match token grid");
  }
  const auto keep = record.visible_tensor(grid.tokens.scalar_type())
                        .view({grid.batch(), grid.layout.views, grid.layout.per_view(), 1});
  return {grid.tokens * keep, grid.layout};
}

inline std::pair<TokenGrid, MaskRecord> apply_masks(const TokenGrid& grid, const MaeConfig& cfg, Rng& rng) {
  auto record = draw_masks(grid.layout, grid.batch(), cfg, rng);
  auto masked = mask_grid(grid, record);
  return {std::move(masked), std::move(record)};
}

// Encoder output for the visible tokens of each sample, padded to the longest
// sample. Padded slots have token id layout.total() and pad = true.
struct Latent {
  torch::Tensor vectors;    // [B, L, D]
  torch::Tensor token_ids;  // [B, L] int64
  torch::Tensor pad;        // [B, L] bool, or undefined when nothing is padded
  std::vector<std::int64_t> counts;
};

struct Context {
  torch::Tensor tokens;  // [B, V*P, D]
  TokenLayout layout;
  ContextMode mode = ContextMode::kFullAutoencoder;
};

// Token ids of the visible tokens per sample, padded with layout.total().
inline std::pair<torch::Tensor, std::vector<std::int64_t>> visible_index(const MaskRecord& record) {
  std::vector<std::vector<std::int64_t>> ids;
  std::int64_t longest = 0;
  for (const auto& s : record.samples) {
    ids.push_back(s.visible_ids());
    longest = std::max<std::int64_t>(longest, static_cast<std::int64_t>(ids.back().size()));
  }
  if (longest == 0) throw ShapeError("mask record has no visible token");
  const auto b = static_cast<std::int64_t>(ids.size());
  auto t = torch::full({b, longest}, record.layout.total(), torch::kInt64);
  auto acc = t.accessor<std::int64_t, 2>();
  std::vector<std::int64_t> counts;
  for (std::int64_t i = 0; i < b; ++i) {
    if (ids[i].empty()) throw ShapeError("sample has no visible token");
    for (std::size_t j = 0; j < ids[i].size(); ++j) acc[i][static_cast<std::int64_t>(j)] = ids[i][j];
    counts.push_back(static_cast<std::int64_t>(ids[i].size()));
  }
  return {t, counts};
}

struct MvMaeImpl : torch::nn::Module {
  MvMaeImpl(const MaeConfig& cfg, int num_views, int image_size, int state_dim)
      : cfg_(cfg),
        layout_{num_views, image_size / cfg.patch_size, image_size / cfg.patch_size},
        image_size_(image_size),
        state_dim_(state_dim) {
    if (image_size % cfg.patch_size != 0) throw ConfigError("image size not divisible by patch size");
    if (cfg.patch_size % 2 != 0) throw ConfigError("patch size must be even");
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t half = cfg.patch_size / 2;
    stem1 = register_module("stem1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d / 2, half).stride(half)));
    stem2 = register_module("stem2", torch::nn::Conv2d(torch::nn::Conv2dOptions(d / 2, d, 2).stride(2)));
    enc_embed = register_module("enc_embed", torch::nn::Linear(d, d));
    enc_view = register_parameter("enc_view", nn::trunc_normal({num_views, d}));
    encoder = register_module("encoder", nn::Transformer(d, cfg.heads, cfg.mlp_ratio, cfg.encoder_layers));
    dec_embed = register_module("dec_embed", torch::nn::Linear(d, d));
    mask_token = register_parameter("mask_token", nn::trunc_normal({d}));
    dec_view = register_parameter("dec_view", nn::trunc_normal({num_views, d}));
    state_embed = register_module("state_embed", torch::nn::Linear(state_dim, d));
    decoder = register_module("decoder", nn::Transformer(d, cfg.heads, cfg.mlp_ratio, cfg.decoder_layers));
    head = register_module("head", torch::nn::Linear(d, d));
    null_token = register_parameter("null_token", nn::trunc_normal({d}));
    pos = register_buffer("pos", nn::sincos_2d(layout_.rows, layout_.cols, d).to(torch::kFloat32));
  }

  const MaeConfig& config() const { return cfg_; }
  const TokenLayout& layout() const { return layout_; }
  int image_size() const { return image_size_; }
  int state_dim() const { return state_dim_; }
  torch::Dtype dtype() const { return head->weight.scalar_type(); }

  // [B, 3, H, W] -> [B, P, D_feat]
  torch::Tensor embed_view(const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != image_size_ || images.size(3) != image_size_) {
      throw ShapeError("expected images of shape [B, 3, " + std::to_string(image_size_) + ", " +
                       std::to_string(image_size_) + "]");
    }
    auto x = stem2(torch::gelu(stem1(images.to(dtype()))));  // [B, D, rows, cols]
    return x.flatten(2).transpose(1, 2);
  }

  // [B, V, 3, H, W] -> TokenGrid
  TokenGrid extract_features(const torch::Tensor& images) {
    if (images.dim() != 5 || images.size(1) != layout_.views) {
      throw ShapeError("expected multi-view images [B, " + std::to_string(layout_.views) + ", 3, H, W]");
    }
    const auto b = images.size(0);
    auto f = embed_view(images.flatten(0, 1));
    return {f.view({b, layout_.views, layout_.per_view(), f.size(-1)}), layout_};
  }

  // View + position embedding per token id, with one zero row for padding.
  torch::Tensor position_table(const torch::Tensor& view_table) const {
    auto t = (view_table.unsqueeze(1) + pos.unsqueeze(0)).reshape({layout_.total(), -1});
    return torch::cat({t, torch::zeros({1, t.size(1)}, t.options())}, 0);
  }

  // Encodes an explicit token sequence: tokens [B, L, D_feat], ids [B, L].
  // The encoder has no order dependence beyond the ids.
  torch::Tensor encode_tokens(const torch::Tensor& tokens, const torch::Tensor& token_ids,
                              const torch::Tensor& pad = {}) {
    const auto b = tokens.size(0), l = tokens.size(1);
    const auto table = position_table(enc_view);
    const auto emb = table.index_select(0, token_ids.reshape({-1})).view({b, l, -1});
    return encoder(enc_embed(tokens.to(dtype())) + emb, pad);
  }

  Latent encode(const TokenGrid& masked, const MaskRecord& record) {
    if (record.layout != layout_ || static_cast<std::int64_t>(record.samples.size()) != masked.batch()) {
      throw ShapeError("mask record does not match token grid");
    }
    auto [ids, counts] = visible_index(record);
    const auto b = masked.batch();
    const auto d = masked.tokens.size(-1);
    // Gather from the flat grid extended by one zero slot for padding.
    auto flat = masked.flat();
    flat = torch::cat({flat, torch::zeros({b, 1, d}, flat.options())}, 1);
    auto tokens = flat.gather(1, ids.unsqueeze(-1).expand({b, ids.size(1), d}));
    torch::Tensor pad;
    if (std::any_of(counts.begin(), counts.end(), [&](auto c) { return c != ids.size(1); })) {
      pad = ids.eq(layout_.total());
    }
    return {encode_tokens(tokens, ids, pad), ids, pad, counts};
  }

  // Full reconstruction [B, V*P, D_feat] from latents, mask tokens and state.
  torch::Tensor decode(const Latent& latent, const MaskRecord& record, const torch::Tensor& state) {
    const auto b = latent.vectors.size(0);
    if (static_cast<std::int64_t>(record.samples.size()) != b || record.layout != layout_) {
      throw ShapeError("decode: latent and mask record are inconsistent");
    }
    for (std::int64_t i = 0; i < b; ++i) {
      if (record.samples[i].visible_count() != latent.counts[i]) {
        throw ShapeError("decode: latent count does not match mask record");
      }
    }
    if (state.dim() != 2 || state.size(0) != b || state.size(1) != state_dim_) {
      throw ShapeError("decode: state must be [B, " + std::to_string(state_dim_) + "]");
    }
    auto x = scatter_tokens(dec_embed(latent.vectors), latent.token_ids, mask_token);
    x = x + position_table(dec_view).narrow(0, 0, layout_.total()).unsqueeze(0);
    auto state_tok = state_embed(state.to(dtype())).unsqueeze(1);
    x = decoder(torch::cat({x, state_tok}, 1));
    return head(x.narrow(1, 0, layout_.total()));
  }

  // Places [B, L, D] at their token ids of a [B, V*P, D] grid filled with
  // `fill` elsewhere. Padded ids land in a dropped extra slot.
  torch::Tensor scatter_tokens(const torch::Tensor& values, const torch::Tensor& ids, const torch::Tensor& fill) const {
    const auto b = values.size(0), l = values.size(1), d = values.size(2);
    auto base = fill.view({1, 1, d}).expand({b, layout_.total() + 1, d});
    auto out = base.scatter(1, ids.unsqueeze(-1).expand({b, l, d}), values);
    return out.narrow(1, 0, layout_.total());
  }

  Context context_from_latent(const Latent& latent, const MaskRecord& record, const torch::Tensor& state) {
    if (cfg_.context_mode == ContextMode::kEncoderOnly) {
      return {scatter_tokens(latent.vectors, latent.token_ids, null_token), layout_, cfg_.context_mode};
    }
    return {decode(latent, record, state), layout_, cfg_.context_mode};
  }

  // Context from one view per sample (images [B, 3, H, W], views[b] its camera
  // index). No patch masking; every other view is treated as masked.
  Context context_from_single_view(const torch::Tensor& images, const std::vector<std::int64_t>& views,
                                   const torch::Tensor& state) {
    const auto b = images.size(0);
    if (static_cast<std::int64_t>(views.size()) != b) throw ShapeError("one view index per sample required");
    auto record = single_view_record(layout_, views);
    auto feats = embed_view(images);
    auto ids = torch::empty({b, layout_.per_view()}, torch::kInt64);
    for (std::int64_t i = 0; i < b; ++i) {
      ids[i] = torch::arange(layout_.per_view(), torch::kInt64) + views[i] * layout_.per_view();
    }
    Latent latent{encode_tokens(feats, ids), ids, {}, std::vector<std::int64_t>(b, layout_.per_view())};
    return context_from_latent(latent, record, state);
  }

  // Context with every view visible (images [B, V, 3, H, W]).
  Context context_from_views(const torch::Tensor& images, const torch::Tensor& state) {
    auto grid = extract_features(images);
    auto record = all_visible_record(layout_, grid.batch());
    return context_from_latent(encode(grid, record), record, state);
  }

  // Reconstruction of a masked grid.
  torch::Tensor reconstruct(const TokenGrid& masked, const MaskRecord& record, const torch::Tensor& state) {
    return decode(encode(masked, record), record, state);
  }

  torch::nn::Conv2d stem1{nullptr}, stem2{nullptr};
  torch::nn::Linear enc_embed{nullptr}, dec_embed{nullptr}, state_embed{nullptr}, head{nullptr};
  nn::Transformer encoder{nullptr}, decoder{nullptr};
  torch::Tensor enc_view, dec_view, mask_token, null_token, pos;

 private:
  MaeConfig cfg_;
  TokenLayout layout_;
  int image_size_;
  int state_dim_;
};
TORCH_MODULE(MvMae);

// Mean squared error over every token and channel of every view.
inline torch::Tensor mae_loss(const torch::Tensor& reconstructed, const torch::Tensor& target) {
  if (!reconstructed.sizes().equals(target.sizes())) throw ShapeError("mae_loss: shape mismatch");
  return (reconstructed - target).pow(2).mean();
}

// One reconstruction-loss evaluation: features of the clean frames are the
// (gradient-blocked) target; the masked copy goes through encoder + decoder.
inline torch::Tensor reconstruction_loss(MvMae& mae, const torch::Tensor& images, const torch::Tensor& state,
                                         const MaskRecord& record) {
  auto grid = mae->extract_features(images);
  auto target = grid.flat().detach();
  auto masked = mask_grid(grid, record);
  return mae_loss(mae->reconstruct(masked, record, state), target);
}

}  // namespace mvs
