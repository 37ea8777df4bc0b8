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


// Shared fixtures for the test suites.

#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mvs/mvs.hpp"

namespace mvs::testing {

// A model small enough for finite differences: 16 px images, patch 8 (2x2
// tokens per view), width 8, one layer everywhere.
inline RunConfig tiny_config() {
  RunConfig c = desk_preset();
  c.scene.world_size = 16;
  c.scene.occluders = {};
  c.scene.object_region = {3, 3, 6, 12};
  c.scene.target_region = {10, 3, 13, 12};
  c.scene.gripper_start_x = 8;
  c.scene.gripper_start_y = 15;
  c.scene.max_step_length = 1.0;
  c.scene.grasp_radius = 1.5;
  c.scene.place_radius = 1.5;
  c.scene.episode_max_steps = 40;
  c.mae.patch_size = 8;
  c.mae.embed_dim = 8;
  c.mae.encoder_layers = 1;
  c.mae.decoder_layers = 1;
  c.mae.heads = 2;
  c.mae.mlp_ratio = 2;
  c.diffusion.steps = 5;
  c.diffusion.dim = 8;
  c.diffusion.layers = 1;
  c.diffusion.heads = 2;
  c.selector.dim = 8;
  c.selector.layers = 1;
  c.selector.heads = 2;
  c.train.chunk_length = 3;
  c.train.batch = 2;
  c.train.pretrain_batch = 2;
  c.train.pretrain_epochs = 1;
  c.train.train_epochs = 2;
  c.train.steps_per_epoch = 2;
  return c;
}

// Random dataset-like chunk batch with the given shapes.
inline ChunkBatch random_chunk_batch(const RunConfig& c, std::int64_t b, std::uint64_t seed,
                                     torch::Dtype dtype = torch::kFloat32) {
  torch::manual_seed(seed);
  const std::int64_t v = c.scene.num_views, h = c.scene.world_size, t = c.train.chunk_length;
  auto opts = torch::TensorOptions().dtype(dtype);
  ChunkBatch batch;
  batch.images_t = torch::rand({b, v, 3, h, h}, opts);
  batch.state_t = torch::randn({b, kStateDim}, opts);
  batch.actions_t = torch::randn({b, t, kActionDim}, opts);
  batch.images_next = torch::rand({b, v, 3, h, h}, opts);
  batch.state_next = torch::randn({b, kStateDim}, opts);
  batch.actions_next = torch::randn({b, t, kActionDim}, opts);
  return batch;
}

// Central-difference check of d f / d p for every parameter tensor in
// `params`. The error per tensor is ||g_fd - g|| / max(||(g_fd, g)||, floor),
// and the largest one is returned. The floor keeps round-off on tensors whose
// true gradient is zero from counting as a relative error.
inline double max_fd_error(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& params,
                           double h = 1e-6, std::int64_t max_entries = 24, double floor = 1e-6) {
  for (auto p : params) {
    if (p.grad().defined()) p.grad().zero_();
  }
  f().backward();
  double worst = 0;
  for (auto p : params) {
    if (!p.requires_grad()) continue;
    auto analytic = p.grad().defined() ? p.grad().clone() : torch::zeros_like(p);
    auto flat = p.data().view({-1});
    const auto n = flat.numel();
    const auto stride = std::max<std::int64_t>(1, n / max_entries);
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < n; i += stride) {
      torch::NoGradGuard ng;
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = f().item<double>();
      flat[i] = orig - h;
      const double down = f().item<double>();
      flat[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = analytic.view({-1})[i].item<double>();
      num += (fd - an) * (fd - an);
      den += fd * fd + an * an;
    }
    const double err = std::sqrt(num) / std::max(std::sqrt(den), floor);
    worst = std::max(worst, err);
  }
  return worst;
}

inline std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mvs_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace mvs::testing
