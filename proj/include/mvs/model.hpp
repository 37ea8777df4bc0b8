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

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "mvs/config.hpp"
#include "mvs/demo_store.hpp"
#include "mvs/diffusion.hpp"
#include "mvs/mvmae.hpp"
#include "mvs/scene.hpp"
#include "mvs/selector.hpp"

namespace mvs {

// The three networks of the policy plus everything inference needs: the
// noise schedule, the dataset normalisation and the configuration that built
// them. Module members are shared handles.
struct PolicyModel {
  RunConfig config;
  MvMae mae{nullptr};
  Denoiser denoiser{nullptr};
  Selector selector{nullptr};
  NoiseSchedule schedule;
  NormStats stats;

  // Deterministic initialisation from `seed`.
  static PolicyModel create(const RunConfig& cfg, std::uint64_t seed, int state_dim = kStateDim,
                            int action_dim = kActionDim) {
    validate(cfg);
    torch::manual_seed(seed);
    PolicyModel m;
    m.config = cfg;
    m.mae = MvMae(cfg.mae, cfg.scene.num_views, cfg.scene.world_size, state_dim);
    const auto layout = m.mae->layout();
    m.denoiser = Denoiser(cfg.diffusion, layout, cfg.mae.embed_dim, cfg.train.chunk_length, action_dim);
    m.selector = Selector(cfg.selector, layout, cfg.mae.embed_dim, cfg.train.chunk_length, action_dim);
    m.schedule = build_schedule(cfg.diffusion.steps, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
    m.schedule.clip = cfg.diffusion.clip_sample;
    m.stats.action_mean.assign(action_dim, 0.0);
    m.stats.action_scale.assign(action_dim, 1.0);
    m.stats.state_mean.assign(state_dim, 0.0);
    m.stats.state_scale.assign(state_dim, 1.0);
    return m;
  }

  // phi: autoencoder (stem, encoder, decoder); theta: action decoder; psi: selector.
  std::vector<torch::Tensor> phi_parameters() const { return mae->parameters(); }
  std::vector<torch::Tensor> theta_parameters() const { return denoiser->parameters(); }
  std::vector<torch::Tensor> psi_parameters() const { return selector->parameters(); }

  void to(torch::Dtype dtype) {
    mae->to(dtype);
    denoiser->to(dtype);
    selector->to(dtype);
  }

  void train(bool on = true) {
    mae->train(on);
    denoiser->train(on);
    selector->train(on);
  }

  int chunk_length() const { return config.train.chunk_length; }
  int num_views() const { return config.scene.num_views; }
};

}  // namespace mvs
