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

// Reconstruction pretraining and the joint two-chunk training iteration.
//
// One joint iteration on a pair of consecutive chunks (t, t+T):
//   1. context from one random view at t, noise-prediction loss on chunk t;
//   2. selector probabilities from (context, ground-truth chunk t), made
//      one-hot with the straight-through estimator;
//   3. the one-hot vector picks the view at t+T, whose context gives the
//      noise-prediction loss on chunk t+T;
//   4. total = L_t + lambda1 * L_next + lambda2 * L_rec, one optimiser step.
// The selector's only gradient path is L_next -> gated image -> y -> c_hat.
// In the imitation-only stage the next view is uniform random and the
// selector is not evaluated.

#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "mvs/checkpoint.hpp"
#include "mvs/config.hpp"
#include "mvs/demo_store.hpp"
#include "mvs/diffusion.hpp"
#include "mvs/model.hpp"
#include "mvs/mvmae.hpp"
#include "mvs/rng.hpp"
#include "mvs/selector.hpp"

namespace mvs {

enum class Stage { kPretrain, kImitationOnly, kJoint };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kImitationOnly: return "imitation_only";
    case Stage::kJoint: return "joint";
  }
  return "?";
}

// Imitation-only for the first stage_split fraction of the epochs, joint after.
inline Stage stage_of(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.train_epochs) throw std::out_of_range("stage_of: epoch out of range");
  return static_cast<double>(epoch) < cfg.stage_split * cfg.train_epochs ? Stage::kImitationOnly : Stage::kJoint;
}

struct LossReport {
  double action_t = 0;
  double action_next = 0;
  double mae = 0;
  double total = 0;
  int epoch = 0;
  int step = 0;
  Stage stage = Stage::kPretrain;
};

// All randomness of one joint iteration, drawn up front.
struct StepDraws {
  std::vector<std::int64_t> initial_views;
  torch::Tensor eps_t, k_t;
  torch::Tensor eps_next, k_next;
  std::vector<std::int64_t> random_next_views;  // used in the imitation-only stage
  MaskRecord mae_masks;
};

inline StepDraws draw_step(const PolicyModel& m, std::int64_t batch, Rng& rng) {
  StepDraws d;
  const int views = m.num_views();
  for (std::int64_t i = 0; i < batch; ++i) d.initial_views.push_back(rng.uniform_int(0, views - 1));
  const std::vector<std::int64_t> chunk{batch, m.chunk_length(), m.denoiser->action_dim()};
  const auto dtype = m.denoiser->dtype();
  d.eps_t = rng.normal(chunk, dtype);
  d.k_t = sample_steps(m.schedule, batch, rng);
  d.eps_next = rng.normal(chunk, dtype);
  d.k_next = sample_steps(m.schedule, batch, rng);
  for (std::int64_t i = 0; i < batch; ++i) d.random_next_views.push_back(rng.uniform_int(0, views - 1));
  d.mae_masks = draw_masks(m.mae->layout(), batch, m.config.mae, rng);
  return d;
}

// images [B, V, 3, H, W] -> [B, 3, H, W], sample b taking view views[b].
inline torch::Tensor pick_views(const torch::Tensor& images, const std::vector<std::int64_t>& views) {
  const auto idx = torch::tensor(views, torch::kInt64);
  return images.index({torch::arange(images.size(0), torch::kInt64), idx});
}

// L_t + lambda1 * L_next + lambda2 * L_rec
template <typename T>
T total_loss(const T& action_t, const T& action_next, const T& mae, const TrainConfig& cfg) {
  return action_t + cfg.lambda1 * action_next + cfg.lambda2 * mae;
}

struct StepGraph {
  torch::Tensor action_t, action_next, mae, total;
  ViewChoice choice;  // joint stage only
  std::vector<std::int64_t> next_views;
};

inline StepGraph forward_step(PolicyModel& m, const ChunkBatch& batch, const StepDraws& d, Stage stage,
                              const TrainConfig& cfg) {
  if (stage == Stage::kPretrain) throw std::invalid_argument("forward_step: not a training stage");
  StepGraph g;
  auto ctx_t = m.mae->context_from_single_view(pick_views(batch.images_t, d.initial_views), d.initial_views,
                                               batch.state_t);
  g.action_t = action_loss(m.denoiser, m.schedule, ctx_t, batch.actions_t, d.eps_t, d.k_t);

  torch::Tensor y;
  if (stage == Stage::kJoint) {
    g.choice = select(m.selector, ctx_t, batch.actions_t);
    y = g.choice.y;
    g.next_views = g.choice.chosen;
  } else {
    g.next_views = d.random_next_views;
    y = one_hot_rows(g.next_views, m.num_views(), m.mae->dtype());
  }
  auto gated = gate_observation(y, batch.images_next);
  auto ctx_next = m.mae->context_from_single_view(gated, g.next_views, batch.state_next);
  g.action_next = action_loss(m.denoiser, m.schedule, ctx_next, batch.actions_next, d.eps_next, d.k_next);

  g.mae = reconstruction_loss(m.mae, batch.images_t, batch.state_t, d.mae_masks);
  g.total = total_loss(g.action_t, g.action_next, g.mae, cfg);
  return g;
}

inline double cosine_lr(double base, long long step, long long total) {
  if (total <= 1) return base;
  return 0.5 * base * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total)));
}

inline void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
}

inline std::unique_ptr<torch::optim::AdamW> make_optimizer(const std::vector<torch::Tensor>& params,
                                                           const TrainConfig& cfg) {
  return std::make_unique<torch::optim::AdamW>(
      params, torch::optim::AdamWOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}).weight_decay(cfg.weight_decay));
}

inline std::vector<torch::Tensor> all_parameters(const PolicyModel& m) {
  auto p = m.phi_parameters();
  for (auto& t : m.theta_parameters()) p.push_back(t);
  for (auto& t : m.psi_parameters()) p.push_back(t);
  return p;
}

// Backward pass and one optimiser step for an already-built graph.
inline LossReport finish_step(PolicyModel& m, torch::optim::Optimizer& opt, const StepGraph& g, Stage stage,
                              const TrainConfig& cfg) {
  opt.zero_grad();
  g.total.backward();
  if (stage == Stage::kJoint && !cfg.selector_grad_weighted && cfg.lambda1 > 0) {
    torch::NoGradGuard no_grad;
    for (auto& p : m.psi_parameters())
      if (p.grad().defined()) p.grad().div_(cfg.lambda1);
  }
  opt.step();
  LossReport r;
  r.action_t = g.action_t.item<double>();
  r.action_next = g.action_next.item<double>();
  r.mae = g.mae.item<double>();
  r.total = g.total.item<double>();
  r.stage = stage;
  return r;
}

inline LossReport train_step(PolicyModel& m, torch::optim::Optimizer& opt, const ChunkBatch& batch,
                             const StepDraws& draws, Stage stage, const TrainConfig& cfg) {
  m.train(true);
  return finish_step(m, opt, forward_step(m, batch, draws, stage, cfg), stage, cfg);
}

inline LossReport train_step(PolicyModel& m, torch::optim::Optimizer& opt, const ChunkBatch& batch, Rng& rng,
                             Stage stage, const TrainConfig& cfg) {
  return train_step(m, opt, batch, draw_step(m, batch.size(), rng), stage, cfg);
}

// Dual masking, encode, decode, reconstruction loss, one update of the
// autoencoder parameters.
inline LossReport pretrain_step(PolicyModel& m, torch::optim::Optimizer& opt, const FrameBatch& batch, Rng& rng) {
  m.train(true);
  const auto masks = draw_masks(m.mae->layout(), batch.images.size(0), m.config.mae, rng);
  opt.zero_grad();
  auto loss = reconstruction_loss(m.mae, batch.images, batch.state, masks);
  loss.backward();
  opt.step();
  LossReport r;
  r.mae = r.total = loss.item<double>();
  r.stage = Stage::kPretrain;
  return r;
}

inline bool verbose_logging() {
  const char* v = std::getenv("MVS_VERBOSE");
  return v != nullptr && std::string(v) != "0";
}

inline std::string fmt_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Seeds of the independent streams used by the phases of a run.
inline std::uint64_t init_seed(const TrainConfig& c) { return c.seed * 6364136223846793005ULL + 1; }
inline std::uint64_t pretrain_seed(const TrainConfig& c) { return c.seed * 6364136223846793005ULL + 2; }
inline std::uint64_t joint_seed(const TrainConfig& c) { return c.seed * 6364136223846793005ULL + 3; }

// Runs all pretraining epochs. Writes one CSV row per step when `csv` is set.
inline std::vector<LossReport> pretrain(PolicyModel& m, const Dataset& ds, std::ostream* csv = nullptr) {
  const auto& cfg = m.config.train;
  Rng rng(pretrain_seed(cfg));
  auto opt = make_optimizer(m.phi_parameters(), cfg);
  const long long total = static_cast<long long>(cfg.pretrain_epochs) * cfg.steps_per_epoch;
  std::vector<LossReport> log;
  if (csv) *csv << "step,epoch,l_mae\n";
  long long step = 0;
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    for (int s = 0; s < cfg.steps_per_epoch; ++s, ++step) {
      set_lr(*opt, cosine_lr(cfg.lr, step, total));
      auto batch = sample_frame_batch(ds, cfg.pretrain_batch, rng);
      auto r = pretrain_step(m, *opt, batch, rng);
      r.epoch = epoch;
      r.step = static_cast<int>(step);
      if (csv) *csv << r.step << "," << r.epoch << "," << fmt_loss(r.mae) << "\n";
      log.push_back(r);
    }
    if (verbose_logging()) {
      std::cerr << "[pretrain] epoch " << epoch << " l_mae " << log.back().mae << "\n";
    }
  }
  return log;
}

struct TrainHooks {
  // Called once before the first step with the model being trained.
  std::function<void(PolicyModel&)> on_start;
  // Called after every epoch with the epoch index and its stage.
  std::function<void(int, Stage)> on_epoch_end;
};

// Two-stage joint training. Writes metrics rows to `csv` and checkpoints to
// `checkpoint_dir` (when non-empty) every checkpoint_every epochs and at the end.
inline std::vector<LossReport> train(PolicyModel& m, const Dataset& ds, std::ostream* csv = nullptr,
                                     const std::string& checkpoint_dir = "", const TrainHooks& hooks = {}) {
  const auto& cfg = m.config.train;
  Rng rng(joint_seed(cfg));
  auto opt = make_optimizer(all_parameters(m), cfg);
  const long long total = static_cast<long long>(cfg.train_epochs) * cfg.steps_per_epoch;
  std::vector<LossReport> log;
  if (csv) *csv << "step,epoch,stage,l_action_t,l_action_next,l_mae,l_total\n";
  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);
  if (hooks.on_start) hooks.on_start(m);
  long long step = 0;
  for (int epoch = 0; epoch < cfg.train_epochs; ++epoch) {
    const Stage stage = stage_of(epoch, cfg);
    for (int s = 0; s < cfg.steps_per_epoch; ++s, ++step) {
      set_lr(*opt, cosine_lr(cfg.lr, step, total));
      auto batch = sample_chunk_batch(ds, cfg.chunk_length, cfg.batch, rng);
      auto r = train_step(m, *opt, batch, rng, stage, cfg);
      r.epoch = epoch;
      r.step = static_cast<int>(step);
      if (csv) {
        *csv << r.step << "," << r.epoch << "," << stage_name(stage) << "," << fmt_loss(r.action_t) << ","
             << fmt_loss(r.action_next) << "," << fmt_loss(r.mae) << "," << fmt_loss(r.total) << "\n";
      }
      log.push_back(r);
    }
    if (verbose_logging()) {
      std::cerr << "[train] epoch " << epoch << " " << stage_name(stage) << " l_t " << log.back().action_t
                << " l_next " << log.back().action_next << " l_mae " << log.back().mae << "\n";
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, stage);
    if (!checkpoint_dir.empty() && ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.train_epochs)) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%05d.ckpt", epoch + 1);
      save_checkpoint(m, (std::filesystem::path(checkpoint_dir) / name).string());
    }
  }
  return log;
}

struct RunOutputs {
  std::string checkpoint;
  std::string metrics_csv;
  std::string pretrain_csv;
};

// Pretraining then two-stage training; everything lands in `out_dir`.
inline RunOutputs run(const RunConfig& cfg, const Dataset& ds, const std::string& out_dir, const TrainHooks& hooks = {}) {
  namespace fs = std::filesystem;
  validate(cfg);
  if (ds.num_views != cfg.scene.num_views || ds.height != cfg.scene.world_size) {
    throw ShapeError("dataset dimensions do not match the configuration");
  }
  fs::create_directories(out_dir);
  write_config(cfg, (fs::path(out_dir) / "resolved_config.txt").string());
  auto m = PolicyModel::create(cfg, init_seed(cfg.train), ds.state_dim, ds.action_dim);
  m.stats = ds.stats;
  RunOutputs out;
  out.pretrain_csv = (fs::path(out_dir) / "pretrain_metrics.csv").string();
  out.metrics_csv = (fs::path(out_dir) / "metrics.csv").string();
  out.checkpoint = (fs::path(out_dir) / "final.ckpt").string();
  {
    std::ofstream csv(out.pretrain_csv);
    if (!csv) throw Error("cannot write '" + out.pretrain_csv + "'");
    pretrain(m, ds, &csv);
  }
  save_checkpoint(m, (fs::path(out_dir) / "pretrained.ckpt").string());
  {
    std::ofstream csv(out.metrics_csv);
    if (!csv) throw Error("cannot write '" + out.metrics_csv + "'");
    train(m, ds, &csv, (fs::path(out_dir) / "checkpoints").string(), hooks);
  }
  save_checkpoint(m, out.checkpoint);
  return out;
}

}  // namespace mvs
