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

// Closed-loop rollouts at chunk granularity and the evaluation harness.
//
// Each chunk: render the current view, build the context, sample T actions,
// pick the view for the next chunk, then execute the actions open-loop.

#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvs/config.hpp"
#include "mvs/demo_store.hpp"
#include "mvs/diffusion.hpp"
#include "mvs/error.hpp"
#include "mvs/image_io.hpp"
#include "mvs/model.hpp"
#include "mvs/rng.hpp"
#include "mvs/scene.hpp"
#include "mvs/selector.hpp"

namespace mvs {

enum class ViewMode { kLearned, kFixed, kRandom, kOracle, kAllViews };

struct ViewPolicyMode {
  ViewMode kind = ViewMode::kLearned;
  int view = 0;  // kFixed only

  std::string name() const {
    switch (kind) {
      case ViewMode::kLearned: return "learned";
      case ViewMode::kFixed: return "fixed:" + std::to_string(view);
      case ViewMode::kRandom: return "random";
      case ViewMode::kOracle: return "oracle";
      case ViewMode::kAllViews: return "all_views";
    }
    return "?";
  }
  bool operator==(const ViewPolicyMode&) const = default;
};

// Accepts learned, fixed:<i>, random, oracle, all_views (and the long forms
// learned_selector, random_each_chunk, oracle_best, all_views_concat).
inline ViewPolicyMode parse_mode(const std::string& s, int num_views) {
  if (s == "learned" || s == "learned_selector") return {ViewMode::kLearned, 0};
  if (s == "random" || s == "random_each_chunk") return {ViewMode::kRandom, 0};
  if (s == "oracle" || s == "oracle_best") return {ViewMode::kOracle, 0};
  if (s == "all_views" || s == "all_views_concat") return {ViewMode::kAllViews, 0};
  if (s.rfind("fixed:", 0) == 0) {
    const auto idx = s.substr(6);
    if (!idx.empty() && std::all_of(idx.begin(), idx.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
        idx.size() < 6) {
      const int v = std::stoi(idx);
      if (v < num_views) return {ViewMode::kFixed, v};
      throw ConfigError("mode '" + s + "': view index out of range for " + std::to_string(num_views) + " views");
    }
  }
  throw ConfigError("unknown view mode '" + s + "'");
}

inline std::vector<ViewPolicyMode> parse_modes(const std::string& list, int num_views) {
  std::vector<ViewPolicyMode> out;
  for (const auto& m : split_modes(list)) out.push_back(parse_mode(m, num_views));
  if (out.empty()) throw ConfigError("no view modes given");
  return out;
}

struct ChunkRecord {
  int view = 0;                     // -1 when every view was observed
  int start_step = 0;
  int steps = 0;                    // environment steps executed
  std::vector<double> c_hat;        // selector output that chose this view (learned mode, chunk > 0)
  std::vector<Action> actions;      // denormalised predicted chunk
  std::vector<int> target_visible;  // target pixels per view at chunk start
  Phase phase = Phase::kApproach;   // phase at chunk start
  bool success_so_far = false;
  std::vector<ViewImage> frames;    // every view at chunk start, when kept
};

struct EpisodeTrace {
  std::string mode;
  std::uint64_t seed = 0;
  int num_views = 0;
  int chunk_length = 0;
  bool success = false;
  int steps = 0;
  int switches = 0;
  std::vector<ChunkRecord> chunks;
};

struct RolloutOptions {
  bool keep_frames = false;
  SelectorActionSource selector_actions = SelectorActionSource::kPredicted;
};

// View with the most target pixels in the current state, lowest index on ties.
inline int oracle_view(const SceneState& state, const SceneConfig& env) {
  int best = 0, best_count = -1;
  for (int v = 0; v < env.num_views; ++v) {
    const int c = target_pixel_count(render(env, state, v));
    if (c > best_count) {
      best = v;
      best_count = c;
    }
  }
  return best;
}

// [1, V, 3, H, W] from rendered views.
inline torch::Tensor views_tensor(const std::vector<ViewImage>& views) {
  std::vector<torch::Tensor> out;
  for (const auto& img : views) {
    auto t = torch::from_blob(const_cast<float*>(img.pixels.data()), {img.height, img.width, 3}, torch::kFloat32);
    out.push_back(t.permute({2, 0, 1}).clone());
  }
  return torch::stack(out).unsqueeze(0);
}

inline torch::Tensor state_row(const SceneState& s, const NormStats& stats) {
  const auto p = proprio(s);
  return stats.normalize_states(torch::tensor(std::vector<float>(p.begin(), p.end())).view({1, kStateDim}));
}

// The scripted expert's next T actions from `s`, normalised, [1, T, A].
// Rolls the expert forward; once finished the last action is repeated.
inline torch::Tensor expert_chunk(const SceneConfig& env, SceneState s, int chunk_length, const NormStats& stats) {
  std::vector<float> flat;
  Action last;
  for (int i = 0; i < chunk_length; ++i) {
    if (s.phase != Phase::kDone) {
      last = scripted_expert(env, s);
      s = step(env, s, last).state;
    }
    const auto a = action_vector(last);
    flat.insert(flat.end(), a.begin(), a.end());
  }
  return stats.normalize_actions(torch::tensor(flat).view({1, chunk_length, kActionDim}));
}

inline void check_compatible(const PolicyModel& m, const SceneConfig& env) {
  if (env.num_views != m.num_views() || env.world_size != m.mae->image_size()) {
    throw ShapeError("environment (" + std::to_string(env.num_views) + " views, " + std::to_string(env.world_size) +
                     " px) does not match the checkpoint (" + std::to_string(m.num_views()) + " views, " +
                     std::to_string(m.mae->image_size()) + " px)");
  }
}

inline EpisodeTrace run_episode(PolicyModel& m, const SceneConfig& env, const ViewPolicyMode& mode,
                                std::uint64_t seed, const RolloutOptions& opt = {}) {
  check_compatible(m, env);
  if (mode.kind == ViewMode::kFixed && (mode.view < 0 || mode.view >= env.num_views)) {
    throw ConfigError("fixed view index out of range");
  }
  m.train(false);
  torch::NoGradGuard no_grad;
  Rng rng(seed * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
  const int T = m.chunk_length();
  EpisodeTrace trace;
  trace.mode = mode.name();
  trace.seed = seed;
  trace.num_views = env.num_views;
  trace.chunk_length = T;

  SceneState s = reset(env, seed);
  int view = 0;
  switch (mode.kind) {
    case ViewMode::kFixed: view = mode.view; break;
    case ViewMode::kOracle: view = oracle_view(s, env); break;
    case ViewMode::kAllViews: view = -1; break;
    default: view = static_cast<int>(rng.uniform_int(0, env.num_views - 1));
  }
  std::vector<double> pending_c_hat;

  while (s.phase != Phase::kDone && trace.steps < env.episode_max_steps) {
    ChunkRecord rec;
    rec.view = view;
    rec.start_step = trace.steps;
    rec.phase = s.phase;
    rec.c_hat = std::move(pending_c_hat);
    pending_c_hat.clear();
    const auto frames = render_all(env, s);
    for (const auto& f : frames) rec.target_visible.push_back(target_pixel_count(f));
    const auto images = views_tensor(frames);
    const auto state = state_row(s, m.stats);

    const Context ctx = view < 0 ? m.mae->context_from_views(images, state)
                                 : m.mae->context_from_single_view(images.select(1, view), {view}, state);
    const auto chunk_norm = sample_actions(m.denoiser, m.schedule, ctx, rng);
    const auto chunk = m.stats.denormalize_actions(chunk_norm).to(torch::kFloat64).contiguous();
    auto acc = chunk.accessor<double, 3>();
    for (int i = 0; i < T; ++i) rec.actions.push_back({acc[0][i][0], acc[0][i][1], acc[0][i][2]});

    int next_learned = -1;
    if (mode.kind == ViewMode::kLearned) {
      const auto sel_actions = opt.selector_actions == SelectorActionSource::kExpert
                                   ? expert_chunk(env, s, T, m.stats)
                                   : chunk_norm;
      const auto choice = select(m.selector, ctx, sel_actions);
      next_learned = static_cast<int>(choice.chosen[0]);
      const auto c = choice.c_hat.to(torch::kFloat64).contiguous();
      pending_c_hat.assign(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
    }

    if (opt.keep_frames) rec.frames = frames;
    for (int i = 0; i < T && s.phase != Phase::kDone && trace.steps < env.episode_max_steps; ++i) {
      const auto r = step(env, s, rec.actions[i]);
      s = r.state;
      ++trace.steps;
      ++rec.steps;
      if (r.success) trace.success = true;
    }
    rec.success_so_far = trace.success;
    trace.chunks.push_back(std::move(rec));
    if (s.phase == Phase::kDone || trace.steps >= env.episode_max_steps) break;

    int next = view;
    switch (mode.kind) {
      case ViewMode::kFixed: next = mode.view; break;
      case ViewMode::kRandom: next = static_cast<int>(rng.uniform_int(0, env.num_views - 1)); break;
      case ViewMode::kOracle: next = oracle_view(s, env); break;
      case ViewMode::kAllViews: next = -1; break;
      case ViewMode::kLearned: next = next_learned; break;
    }
    if (next != view) ++trace.switches;
    view = next;
  }
  return trace;
}

struct ModeSummary {
  std::string mode;
  int episodes = 0;
  int successes = 0;
  double mean_steps = 0;
  double mean_switches = 0;
  int episodes_with_switch = 0;
  double success_rate() const { return episodes > 0 ? static_cast<double>(successes) / episodes : 0.0; }
};

struct EvalResults {
  std::vector<std::uint64_t> seeds;
  std::vector<EpisodeTrace> traces;
  std::vector<ModeSummary> summaries;
};

inline ModeSummary summarize(const std::string& mode, const std::vector<EpisodeTrace>& traces) {
  ModeSummary s;
  s.mode = mode;
  for (const auto& t : traces) {
    if (t.mode != mode) continue;
    ++s.episodes;
    s.successes += t.success ? 1 : 0;
    s.mean_steps += t.steps;
    s.mean_switches += t.switches;
    s.episodes_with_switch += t.switches > 0 ? 1 : 0;
  }
  if (s.episodes > 0) {
    s.mean_steps /= s.episodes;
    s.mean_switches /= s.episodes;
  }
  return s;
}

// Every mode runs on the same seed list.
inline EvalResults evaluate(PolicyModel& m, const SceneConfig& env, const std::vector<ViewPolicyMode>& modes,
                            int n_episodes, std::uint64_t seed, const RolloutOptions& opt = {}) {
  if (n_episodes < 1) throw ConfigError("evaluate: need at least one episode");
  check_compatible(m, env);
  EvalResults r;
  r.seeds = episode_seeds(seed, n_episodes);
  for (const auto& mode : modes) {
    for (auto s : r.seeds) r.traces.push_back(run_episode(m, env, mode, s, opt));
    r.summaries.push_back(summarize(mode.name(), r.traces));
  }
  return r;
}

inline void write_results_csv(const EvalResults& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  os << "mode,seed,success,steps,switches\n";
  for (const auto& t : r.traces) {
    os << t.mode << "," << t.seed << "," << (t.success ? 1 : 0) << "," << t.steps << "," << t.switches << "\n";
  }
}

inline std::string format_table(const EvalResults& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %8s %9s %8s %10s %10s\n", "mode", "episodes", "success", "rate",
                "mean_steps", "switches");
  os << line;
  for (const auto& s : r.summaries) {
    std::snprintf(line, sizeof(line), "%-12s %8d %9d %8.3f %10.2f %10.2f\n", s.mode.c_str(), s.episodes,
                  s.successes, s.success_rate(), s.mean_steps, s.mean_switches);
    os << line;
  }
  return os.str();
}

// Chunks (after the first) where exactly one view of two or more shows no
// target and the chosen view shows some; returns {hits, eligible}.
inline std::pair<int, int> informative_view_hits(const std::vector<EpisodeTrace>& traces,
                                                 const std::string& mode = "learned") {
  int hits = 0, eligible = 0;
  for (const auto& t : traces) {
    if (t.mode != mode) continue;
    for (std::size_t c = 1; c < t.chunks.size(); ++c) {
      const auto& ch = t.chunks[c];
      if (ch.view < 0) continue;
      const auto blind = std::count(ch.target_visible.begin(), ch.target_visible.end(), 0);
      if (blind == 0 || blind == static_cast<long>(ch.target_visible.size())) continue;
      ++eligible;
      if (ch.target_visible[ch.view] > 0) ++hits;
    }
  }
  return {hits, eligible};
}

// One row per chunk, one column per view; unselected cells are scaled by
// `dim`. Needs a trace recorded with keep_frames.
inline void visualize(const EpisodeTrace& trace, const std::string& path, double dim = 0.3) {
  if (trace.chunks.empty()) throw StateError("visualize: empty trace");
  const auto& first = trace.chunks.front().frames;
  if (first.empty()) throw StateError("visualize: trace was recorded without frames");
  const int h = first[0].height, w = first[0].width, gap = 2;
  const int cols = trace.num_views, rows = static_cast<int>(trace.chunks.size());
  const int W = cols * w + (cols - 1) * gap, H = rows * h + (rows - 1) * gap;
  std::vector<float> rgb(static_cast<std::size_t>(W) * H * 3, 1.0f);
  for (int r = 0; r < rows; ++r) {
    const auto& ch = trace.chunks[r];
    if (static_cast<int>(ch.frames.size()) != cols) throw StateError("visualize: chunk without frames");
    for (int v = 0; v < cols; ++v) {
      const float k = (ch.view < 0 || ch.view == v) ? 1.0f : static_cast<float>(dim);
      const auto& img = ch.frames[v];
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const float* src = img.at(y, x);
          float* dst = &rgb[(static_cast<std::size_t>(r * (h + gap) + y) * W + v * (w + gap) + x) * 3];
          for (int c = 0; c < 3; ++c) dst[c] = src[c] * k;
        }
    }
  }
  write_png(path, W, H, rgb);
}

}  // namespace mvs
