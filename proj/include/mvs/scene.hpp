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

// Synthetic 2D pick-and-place world seen through several affine cameras.
//
// The gripper moves an object from a random start to a random target. Each
// view may carry occluders that only appear during one task phase, so the
// informative camera changes during an episode.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvs/config.hpp"
#include "mvs/error.hpp"

namespace mvs {

struct Vec2 {
  double x = 0, y = 0;
  bool operator==(const Vec2&) const = default;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class Phase { kApproach, kCarry, kDone };

struct SceneState {
  Vec2 gripper;
  bool holding = false;
  std::vector<Vec2> objects;  // objects[0] is the one to be placed
  Vec2 target;
  int step_index = 0;
  Phase phase = Phase::kApproach;
  bool operator==(const SceneState&) const = default;
};

struct Action {
  double dx = 0, dy = 0;
  double grip = 0;  // > 0.5 closes the gripper
};

inline constexpr int kStateDim = 3;   // gripper x, gripper y, holding
inline constexpr int kActionDim = 3;  // dx, dy, grip

// H x W x 3 image, row-major, channels last, values in [0, 1].
struct ViewImage {
  int view_index = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  const float* at(int row, int col) const { return &pixels[(static_cast<std::size_t>(row) * width + col) * 3]; }
  float* at(int row, int col) { return &pixels[(static_cast<std::size_t>(row) * width + col) * 3]; }
};

namespace colors {
using Rgb = std::array<float, 3>;
inline constexpr Rgb kOutside{0.0f, 0.0f, 0.0f};
inline constexpr Rgb kFloor{0.12f, 0.12f, 0.15f};
inline constexpr Rgb kTarget{0.1f, 0.9f, 0.1f};
inline constexpr Rgb kObject{0.9f, 0.15f, 0.1f};
inline constexpr Rgb kDistractor{0.9f, 0.6f, 0.1f};
inline constexpr Rgb kGripper{0.2f, 0.4f, 1.0f};
inline constexpr Rgb kGripperClosed{0.6f, 0.8f, 1.0f};
inline constexpr Rgb kOccluder{0.5f, 0.5f, 0.5f};
}  // namespace colors

inline constexpr double kTargetHalf = 3.5;
inline constexpr double kObjectHalf = 2.5;
inline constexpr double kGripperHalf = 1.5;

// Camera v maps world (x, y) to pixel (scale*x + dx, scale*y + dy). View 0 is
// the identity (top view); higher views are shrunk and shifted sideways.
struct Camera {
  double scale = 1, dx = 0, dy = 0;
};

inline Camera camera_for_view(int view, int world_size) {
  if (view == 0) return {};
  const double s = 1.0 - 0.06 * std::min(view, 8);
  const double slack = (1.0 - s) * world_size;
  const double fx = (view % 2 == 1) ? 0.75 : 0.25;
  return {s, slack * fx, slack * (1.0 - fx)};
}

inline bool occluder_active(const Occluder& o, Phase phase) {
  switch (o.phase) {
    case OccluderPhase::kAlways: return true;
    case OccluderPhase::kApproach: return phase == Phase::kApproach;
    case OccluderPhase::kPlace: return phase != Phase::kApproach;
  }
  return false;
}

inline SceneState reset(const SceneConfig& cfg, std::uint64_t episode_seed) {
  std::mt19937_64 gen(episode_seed * 0x9e3779b97f4a7c15ULL + cfg.seed + 0x632be59bd9b4e019ULL);
  auto draw = [&gen](const Rect& r) {
    std::uniform_real_distribution<double> ux(r.x0, r.x1), uy(r.y0, r.y1);
    const double x = ux(gen);
    return Vec2{x, uy(gen)};
  };
  SceneState s;
  s.gripper = {cfg.gripper_start_x, cfg.gripper_start_y};
  for (int i = 0; i < cfg.object_count; ++i) s.objects.push_back(draw(cfg.object_region));
  s.target = draw(cfg.target_region);
  return s;
}

inline Vec2 clip_delta(double dx, double dy, double max_len) {
  const double n = std::hypot(dx, dy);
  if (n > max_len && n > 0) return {dx * max_len / n, dy * max_len / n};
  return {dx, dy};
}

struct StepResult {
  SceneState state;
  bool success = false;
};

// Advances one step. Grasping latches when the gripper closes within
// grasp_radius of object 0; releasing only takes effect over the target, which
// finishes the episode. A release elsewhere is ignored, so phases stay
// monotone.
inline StepResult step(const SceneConfig& cfg, const SceneState& state, const Action& action) {
  if (state.phase == Phase::kDone) throw StateError("step() called on a finished episode");
  StepResult r{state, false};
  SceneState& s = r.state;
  const Vec2 d = clip_delta(action.dx, action.dy, cfg.max_step_length);
  const double w = cfg.world_size;
  s.gripper.x = std::clamp(s.gripper.x + d.x, 0.0, w);
  s.gripper.y = std::clamp(s.gripper.y + d.y, 0.0, w);
  const double grip = std::clamp(action.grip, 0.0, 1.0);
  if (s.holding) s.objects[0] = s.gripper;
  if (!s.holding) {
    if (grip > 0.5 && distance(s.gripper, s.objects[0]) <= cfg.grasp_radius) {
      s.holding = true;
      s.phase = Phase::kCarry;
      s.objects[0] = s.gripper;
    }
  } else if (grip <= 0.5 && distance(s.objects[0], s.target) <= cfg.place_radius) {
    s.holding = false;
    s.phase = Phase::kDone;
    r.success = true;
  }
  ++s.step_index;
  return r;
}

inline ViewImage render(const SceneConfig& cfg, const SceneState& state, int view) {
  if (view < 0 || view >= cfg.num_views) {
    throw std::out_of_range("render: view index " + std::to_string(view) + " out of range");
  }
  const int n = cfg.world_size;
  const Camera cam = camera_for_view(view, n);
  ViewImage img{view, n, n, std::vector<float>(static_cast<std::size_t>(n) * n * 3)};
  std::vector<const Occluder*> active;
  for (const auto& o : cfg.occluders) {
    if (o.view == view && occluder_active(o, state.phase)) active.push_back(&o);
  }
  auto inside = [](Vec2 c, double half, double x, double y) {
    return std::abs(x - c.x) <= half && std::abs(y - c.y) <= half;
  };
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const double x = (col + 0.5 - cam.dx) / cam.scale;
      const double y = (row + 0.5 - cam.dy) / cam.scale;
      colors::Rgb c = colors::kOutside;
      if (x >= 0 && x < n && y >= 0 && y < n) {
        c = colors::kFloor;
        if (inside(state.target, kTargetHalf, x, y)) c = colors::kTarget;
        for (std::size_t i = state.objects.size(); i-- > 0;) {
          if (inside(state.objects[i], kObjectHalf, x, y)) {
            c = i == 0 ? colors::kObject : colors::kDistractor;
          }
        }
        if (inside(state.gripper, kGripperHalf, x, y)) {
          c = state.holding ? colors::kGripperClosed : colors::kGripper;
        }
        for (const auto* o : active) {
          if (o->rect.contains(x, y)) c = colors::kOccluder;
        }
      }
      std::copy(c.begin(), c.end(), img.at(row, col));
    }
  }
  return img;
}

inline std::vector<ViewImage> render_all(const SceneConfig& cfg, const SceneState& state) {
  std::vector<ViewImage> out;
  for (int v = 0; v < cfg.num_views; ++v) out.push_back(render(cfg, state, v));
  return out;
}

// Number of pixels showing the target colour.
inline int target_pixel_count(const ViewImage& img) {
  int count = 0;
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    if (img.pixels[i] == colors::kTarget[0] && img.pixels[i + 1] == colors::kTarget[1] &&
        img.pixels[i + 2] == colors::kTarget[2]) {
      ++count;
    }
  }
  return count;
}

// Proportional controller: drive to object 0, close, drive to the target,
// open. Grip decisions look at the post-move distance so the gripper closes
// on the step it arrives.
inline Action scripted_expert(const SceneConfig& cfg, const SceneState& s) {
  if (s.phase == Phase::kDone) throw StateError("scripted_expert called on a finished episode");
  const Vec2 goal = s.holding ? s.target : s.objects[0];
  const Vec2 d = clip_delta(goal.x - s.gripper.x, goal.y - s.gripper.y, cfg.max_step_length);
  const Vec2 next{s.gripper.x + d.x, s.gripper.y + d.y};
  const double remaining = distance(next, goal);
  Action a{d.x, d.y, 0.0};
  if (!s.holding) {
    const double thr = std::max(0.5 * cfg.grasp_radius, cfg.grasp_radius - cfg.max_step_length);
    a.grip = remaining <= thr ? 1.0 : 0.0;
  } else {
    const double thr = std::max(0.5 * cfg.place_radius, cfg.place_radius - cfg.max_step_length);
    a.grip = remaining <= thr ? 0.0 : 1.0;
  }
  return a;
}

inline std::array<float, kStateDim> proprio(const SceneState& s) {
  return {static_cast<float>(s.gripper.x), static_cast<float>(s.gripper.y), s.holding ? 1.0f : 0.0f};
}

inline std::array<float, kActionDim> action_vector(const Action& a) {
  return {static_cast<float>(a.dx), static_cast<float>(a.dy), static_cast<float>(a.grip)};
}

}  // namespace mvs
