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

#include "mvs/scene.hpp"
#include "support.hpp"

namespace mvs {
namespace {

SceneConfig desk_scene() { return desk_preset().scene; }

TEST(Reset, SameSeedIsBitIdentical) {
  const auto cfg = desk_scene();
  EXPECT_EQ(reset(cfg, 7), reset(cfg, 7));
}

TEST(Reset, DifferentSeedsDiffer) {
  const auto cfg = desk_scene();
  const auto a = reset(cfg, 7), b = reset(cfg, 8);
  EXPECT_NE(a.objects[0].x, b.objects[0].x);
  EXPECT_NE(a.target.y, b.target.y);
}

TEST(Reset, FreshStateAndRegions) {
  const auto cfg = desk_scene();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = reset(cfg, seed);
    EXPECT_EQ(s.step_index, 0);
    EXPECT_EQ(s.phase, Phase::kApproach);
    EXPECT_FALSE(s.holding);
    EXPECT_TRUE(cfg.object_region.contains(s.objects[0].x, s.objects[0].y));
    EXPECT_TRUE(cfg.target_region.contains(s.target.x, s.target.y));
  }
}

TEST(Step, Kinematics) {
  const auto cfg = desk_scene();
  auto s = reset(cfg, 1);
  s.gripper = {10, 10};
  const auto r = step(cfg, s, {1, 0, 0});
  EXPECT_DOUBLE_EQ(r.state.gripper.x, 11);
  EXPECT_DOUBLE_EQ(r.state.gripper.y, 10);
  EXPECT_EQ(r.state.step_index, 1);
  EXPECT_FALSE(r.success);
}

TEST(Step, ClipsToMaxStepLength) {
  const auto cfg = desk_scene();
  auto s = reset(cfg, 1);
  s.gripper = {10, 10};
  const auto r = step(cfg, s, {100, 0, 0});
  EXPECT_NEAR(distance(r.state.gripper, {10, 10}), 2.0, 1e-12);
}

TEST(Step, ReleaseOverTargetSucceeds) {
  const auto cfg = desk_scene();
  auto s = reset(cfg, 1);
  s.holding = true;
  s.phase = Phase::kCarry;
  s.gripper = s.target;
  s.objects[0] = s.target;
  const auto r = step(cfg, s, {0, 0, 0});
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.state.phase, Phase::kDone);
  EXPECT_THROW(step(cfg, r.state, {0, 0, 0}), StateError);
}

TEST(Step, ReleaseAwayFromTargetKeepsHolding) {
  const auto cfg = desk_scene();
  auto s = reset(cfg, 1);
  s.holding = true;
  s.phase = Phase::kCarry;
  s.gripper = {5, 5};
  s.objects[0] = s.gripper;
  const auto r = step(cfg, s, {0, 0, 0});
  EXPECT_FALSE(r.success);
  EXPECT_TRUE(r.state.holding);
  EXPECT_EQ(r.state.phase, Phase::kCarry);
}

TEST(Step, GraspNearObject) {
  const auto cfg = desk_scene();
  auto s = reset(cfg, 3);
  s.gripper = {s.objects[0].x + 1, s.objects[0].y};
  const auto r = step(cfg, s, {0, 0, 1});
  EXPECT_TRUE(r.state.holding);
  EXPECT_EQ(r.state.phase, Phase::kCarry);
}

TEST(Render, DeterministicAndInRange) {
  const auto cfg = desk_scene();
  const auto s = reset(cfg, 5);
  for (int v = 0; v < cfg.num_views; ++v) {
    const auto a = render(cfg, s, v), b = render(cfg, s, v);
    EXPECT_EQ(a.pixels, b.pixels);
    EXPECT_EQ(a.height, cfg.world_size);
    EXPECT_EQ(a.view_index, v);
    for (float p : a.pixels) {
      EXPECT_GE(p, 0.0f);
      EXPECT_LE(p, 1.0f);
    }
  }
  EXPECT_THROW(render(cfg, s, 2), std::out_of_range);
  EXPECT_THROW(render(cfg, s, -1), std::out_of_range);
}

TEST(Render, ViewsDiffer) {
  auto cfg = desk_scene();
  cfg.occluders.clear();
  const auto s = reset(cfg, 5);
  const auto a = render(cfg, s, 0), b = render(cfg, s, 1);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) diff += a.pixels[i] != b.pixels[i];
  EXPECT_GT(diff, 100u);
}

// Scan every pixel whose world preimage lies in the occluder rectangle.
TEST(Render, OccluderHidesTargetPixels) {
  const auto cfg = desk_scene();
  auto s = reset(cfg, 11);
  s.phase = Phase::kCarry;
  s.holding = true;
  const auto& occ = cfg.occluders[1];
  ASSERT_EQ(occ.view, 0);
  ASSERT_TRUE(occ.rect.contains(s.target.x, s.target.y));
  const auto img = render(cfg, s, 0);
  const auto cam = camera_for_view(0, cfg.world_size);
  int inside = 0;
  for (int row = 0; row < img.height; ++row) {
    for (int col = 0; col < img.width; ++col) {
      const double x = (col + 0.5 - cam.dx) / cam.scale, y = (row + 0.5 - cam.dy) / cam.scale;
      if (!occ.rect.contains(x, y)) continue;
      ++inside;
      const float* p = img.at(row, col);
      EXPECT_FALSE(p[0] == colors::kTarget[0] && p[1] == colors::kTarget[1] && p[2] == colors::kTarget[2]);
    }
  }
  EXPECT_GT(inside, 0);
  EXPECT_EQ(target_pixel_count(img), 0);
  EXPECT_GT(target_pixel_count(render(cfg, s, 1)), 0);
}

TEST(Expert, PointsTowardObject) {
  const auto cfg = desk_scene();
  auto s = reset(cfg, 2);
  s.gripper = {s.objects[0].x - 10, s.objects[0].y};
  const auto a = scripted_expert(cfg, s);
  const double dot = a.dx * (s.objects[0].x - s.gripper.x) + a.dy * (s.objects[0].y - s.gripper.y);
  EXPECT_GT(dot, 0);
  EXPECT_LE(std::hypot(a.dx, a.dy), cfg.max_step_length + 1e-12);
}

TEST(Expert, GripsWithinGraspRadius) {
  const auto cfg = desk_scene();
  auto s = reset(cfg, 2);
  s.gripper = {s.objects[0].x + 0.5, s.objects[0].y};
  EXPECT_GT(scripted_expert(cfg, s).grip, 0.5);
}

TEST(Expert, HundredSeedsAllSucceedWithMonotonePhases) {
  const auto cfg = desk_scene();
  int successes = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto s = reset(cfg, seed);
    bool ok = false;
    for (int t = 0; t < cfg.episode_max_steps && !ok; ++t) {
      const auto r = step(cfg, s, scripted_expert(cfg, s));
      EXPECT_GE(static_cast<int>(r.state.phase), static_cast<int>(s.phase));
      EXPECT_GE(r.state.gripper.x, 0);
      EXPECT_LE(r.state.gripper.x, cfg.world_size);
      s = r.state;
      ok = r.success;
    }
    successes += ok;
  }
  EXPECT_EQ(successes, 100);
}

// In every occluded phase exactly one view loses the target while another
// still shows it.
TEST(Scene, OcclusionAsymmetryAlongExpertEpisodes) {
  const auto cfg = desk_scene();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto s = reset(cfg, seed);
    while (s.phase != Phase::kDone) {
      std::vector<int> vis;
      for (int v = 0; v < cfg.num_views; ++v) vis.push_back(target_pixel_count(render(cfg, s, v)));
      const auto blind = std::count(vis.begin(), vis.end(), 0);
      EXPECT_EQ(blind, 1) << "seed " << seed << " step " << s.step_index;
      EXPECT_EQ(vis[s.phase == Phase::kApproach ? 1 : 0], 0);
      s = step(cfg, s, scripted_expert(cfg, s)).state;
    }
  }
}

TEST(Scene, ReplayIsStepForStepIdentical) {
  const auto cfg = desk_scene();
  auto a = reset(cfg, 42), b = reset(cfg, 42);
  while (a.phase != Phase::kDone) {
    a = step(cfg, a, scripted_expert(cfg, a)).state;
    b = step(cfg, b, scripted_expert(cfg, b)).state;
    ASSERT_EQ(a, b);
  }
}

}  // namespace
}  // namespace mvs
