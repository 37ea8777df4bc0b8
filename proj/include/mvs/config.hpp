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

// Run configuration: one flat `section.key = value` file drives every module.
// Presets ("desk", "paper") fill defaults; any key may then be overridden by
// the file or by `--set key=value` flags. Unknown keys are errors.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mvs/error.hpp"

namespace mvs {

struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool operator==(const Rect&) const = default;
};

enum class OccluderPhase { kApproach, kPlace, kAlways };

struct Occluder {
  int view = 0;
  Rect rect;
  OccluderPhase phase = OccluderPhase::kAlways;
  bool operator==(const Occluder&) const = default;
};

struct SceneConfig {
  int world_size = 64;
  int num_views = 2;
  std::vector<Occluder> occluders;
  int object_count = 1;
  int episode_max_steps = 96;
  std::uint64_t seed = 0;
  double max_step_length = 2.0;
  double grasp_radius = 4.0;
  double place_radius = 5.0;
  Rect object_region{8, 8, 28, 56};
  Rect target_region{40, 8, 56, 56};
  double gripper_start_x = 32;
  double gripper_start_y = 60;
  bool operator==(const SceneConfig&) const = default;
};

enum class ContextMode { kFullAutoencoder, kEncoderOnly };

struct MaeConfig {
  int patch_size = 8;
  int embed_dim = 128;  // feature dim equals embed dim
  int encoder_layers = 4;
  int decoder_layers = 2;
  int heads = 4;
  int mlp_ratio = 4;
  double patch_mask_ratio = 0.75;
  double view_mask_prob = 0.5;
  ContextMode context_mode = ContextMode::kFullAutoencoder;
  bool operator==(const MaeConfig&) const = default;
};

struct DiffusionConfig {
  int steps = 50;
  double beta_start = 2e-3;
  double beta_end = 0.4;
  double clip_sample = 3.0;  // bound on the predicted clean chunk while sampling; 0 = off
  int dim = 64;
  int layers = 2;
  int heads = 4;
  bool operator==(const DiffusionConfig&) const = default;
};

struct SelectorConfig {
  int dim = 64;
  int layers = 2;
  int heads = 4;
  bool operator==(const SelectorConfig&) const = default;
};

struct TrainConfig {
  int chunk_length = 8;
  double lambda1 = 2.0;
  double lambda2 = 1.0;
  int pretrain_epochs = 60;
  int train_epochs = 120;
  int steps_per_epoch = 40;
  int pretrain_batch = 16;
  int batch = 16;
  double lr = 5e-4;
  double weight_decay = 1e-6;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double stage_split = 0.5;
  std::uint64_t seed = 0;
  // When false the selector receives the unweighted gradient of the
  // next-chunk action loss instead of the lambda1-weighted one.
  bool selector_grad_weighted = true;
  int checkpoint_every = 20;
  bool operator==(const TrainConfig&) const = default;
};

enum class SelectorActionSource { kPredicted, kExpert };

struct EvalConfig {
  int episodes = 50;
  std::uint64_t seed = 1000;
  std::string modes = "learned,fixed:0,fixed:1,random,oracle,all_views";
  SelectorActionSource selector_actions = SelectorActionSource::kPredicted;
  bool operator==(const EvalConfig&) const = default;
};

struct DataConfig {
  int episodes = 50;
  std::uint64_t seed = 1;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  std::string preset = "desk";
  SceneConfig scene;
  MaeConfig mae;
  DiffusionConfig diffusion;
  SelectorConfig selector;
  TrainConfig train;
  EvalConfig eval;
  DataConfig data;
  bool operator==(const RunConfig&) const = default;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a real number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto i = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline Rect parse_rect(const std::string& key, const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() != 4) throw ConfigError("config key '" + key + "': expected x0,y0,x1,y1");
  return {parse_double(key, parts[0]), parse_double(key, parts[1]), parse_double(key, parts[2]),
          parse_double(key, parts[3])};
}

inline std::string fmt_rect(const Rect& r) {
  return fmt_double(r.x0) + "," + fmt_double(r.y0) + "," + fmt_double(r.x1) + "," +
         fmt_double(r.y1);
}

inline const char* phase_name(OccluderPhase p) {
  switch (p) {
    case OccluderPhase::kApproach: return "approach";
    case OccluderPhase::kPlace: return "place";
    case OccluderPhase::kAlways: return "always";
  }
  return "always";
}

// "view:phase:x0,y0,x1,y1;view:phase:..." (empty string = no occluders)
inline std::vector<Occluder> parse_occluders(const std::string& key, const std::string& v) {
  std::vector<Occluder> out;
  if (trim(v).empty() || trim(v) == "none") return out;
  for (const auto& item : split(v, ';')) {
    if (item.empty()) continue;
    const auto parts = split(item, ':');
    if (parts.size() != 3) throw ConfigError("config key '" + key + "': bad occluder '" + item + "'");
    Occluder o;
    o.view = static_cast<int>(parse_int(key, parts[0]));
    if (parts[1] == "approach") {
      o.phase = OccluderPhase::kApproach;
    } else if (parts[1] == "place") {
      o.phase = OccluderPhase::kPlace;
    } else if (parts[1] == "always") {
      o.phase = OccluderPhase::kAlways;
    } else {
      throw ConfigError("config key '" + key + "': unknown occluder phase '" + parts[1] + "'");
    }
    o.rect = parse_rect(key, parts[2]);
    out.push_back(o);
  }
  return out;
}

inline std::string fmt_occluders(const std::vector<Occluder>& occ) {
  if (occ.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < occ.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(occ[i].view) + ":" + phase_name(occ[i].phase) + ":" + fmt_rect(occ[i].rect);
  }
  return s;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MVS_INT_FIELD(KEY, MEMBER)                                                        \
  Field{KEY, [](RunConfig& c, const std::string& v) {                                     \
          c.MEMBER = static_cast<decltype(c.MEMBER)>(parse_int(KEY, v));                  \
        },                                                                                \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define MVS_U64_FIELD(KEY, MEMBER)                                                           \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_u64(KEY, v); },       \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define MVS_REAL_FIELD(KEY, MEMBER)                                                          \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_double(KEY, v); },    \
        [](const RunConfig& c) { return fmt_double(c.MEMBER); }}
#define MVS_BOOL_FIELD(KEY, MEMBER)                                                          \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); },      \
        [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }}
#define MVS_RECT_FIELD(KEY, MEMBER)                                                          \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_rect(KEY, v); },      \
        [](const RunConfig& c) { return fmt_rect(c.MEMBER); }}

// Schema in canonical (snapshot) order.
inline const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      Field{"preset", [](RunConfig& c, const std::string& v) { c.preset = v; },
            [](const RunConfig& c) { return c.preset; }},
      MVS_INT_FIELD("scene.world_size", scene.world_size),
      MVS_INT_FIELD("scene.num_views", scene.num_views),
      Field{"scene.occluders",
            [](RunConfig& c, const std::string& v) {
              c.scene.occluders = parse_occluders("scene.occluders", v);
            },
            [](const RunConfig& c) { return fmt_occluders(c.scene.occluders); }},
      MVS_INT_FIELD("scene.object_count", scene.object_count),
      MVS_INT_FIELD("scene.episode_max_steps", scene.episode_max_steps),
      MVS_U64_FIELD("scene.seed", scene.seed),
      MVS_REAL_FIELD("scene.max_step_length", scene.max_step_length),
      MVS_REAL_FIELD("scene.grasp_radius", scene.grasp_radius),
      MVS_REAL_FIELD("scene.place_radius", scene.place_radius),
      MVS_RECT_FIELD("scene.object_region", scene.object_region),
      MVS_RECT_FIELD("scene.target_region", scene.target_region),
      MVS_REAL_FIELD("scene.gripper_start_x", scene.gripper_start_x),
      MVS_REAL_FIELD("scene.gripper_start_y", scene.gripper_start_y),
      MVS_INT_FIELD("mae.patch_size", mae.patch_size),
      MVS_INT_FIELD("mae.embed_dim", mae.embed_dim),
      MVS_INT_FIELD("mae.encoder_layers", mae.encoder_layers),
      MVS_INT_FIELD("mae.decoder_layers", mae.decoder_layers),
      MVS_INT_FIELD("mae.heads", mae.heads),
      MVS_INT_FIELD("mae.mlp_ratio", mae.mlp_ratio),
      MVS_REAL_FIELD("mae.patch_mask_ratio", mae.patch_mask_ratio),
      MVS_REAL_FIELD("mae.view_mask_prob", mae.view_mask_prob),
      Field{"mae.context_mode",
            [](RunConfig& c, const std::string& v) {
              if (v == "full_autoencoder") {
                c.mae.context_mode = ContextMode::kFullAutoencoder;
              } else if (v == "encoder_only") {
                c.mae.context_mode = ContextMode::kEncoderOnly;
              } else {
                throw ConfigError("config key 'mae.context_mode': expected full_autoencoder or "
                                  "encoder_only, got '" + v + "'");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.mae.context_mode == ContextMode::kEncoderOnly
                                     ? "encoder_only"
                                     : "full_autoencoder");
            }},
      MVS_INT_FIELD("diffusion.steps", diffusion.steps),
      MVS_REAL_FIELD("diffusion.beta_start", diffusion.beta_start),
      MVS_REAL_FIELD("diffusion.beta_end", diffusion.beta_end),
      MVS_REAL_FIELD("diffusion.clip_sample", diffusion.clip_sample),
      MVS_INT_FIELD("diffusion.dim", diffusion.dim),
      MVS_INT_FIELD("diffusion.layers", diffusion.layers),
      MVS_INT_FIELD("diffusion.heads", diffusion.heads),
      MVS_INT_FIELD("selector.dim", selector.dim),
      MVS_INT_FIELD("selector.layers", selector.layers),
      MVS_INT_FIELD("selector.heads", selector.heads),
      MVS_INT_FIELD("train.chunk_length", train.chunk_length),
      MVS_REAL_FIELD("train.lambda1", train.lambda1),
      MVS_REAL_FIELD("train.lambda2", train.lambda2),
      MVS_INT_FIELD("train.pretrain_epochs", train.pretrain_epochs),
      MVS_INT_FIELD("train.train_epochs", train.train_epochs),
      MVS_INT_FIELD("train.steps_per_epoch", train.steps_per_epoch),
      MVS_INT_FIELD("train.pretrain_batch", train.pretrain_batch),
      MVS_INT_FIELD("train.batch", train.batch),
      MVS_REAL_FIELD("train.lr", train.lr),
      MVS_REAL_FIELD("train.weight_decay", train.weight_decay),
      MVS_REAL_FIELD("train.beta1", train.beta1),
      MVS_REAL_FIELD("train.beta2", train.beta2),
      MVS_REAL_FIELD("train.stage_split", train.stage_split),
      MVS_U64_FIELD("train.seed", train.seed),
      MVS_BOOL_FIELD("train.selector_grad_weighted", train.selector_grad_weighted),
      MVS_INT_FIELD("train.checkpoint_every", train.checkpoint_every),
      MVS_INT_FIELD("eval.episodes", eval.episodes),
      MVS_U64_FIELD("eval.seed", eval.seed),
      Field{"eval.modes", [](RunConfig& c, const std::string& v) { c.eval.modes = v; },
            [](const RunConfig& c) { return c.eval.modes; }},
      Field{"eval.selector_actions",
            [](RunConfig& c, const std::string& v) {
              if (v == "predicted") {
                c.eval.selector_actions = SelectorActionSource::kPredicted;
              } else if (v == "expert") {
                c.eval.selector_actions = SelectorActionSource::kExpert;
              } else {
                throw ConfigError("config key 'eval.selector_actions': expected predicted or "
                                  "expert, got '" + v + "'");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.eval.selector_actions == SelectorActionSource::kExpert
                                     ? "expert"
                                     : "predicted");
            }},
      MVS_INT_FIELD("data.episodes", data.episodes),
      MVS_U64_FIELD("data.seed", data.seed),
  };
  return fields;
}

#undef MVS_INT_FIELD
#undef MVS_U64_FIELD
#undef MVS_REAL_FIELD
#undef MVS_BOOL_FIELD
#undef MVS_RECT_FIELD

}  // namespace config_detail

// Desk-scale defaults: a 2-view 64x64 world with phase-gated occluders. View 1
// is blind while approaching the object, view 0 cannot see the target while
// carrying it.
inline RunConfig desk_preset() {
  RunConfig c;
  c.preset = "desk";
  c.scene.occluders = {
      Occluder{1, Rect{0, 0, 64, 64}, OccluderPhase::kApproach},
      Occluder{0, Rect{34, 0, 64, 64}, OccluderPhase::kPlace},
  };
  return c;
}

// Paper-scale numbers, kept for documentation and for sizing experiments.
inline RunConfig paper_preset() {
  RunConfig c = desk_preset();
  c.preset = "paper";
  constexpr double s = 224.0 / 64.0;
  c.scene.world_size = 224;
  c.scene.max_step_length *= s;
  c.scene.grasp_radius *= s;
  c.scene.place_radius *= s;
  auto scale = [&](Rect r) { return Rect{r.x0 * s, r.y0 * s, r.x1 * s, r.y1 * s}; };
  c.scene.object_region = scale(c.scene.object_region);
  c.scene.target_region = scale(c.scene.target_region);
  c.scene.gripper_start_x *= s;
  c.scene.gripper_start_y *= s;
  for (auto& o : c.scene.occluders) o.rect = scale(o.rect);
  c.scene.episode_max_steps = 160;
  c.mae.patch_size = 16;
  c.mae.embed_dim = 512;
  c.mae.encoder_layers = 12;
  c.mae.decoder_layers = 8;
  c.mae.heads = 8;
  c.train.chunk_length = 20;
  c.train.pretrain_epochs = 100;
  c.train.train_epochs = 600;
  c.train.pretrain_batch = 128;
  c.train.batch = 32;
  c.train.steps_per_epoch = 8;
  c.train.lr = 1e-4;
  return c;
}

inline RunConfig preset_config(std::string_view name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

// Sets one key. Throws ConfigError for unknown keys or malformed values.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : config_detail::schema()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

// Applies "key=value".
inline void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const auto key = config_detail::trim(assignment.substr(0, eq));
  const auto value = config_detail::trim(assignment.substr(eq + 1));
  if (key == "preset") {
    throw ConfigError("the preset can only be chosen in the config file");
  }
  set_config_value(cfg, key, value);
}

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
  const auto& s = c.scene;
  if (s.world_size < 8) fail("scene.world_size must be >= 8");
  if (s.num_views < 2) fail("scene.num_views must be >= 2");
  if (s.object_count < 1) fail("scene.object_count must be >= 1");
  if (s.max_step_length <= 0) fail("scene.max_step_length must be > 0");
  if (s.grasp_radius <= 0 || s.place_radius <= 0) fail("grasp/place radius must be > 0");
  const double w = s.world_size;
  auto inside = [w](const Rect& r) {
    return r.x0 >= 0 && r.y0 >= 0 && r.x1 <= w && r.y1 <= w && r.x0 <= r.x1 && r.y0 <= r.y1;
  };
  for (const auto& o : s.occluders) {
    if (o.view < 0 || o.view >= s.num_views) fail("occluder view index out of range");
    if (!inside(o.rect)) fail("occluder rectangle must lie inside the world");
  }
  if (!inside(s.object_region) || !inside(s.target_region)) fail("regions must lie inside the world");
  if (s.gripper_start_x < 0 || s.gripper_start_x > w || s.gripper_start_y < 0 ||
      s.gripper_start_y > w) {
    fail("gripper start outside the world");
  }
  const auto& m = c.mae;
  if (m.patch_size < 2 || m.patch_size % 2 != 0) fail("mae.patch_size must be even and >= 2");
  if (s.world_size % m.patch_size != 0) fail("scene.world_size must be divisible by mae.patch_size");
  if (m.embed_dim % 4 != 0) fail("mae.embed_dim must be divisible by 4");
  if (m.heads < 1 || m.embed_dim % m.heads != 0) fail("mae.embed_dim must be divisible by mae.heads");
  if (m.encoder_layers < 1 || m.decoder_layers < 1) fail("mae layer counts must be >= 1");
  if (m.mlp_ratio < 1) fail("mae.mlp_ratio must be >= 1");
  if (!(m.patch_mask_ratio >= 0 && m.patch_mask_ratio < 1)) fail("mae.patch_mask_ratio must be in [0,1)");
  if (!(m.view_mask_prob >= 0 && m.view_mask_prob <= 1)) fail("mae.view_mask_prob must be in [0,1]");
  const long long p = static_cast<long long>(s.world_size / m.patch_size) * (s.world_size / m.patch_size);
  if (std::llround((1.0 - m.patch_mask_ratio) * static_cast<double>(p)) < 1) {
    fail("mae.patch_mask_ratio leaves no visible token in a single view");
  }
  const auto& d = c.diffusion;
  if (d.steps < 1) fail("diffusion.steps must be >= 1");
  if (!(d.beta_start > 0 && d.beta_start <= d.beta_end && d.beta_end < 1)) {
    fail("diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  if (d.dim % 4 != 0 || d.heads < 1 || d.dim % d.heads != 0) fail("diffusion.dim must be divisible by 4 and by heads");
  if (d.layers < 1) fail("diffusion.layers must be >= 1");
  if (!(d.clip_sample >= 0)) fail("diffusion.clip_sample must be >= 0");
  const auto& sel = c.selector;
  if (sel.dim % 4 != 0 || sel.heads < 1 || sel.dim % sel.heads != 0) fail("selector.dim must be divisible by 4 and by heads");
  if (sel.layers < 1) fail("selector.layers must be >= 1");
  const auto& t = c.train;
  if (t.chunk_length < 1) fail("train.chunk_length must be >= 1");
  if (s.episode_max_steps < 2 * t.chunk_length) fail("scene.episode_max_steps must be >= 2*chunk_length");
  if (t.lambda1 < 0 || t.lambda2 < 0) fail("lambda1, lambda2 must be >= 0");
  if (!(t.stage_split > 0 && t.stage_split < 1)) fail("train.stage_split must be in (0,1)");
  if (t.pretrain_epochs < 0 || t.train_epochs < 0 || t.steps_per_epoch < 1) fail("epoch counts invalid");
  if (t.pretrain_batch < 1 || t.batch < 1) fail("batch sizes must be >= 1");
  if (!(t.lr > 0)) fail("train.lr must be > 0");
  if (t.checkpoint_every < 1) fail("train.checkpoint_every must be >= 1");
  if (c.eval.episodes < 1) fail("eval.episodes must be >= 1");
  if (c.data.episodes < 1) fail("data.episodes must be >= 1");
}

// Parses config text. A `preset` line (anywhere) selects the base; all other
// keys override it in file order. Lines starting with '#' are comments.
inline RunConfig parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string preset = "desk";
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const auto body = config_detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto key = config_detail::trim(std::string_view(body).substr(0, eq));
    auto value = config_detail::trim(std::string_view(body).substr(eq + 1));
    if (key == "preset") {
      preset = value;
    } else {
      entries.emplace_back(std::move(key), std::move(value));
    }
  }
  RunConfig cfg = preset_config(preset);
  for (const auto& [k, v] : entries) set_config_value(cfg, k, v);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingFileError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

// Canonical, fully resolved text form. parse_config(to_text(c)) == c.
inline std::string to_text(const RunConfig& cfg) {
  std::string out = "# resolved configuration\n";
  for (const auto& f : config_detail::schema()) {
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline void write_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write config snapshot '" + path + "'");
  f << to_text(cfg);
}

// Mode list of eval.modes, split on commas.
inline std::vector<std::string> split_modes(const std::string& modes) {
  std::vector<std::string> out;
  for (auto& m : config_detail::split(modes, ',')) {
    if (!m.empty()) out.push_back(m);
  }
  return out;
}

}  // namespace mvs
