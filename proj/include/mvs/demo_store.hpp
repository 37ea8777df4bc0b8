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

// Expert demonstrations: collection, the on-disk episode format, action and
// state normalisation, and sampling of consecutive chunk pairs.
//
// Episode file layout (all little-endian):
//   char[4] "MVD1" | u32 version | u32 num_views | u32 height | u32 width |
//   u32 state_dim | u32 action_dim | u32 length | u64 seed | u32 success |
//   f32 images[length][num_views][height][width][3] |
//   f32 states[length][state_dim] | f32 actions[length][action_dim]

#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvs/config.hpp"
#include "mvs/error.hpp"
#include "mvs/rng.hpp"
#include "mvs/scene.hpp"

namespace mvs {

struct Episode {
  std::uint64_t seed = 0;
  bool success = false;
  int length = 0;
  int num_views = 0;
  int height = 0;
  int width = 0;
  int state_dim = kStateDim;
  int action_dim = kActionDim;
  std::vector<float> images;   // [length][num_views][height][width][3]
  std::vector<float> states;   // [length][state_dim]
  std::vector<float> actions;  // [length][action_dim]

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width * 3; }
  const float* image(int t, int view) const {
    return images.data() + (static_cast<std::size_t>(t) * num_views + view) * frame_size();
  }
  bool operator==(const Episode&) const = default;
};

// Per-dimension affine normalisation: (x - mean) / scale.
struct NormStats {
  static constexpr double kScaleFloor = 1e-6;
  std::vector<double> action_mean, action_scale, state_mean, state_scale;

  static double norm(double x, double mean, double scale) { return (x - mean) / scale; }
  static double denorm(double x, double mean, double scale) { return x * scale + mean; }

  // x: [..., action_dim]
  torch::Tensor normalize_actions(const torch::Tensor& x) const { return apply(x, action_mean, action_scale, false); }
  torch::Tensor denormalize_actions(const torch::Tensor& x) const { return apply(x, action_mean, action_scale, true); }
  torch::Tensor normalize_states(const torch::Tensor& x) const { return apply(x, state_mean, state_scale, false); }

  bool operator==(const NormStats&) const = default;

 private:
  static torch::Tensor apply(const torch::Tensor& x, const std::vector<double>& mean,
                             const std::vector<double>& scale, bool inverse) {
    if (x.size(-1) != static_cast<std::int64_t>(mean.size())) {
      throw ShapeError("normalisation stats have " + std::to_string(mean.size()) +
                       " dims, tensor has " + std::to_string(x.size(-1)));
    }
    const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    const auto m = torch::tensor(mean, opts);
    const auto s = torch::tensor(scale, opts);
    const auto xd = x.to(torch::kFloat64);
    const auto y = inverse ? xd * s + m : (xd - m) / s;
    return y.to(x.scalar_type());
  }
};

struct Dataset {
  int num_views = 0;
  int height = 0;
  int width = 0;
  int state_dim = kStateDim;
  int action_dim = kActionDim;
  std::vector<Episode> episodes;
  NormStats stats;
};

// Mean and population standard deviation per dimension, scale floored.
inline NormStats normalization_stats(const Dataset& ds) {
  std::size_t n = 0;
  for (const auto& e : ds.episodes) n += e.length;
  if (n == 0) throw Error("normalization_stats: empty dataset");
  auto compute = [&](int dim, auto member, std::vector<double>& mean, std::vector<double>& scale) {
    mean.assign(dim, 0.0);
    scale.assign(dim, 0.0);
    for (const auto& e : ds.episodes) {
      const auto& v = e.*member;
      for (int t = 0; t < e.length; ++t)
        for (int d = 0; d < dim; ++d) mean[d] += v[static_cast<std::size_t>(t) * dim + d];
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (const auto& e : ds.episodes) {
      const auto& v = e.*member;
      for (int t = 0; t < e.length; ++t)
        for (int d = 0; d < dim; ++d) {
          const double r = v[static_cast<std::size_t>(t) * dim + d] - mean[d];
          scale[d] += r * r;
        }
    }
    for (auto& s : scale) s = std::max(std::sqrt(s / static_cast<double>(n)), NormStats::kScaleFloor);
  };
  NormStats st;
  compute(ds.action_dim, &Episode::actions, st.action_mean, st.action_scale);
  compute(ds.state_dim, &Episode::states, st.state_mean, st.state_scale);
  return st;
}

// Rolls the scripted expert from reset(cfg, seed) and records every view at
// every step. Throws if the expert does not succeed within the step cap.
inline Episode record_expert_episode(const SceneConfig& cfg, std::uint64_t seed) {
  Episode ep;
  ep.seed = seed;
  ep.num_views = cfg.num_views;
  ep.height = ep.width = cfg.world_size;
  SceneState s = reset(cfg, seed);
  for (int t = 0; t < cfg.episode_max_steps; ++t) {
    for (int v = 0; v < cfg.num_views; ++v) {
      const auto img = render(cfg, s, v);
      ep.images.insert(ep.images.end(), img.pixels.begin(), img.pixels.end());
    }
    const auto p = proprio(s);
    ep.states.insert(ep.states.end(), p.begin(), p.end());
    const Action a = scripted_expert(cfg, s);
    const auto av = action_vector(a);
    ep.actions.insert(ep.actions.end(), av.begin(), av.end());
    ++ep.length;
    auto r = step(cfg, s, a);
    s = r.state;
    if (r.success) {
      ep.success = true;
      return ep;
    }
  }
  throw Error("scripted expert failed on episode seed " + std::to_string(seed) +
              " within " + std::to_string(cfg.episode_max_steps) + " steps");
}

inline std::vector<std::uint64_t> episode_seeds(std::uint64_t seed, int n) {
  Rng rng(seed);
  std::vector<std::uint64_t> out(n);
  for (auto& s : out) s = rng.next_u64();
  return out;
}

inline Dataset collect(const SceneConfig& cfg, int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("collect: n_episodes must be >= 1");
  Dataset ds;
  ds.num_views = cfg.num_views;
  ds.height = ds.width = cfg.world_size;
  for (const auto s : episode_seeds(seed, n_episodes)) ds.episodes.push_back(record_expert_episode(cfg, s));
  ds.stats = normalization_stats(ds);
  return ds;
}

namespace io_detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& os, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
}

template <typename T>
T get(std::istream& is) {
  std::array<char, sizeof(T)> bytes{};
  if (!is.read(bytes.data(), sizeof(T))) throw FormatError("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

inline void put_floats(std::ostream& os, const std::vector<float>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  } else {
    for (float f : v) put(os, f);
  }
}

inline std::vector<float> get_floats(std::istream& is, std::size_t n) {
  std::vector<float> v(n);
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
      throw FormatError("unexpected end of file in tensor data");
    }
  } else {
    for (auto& f : v) f = get<float>(is);
  }
  return v;
}

}  // namespace io_detail

inline constexpr std::uint32_t kEpisodeFormatVersion = 1;

inline void write_episode(const Episode& ep, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write episode file '" + path + "'");
  os.write("MVD1", 4);
  using io_detail::put;
  put<std::uint32_t>(os, kEpisodeFormatVersion);
  put<std::uint32_t>(os, ep.num_views);
  put<std::uint32_t>(os, ep.height);
  put<std::uint32_t>(os, ep.width);
  put<std::uint32_t>(os, ep.state_dim);
  put<std::uint32_t>(os, ep.action_dim);
  put<std::uint32_t>(os, ep.length);
  put<std::uint64_t>(os, ep.seed);
  put<std::uint32_t>(os, ep.success ? 1u : 0u);
  io_detail::put_floats(os, ep.images);
  io_detail::put_floats(os, ep.states);
  io_detail::put_floats(os, ep.actions);
  if (!os) throw Error("failed writing episode file '" + path + "'");
}

inline Episode read_episode(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError("cannot open episode file '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MVD1", 4) != 0) {
    throw FormatError("'" + path + "' is not an MVD1 episode file");
  }
  using io_detail::get;
  if (get<std::uint32_t>(is) != kEpisodeFormatVersion) throw FormatError("unsupported episode version in '" + path + "'");
  Episode ep;
  ep.num_views = static_cast<int>(get<std::uint32_t>(is));
  ep.height = static_cast<int>(get<std::uint32_t>(is));
  ep.width = static_cast<int>(get<std::uint32_t>(is));
  ep.state_dim = static_cast<int>(get<std::uint32_t>(is));
  ep.action_dim = static_cast<int>(get<std::uint32_t>(is));
  ep.length = static_cast<int>(get<std::uint32_t>(is));
  ep.seed = get<std::uint64_t>(is);
  ep.success = get<std::uint32_t>(is) != 0;
  const std::size_t len = ep.length;
  ep.images = io_detail::get_floats(is, len * ep.num_views * ep.frame_size());
  ep.states = io_detail::get_floats(is, len * ep.state_dim);
  ep.actions = io_detail::get_floats(is, len * ep.action_dim);
  return ep;
}

inline std::string episode_filename(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "episode_%05zu.mvd", i);
  return buf;
}

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json m;
  m["format"] = "MVD1";
  m["episodes"] = ds.episodes.size();
  m["num_views"] = ds.num_views;
  m["height"] = ds.height;
  m["width"] = ds.width;
  m["state_dim"] = ds.state_dim;
  m["action_dim"] = ds.action_dim;
  m["stats"] = {{"action_mean", ds.stats.action_mean},
                {"action_scale", ds.stats.action_scale},
                {"state_mean", ds.stats.state_mean},
                {"state_scale", ds.stats.state_scale}};
  auto files = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    write_episode(ds.episodes[i], (fs::path(dir) / episode_filename(i)).string());
    files.push_back(episode_filename(i));
  }
  m["files"] = files;
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw Error("cannot write manifest in '" + dir + "'");
  os << m.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest = fs::path(dir) / "manifest.json";
  std::ifstream is(manifest);
  if (!is) throw MissingFileError("no dataset manifest at '" + manifest.string() + "'");
  nlohmann::json m;
  try {
    is >> m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest '" + manifest.string() + "': " + e.what());
  }
  Dataset ds;
  try {
    ds.num_views = m.at("num_views").get<int>();
    ds.height = m.at("height").get<int>();
    ds.width = m.at("width").get<int>();
    ds.state_dim = m.at("state_dim").get<int>();
    ds.action_dim = m.at("action_dim").get<int>();
    const auto& st = m.at("stats");
    ds.stats.action_mean = st.at("action_mean").get<std::vector<double>>();
    ds.stats.action_scale = st.at("action_scale").get<std::vector<double>>();
    ds.stats.state_mean = st.at("state_mean").get<std::vector<double>>();
    ds.stats.state_scale = st.at("state_scale").get<std::vector<double>>();
    for (const auto& f : m.at("files")) {
      ds.episodes.push_back(read_episode((fs::path(dir) / f.get<std::string>()).string()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest '" + manifest.string() + "': " + e.what());
  }
  for (const auto& e : ds.episodes) {
    if (e.num_views != ds.num_views || e.height != ds.height || e.width != ds.width ||
        e.state_dim != ds.state_dim || e.action_dim != ds.action_dim) {
      throw ShapeError("episode dimensions disagree with manifest in '" + dir + "'");
    }
  }
  return ds;
}

// Two consecutive chunks of one episode: [start, start+T) and [start+T, start+2T).
struct ChunkPair {
  int episode = 0;
  int start = 0;
  int chunk_length = 0;
  int next_start() const { return start + chunk_length; }
};

inline int valid_chunk_starts(int episode_length, int chunk_length) {
  return std::max(0, episode_length - 2 * chunk_length + 1);
}

// Uniform over all (episode, start) with start + 2T <= episode length.
inline ChunkPair sample_chunk_pair(const Dataset& ds, int chunk_length, Rng& rng) {
  std::int64_t total = 0;
  for (const auto& e : ds.episodes) total += valid_chunk_starts(e.length, chunk_length);
  if (total == 0) throw Error("no valid chunk pair: every episode is shorter than 2*T");
  std::int64_t pick = rng.uniform_int(0, total - 1);
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    const int n = valid_chunk_starts(ds.episodes[i].length, chunk_length);
    if (pick < n) return {static_cast<int>(i), static_cast<int>(pick), chunk_length};
    pick -= n;
  }
  throw Error("sample_chunk_pair: internal indexing error");
}

// Images of all views at one step as [V, 3, H, W].
inline torch::Tensor frame_tensor(const Episode& ep, int t) {
  auto hwc = torch::from_blob(const_cast<float*>(ep.image(t, 0)),
                              {ep.num_views, ep.height, ep.width, 3}, torch::kFloat32);
  return hwc.permute({0, 3, 1, 2}).contiguous();
}

inline torch::Tensor state_tensor(const Episode& ep, int t) {
  return torch::from_blob(const_cast<float*>(ep.states.data() + static_cast<std::size_t>(t) * ep.state_dim),
                          {ep.state_dim}, torch::kFloat32)
      .clone();
}

inline torch::Tensor action_tensor(const Episode& ep, int start, int len) {
  return torch::from_blob(const_cast<float*>(ep.actions.data() + static_cast<std::size_t>(start) * ep.action_dim),
                          {len, ep.action_dim}, torch::kFloat32)
      .clone();
}

// Batched chunk pairs. States and actions are normalised.
struct ChunkBatch {
  torch::Tensor images_t;      // [B, V, 3, H, W]
  torch::Tensor state_t;       // [B, S]
  torch::Tensor actions_t;     // [B, T, A]
  torch::Tensor images_next;   // [B, V, 3, H, W]
  torch::Tensor state_next;    // [B, S]
  torch::Tensor actions_next;  // [B, T, A]
  std::int64_t size() const { return images_t.size(0); }
};

inline ChunkBatch make_chunk_batch(const Dataset& ds, const std::vector<ChunkPair>& pairs) {
  std::vector<torch::Tensor> it, st, at, in, sn, an;
  for (const auto& p : pairs) {
    const auto& ep = ds.episodes.at(p.episode);
    if (p.start < 0 || p.start + 2 * p.chunk_length > ep.length) throw Error("chunk pair out of range");
    it.push_back(frame_tensor(ep, p.start));
    st.push_back(state_tensor(ep, p.start));
    at.push_back(action_tensor(ep, p.start, p.chunk_length));
    in.push_back(frame_tensor(ep, p.next_start()));
    sn.push_back(state_tensor(ep, p.next_start()));
    an.push_back(action_tensor(ep, p.next_start(), p.chunk_length));
  }
  ChunkBatch b;
  b.images_t = torch::stack(it);
  b.state_t = ds.stats.normalize_states(torch::stack(st));
  b.actions_t = ds.stats.normalize_actions(torch::stack(at));
  b.images_next = torch::stack(in);
  b.state_next = ds.stats.normalize_states(torch::stack(sn));
  b.actions_next = ds.stats.normalize_actions(torch::stack(an));
  return b;
}

inline ChunkBatch sample_chunk_batch(const Dataset& ds, int chunk_length, int batch, Rng& rng) {
  std::vector<ChunkPair> pairs;
  for (int i = 0; i < batch; ++i) pairs.push_back(sample_chunk_pair(ds, chunk_length, rng));
  return make_chunk_batch(ds, pairs);
}

// Multi-view frames with normalised states, for reconstruction pretraining.
struct FrameBatch {
  torch::Tensor images;  // [B, V, 3, H, W]
  torch::Tensor state;   // [B, S]
};

inline FrameBatch sample_frame_batch(const Dataset& ds, int batch, Rng& rng) {
  std::int64_t total = 0;
  for (const auto& e : ds.episodes) total += e.length;
  if (total == 0) throw Error("sample_frame_batch: empty dataset");
  std::vector<torch::Tensor> imgs, states;
  for (int i = 0; i < batch; ++i) {
    std::int64_t pick = rng.uniform_int(0, total - 1);
    for (const auto& e : ds.episodes) {
      if (pick < e.length) {
        imgs.push_back(frame_tensor(e, static_cast<int>(pick)));
        states.push_back(state_tensor(e, static_cast<int>(pick)));
        break;
      }
      pick -= e.length;
    }
  }
  return {torch::stack(imgs), ds.stats.normalize_states(torch::stack(states))};
}

}  // namespace mvs
