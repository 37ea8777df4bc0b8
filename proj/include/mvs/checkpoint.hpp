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

// Combined checkpoint: the resolved run configuration, normalisation stats,
// then every named tensor under "mae.", "denoiser." and "selector.".
//
//   char[4] "MVCK" | u32 version | u32 len | config text |
//   4 x (u32 n | f64[n])  (action mean/scale, state mean/scale) |
//   u32 count | count x (u32 len | name | u32 ndim | i64[ndim] | u32 dtype | data)
//
// dtype 0 = f32, 1 = f64. Little-endian throughout.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mvs/config.hpp"
#include "mvs/demo_store.hpp"
#include "mvs/error.hpp"
#include "mvs/model.hpp"

namespace mvs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::pair<std::string, torch::Tensor>> named_state(const PolicyModel& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&](const std::string& prefix, const torch::nn::Module& mod) {
    for (const auto& p : mod.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    for (const auto& b : mod.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  };
  add("mae.", *m.mae);
  add("denoiser.", *m.denoiser);
  add("selector.", *m.selector);
  return out;
}

inline void save_checkpoint(const PolicyModel& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint '" + path + "'");
  using io_detail::put;
  os.write("MVCK", 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  const auto text = to_text(m.config);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* v : {&m.stats.action_mean, &m.stats.action_scale, &m.stats.state_mean, &m.stats.state_scale}) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(v->size()));
    for (double d : *v) put<double>(os, d);
  }
  const auto state = named_state(m);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, tensor] : state) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.dim()));
    for (auto s : tensor.sizes()) put<std::int64_t>(os, s);
    const auto t = tensor.detach().contiguous();
    if (t.scalar_type() == torch::kFloat64) {
      put<std::uint32_t>(os, 1);
      const auto* p = t.data_ptr<double>();
      for (std::int64_t i = 0; i < t.numel(); ++i) put<double>(os, p[i]);
    } else {
      const auto f = t.to(torch::kFloat32);
      put<std::uint32_t>(os, 0);
      const auto* p = f.data_ptr<float>();
      for (std::int64_t i = 0; i < f.numel(); ++i) put<float>(os, p[i]);
    }
  }
  if (!os) throw Error("failed writing checkpoint '" + path + "'");
}

inline PolicyModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError("cannot open checkpoint '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MVCK", 4) != 0) {
    throw FormatError("'" + path + "' is not a checkpoint file");
  }
  using io_detail::get;
  if (get<std::uint32_t>(is) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  std::string text(get<std::uint32_t>(is), '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(text.size()))) throw FormatError("truncated checkpoint");
  const RunConfig cfg = parse_config(text);
  std::vector<std::vector<double>> stats(4);
  for (auto& v : stats) {
    v.resize(get<std::uint32_t>(is));
    for (auto& d : v) d = get<double>(is);
  }
  PolicyModel m = PolicyModel::create(cfg, 0, static_cast<int>(stats[2].size()), static_cast<int>(stats[0].size()));
  m.stats = {stats[0], stats[1], stats[2], stats[3]};
  std::map<std::string, torch::Tensor> slots;
  for (auto& [name, t] : named_state(m)) slots.emplace(name, t);
  const auto count = get<std::uint32_t>(is);
  if (count != slots.size()) {
    throw ShapeError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                     std::to_string(slots.size()));
  }
  torch::NoGradGuard no_grad;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(is), '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name.size()))) throw FormatError("truncated checkpoint");
    std::vector<std::int64_t> shape(get<std::uint32_t>(is));
    for (auto& s : shape) s = get<std::int64_t>(is);
    const auto dtype = get<std::uint32_t>(is);
    auto it = slots.find(name);
    if (it == slots.end()) throw ShapeError("checkpoint tensor '" + name + "' is unknown to the model");
    if (!it->second.sizes().equals(shape)) throw ShapeError("checkpoint tensor '" + name + "' has the wrong shape");
    const auto n = it->second.numel();
    torch::Tensor src;
    if (dtype == 1) {
      src = torch::empty({n}, torch::kFloat64);
      auto* p = src.data_ptr<double>();
      for (std::int64_t j = 0; j < n; ++j) p[j] = get<double>(is);
    } else if (dtype == 0) {
      src = torch::empty({n}, torch::kFloat32);
      auto* p = src.data_ptr<float>();
      for (std::int64_t j = 0; j < n; ++j) p[j] = get<float>(is);
    } else {
      throw FormatError("unknown tensor dtype in checkpoint");
    }
    it->second.copy_(src.view(shape).to(it->second.scalar_type()));
  }
  return m;
}

}  // namespace mvs
