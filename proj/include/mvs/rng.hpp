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
#include <random>

namespace mvs {

// Seeded random stream. Discrete draws come from a 64-bit Mersenne twister,
// tensor draws from a torch CPU generator seeded from the same value. Every
// consumer owns its Rng; nothing here touches torch's global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : engine_(seed), generator_(at::make_generator<at::CPUGeneratorImpl>(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  Rng(const Rng& other) : engine_(other.engine_), generator_(other.generator_.clone()) {}
  Rng& operator=(const Rng& other) {
    if (this != &other) {
      engine_ = other.engine_;
      generator_ = other.generator_.clone();
    }
    return *this;
  }
  Rng(Rng&&) = default;
  Rng& operator=(Rng&&) = default;

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  torch::Tensor normal(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32) {
    return torch::randn(shape, generator_, torch::TensorOptions().dtype(dtype));
  }

  // Independent child stream.
  Rng fork() { return Rng(next_u64()); }

 private:
  std::mt19937_64 engine_;
  at::Generator generator_;
};

}  // namespace mvs
