// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/diffusion/rng.hpp"

#include <random>

namespace diffq::diffusion {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

numerics::Tensor gaussian(const numerics::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  numerics::Tensor out(shape);
  for (double& v : out.mutable_data()) v = dist(gen);
  return out;
}

numerics::Tensor uniform(const numerics::Shape& shape, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  numerics::Tensor out(shape);
  for (double& v : out.mutable_data()) v = dist(gen);
  return out;
}

}  // namespace diffq::diffusion
