// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "diffq/numerics/tensor.hpp"

namespace diffq::diffusion {

// Deterministic child seed for stream `index` of `base` (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

// Standard normal samples from a generator seeded with `seed`.
numerics::Tensor gaussian(const numerics::Shape& shape, std::uint64_t seed);

// Uniform samples in [lo, hi).
numerics::Tensor uniform(const numerics::Shape& shape, double lo, double hi, std::uint64_t seed);

}  // namespace diffq::diffusion
