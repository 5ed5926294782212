// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "diffq/numerics/tensor.hpp"

namespace diffq::diffusion {

// Procedurally drawn single-channel images with values in [-1, 1]: Gaussian
// blobs and axis-aligned bars on a dark background.
struct SyntheticDataset {
  std::vector<numerics::Tensor> samples;  // each [1, H, W]
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return samples.size(); }
  // Stacks the selected samples into [N, 1, H, W].
  numerics::Tensor batch(std::span<const std::size_t> indices) const;
};

SyntheticDataset make_synthetic_dataset(std::size_t count, std::size_t image_size, std::uint64_t seed);

}  // namespace diffq::diffusion
