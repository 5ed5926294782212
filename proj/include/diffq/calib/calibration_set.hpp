// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "diffq/diffusion/model.hpp"
#include "diffq/diffusion/sampler.hpp"
#include "diffq/diffusion/schedule.hpp"

namespace diffq::calib {

using numerics::Tensor;

struct CalibEntry {
  Tensor x;  // x_t, [C, H, W]
  int t = 0;
};

struct CalibBatch {
  Tensor x;  // [N, C, H, W]
  std::vector<int> t;
};

struct CalibrationSet {
  std::vector<CalibEntry> entries;
  std::map<int, std::vector<std::size_t>> by_t;  // entry indices per timestep

  std::size_t size() const noexcept { return entries.size(); }
  CalibBatch batch(std::span<const std::size_t> indices) const;
  // Consecutive entries [begin, end).
  CalibBatch range(std::size_t begin, std::size_t end) const;
  void add(CalibEntry e);
};

// Samples n_trajectories full-precision trajectories (run as one batch) and
// keeps the x_t fed to the model at every visited step, so the set holds
// n_trajectories * steps entries.
CalibrationSet generate_calibration_set(const diffusion::EpsModel& fp_model, const diffusion::NoiseSchedule& sched,
                                        const numerics::Shape& image_shape, std::size_t n_trajectories,
                                        std::size_t steps, std::uint64_t seed,
                                        diffusion::SamplerKind kind = diffusion::SamplerKind::ddim);

}  // namespace diffq::calib
