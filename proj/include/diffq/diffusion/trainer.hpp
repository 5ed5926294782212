// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "diffq/diffusion/dataset.hpp"
#include "diffq/diffusion/model.hpp"
#include "diffq/diffusion/schedule.hpp"

namespace diffq::diffusion {

struct TrainConfig {
  std::size_t iterations = 5000;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t val_size = 256;
  std::uint64_t val_seed = 99;
  std::size_t log_every = 100;
};

struct TrainResult {
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
  std::vector<double> loss_curve;  // mean training loss per log_every window
};

// Noise-prediction loss mean((eps_theta(x_t, t) - eps)^2) over a fixed set of
// (sample, t, noise) triples drawn from `val_seed`.
double validation_loss(const ModelGraph& model, const SyntheticDataset& data, const NoiseSchedule& sched,
                       std::size_t count, std::uint64_t val_seed);

// Adam on the noise-prediction objective with t uniform in {1..T}. Throws
// NumericError naming the iteration if the loss turns non-finite.
TrainResult train_toy(ModelGraph& model, const SyntheticDataset& data, const NoiseSchedule& sched,
                      const TrainConfig& cfg);

}  // namespace diffq::diffusion
