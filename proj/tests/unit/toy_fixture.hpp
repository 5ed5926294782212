// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "diffq/calib/calibration_set.hpp"
#include "diffq/diffusion/dataset.hpp"
#include "diffq/diffusion/model.hpp"
#include "diffq/diffusion/rng.hpp"
#include "diffq/diffusion/sampler.hpp"
#include "diffq/diffusion/schedule.hpp"
#include "diffq/diffusion/trainer.hpp"

namespace diffq::testing {

inline const diffusion::NoiseSchedule& toy_schedule() {
  static const auto sched = diffusion::make_schedule(100, 1e-3, 0.2);
  return sched;
}

// Default architecture, briefly trained so its features carry structure.
// Built once per test binary.
inline const diffusion::ModelGraph& trained_toy() {
  static const diffusion::ModelGraph model = [] {
    auto m = diffusion::ModelGraph::build({}, 1);
    const auto data = diffusion::make_synthetic_dataset(512, 8, 7);
    diffusion::TrainConfig cfg;
    cfg.iterations = 300;
    cfg.batch = 8;
    cfg.val_size = 32;
    diffusion::train_toy(m, data, toy_schedule(), cfg);
    return m;
  }();
  return model;
}

inline const calib::CalibrationSet& toy_calib() {
  static const auto set = calib::generate_calibration_set(diffusion::fp_eps_model(trained_toy()), toy_schedule(),
                                                          {1, 8, 8}, 8, 10, 11);
  return set;
}

inline numerics::Tensor random_tensor(const numerics::Shape& shape, std::uint64_t seed, double lo = -1.0,
                                      double hi = 1.0) {
  return diffusion::uniform(shape, lo, hi, seed);
}

}  // namespace diffq::testing
