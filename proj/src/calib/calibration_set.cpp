// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/calib/calibration_set.hpp"

#include "diffq/errors.hpp"

namespace diffq::calib {

CalibBatch CalibrationSet::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ShapeError("calibration batch: no indices");
  CalibBatch b;
  std::vector<Tensor> xs;
  for (std::size_t i : indices) {
    const CalibEntry& e = entries.at(i);
    xs.push_back(e.x);
    b.t.push_back(e.t);
  }
  b.x = numerics::stack(xs);
  return b;
}

CalibBatch CalibrationSet::range(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  return batch(idx);
}

void CalibrationSet::add(CalibEntry e) {
  by_t[e.t].push_back(entries.size());
  entries.push_back(std::move(e));
}

CalibrationSet generate_calibration_set(const diffusion::EpsModel& fp_model, const diffusion::NoiseSchedule& sched,
                                        const numerics::Shape& image_shape, std::size_t n_trajectories,
                                        std::size_t steps, std::uint64_t seed, diffusion::SamplerKind kind) {
  if (n_trajectories == 0) throw ConfigError("calibration set needs at least one trajectory");
  numerics::Shape shape{n_trajectories};
  shape.insert(shape.end(), image_shape.begin(), image_shape.end());
  const auto tr = diffusion::sample(fp_model, sched, steps, kind, seed, shape);
  CalibrationSet set;
  for (std::size_t j = 0; j < tr.timesteps.size(); ++j)
    for (std::size_t r = 0; r < n_trajectories; ++r)
      set.add({numerics::slice_rows(tr.states[j], r, r + 1).reshape(image_shape), tr.timesteps[j]});
  return set;
}

}  // namespace diffq::calib
