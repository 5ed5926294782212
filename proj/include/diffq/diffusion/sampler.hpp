// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "diffq/diffusion/model.hpp"
#include "diffq/diffusion/schedule.hpp"

namespace diffq::diffusion {

// Noise predictor eps(x_t, t) with one timestep per batch row.
using EpsModel = std::function<Tensor(const Tensor& x, std::span<const int> t)>;

EpsModel fp_eps_model(const ModelGraph& model);

enum class SamplerKind { ddpm, ddim };
SamplerKind parse_sampler(std::string_view name);
std::string_view to_string(SamplerKind kind);

// x_{t-1} = mu(x_t, eps) + sigma_t z with z drawn from `noise_seed`; the
// terminal step t = 1 adds no noise. `sigma_override` replaces sigma_t.
Tensor ddpm_step(const Tensor& x_t, int t, const EpsModel& model, const NoiseSchedule& sched,
                 std::uint64_t noise_seed, std::optional<double> sigma_override = std::nullopt);

// Generalized DDIM update from t to t_prev (t_prev = 0 yields x_0).
Tensor ddim_step(const Tensor& x_t, int t, int t_prev, const EpsModel& model, const NoiseSchedule& sched, double eta,
                 std::uint64_t noise_seed);

// DDIM noise scale for the (t, t_prev) transition.
double ddim_sigma(int t, int t_prev, const NoiseSchedule& sched, double eta);

struct Trajectory {
  std::vector<Tensor> states;             // x_T ... x_0
  std::vector<int> timesteps;             // t visited at each transition
  std::vector<std::uint64_t> noise_seeds;  // one per transition
};

// Uniform-stride descending subset of {1..T}, starting at T.
std::vector<int> timestep_subset(int T, std::size_t num_steps);

// Runs the reverse process from x_T ~ N(0, I). All randomness derives from
// `seed`, so two models sampled with the same seed see identical noise.
// ddpm requires num_steps == T.
Trajectory sample(const EpsModel& model, const NoiseSchedule& sched, std::size_t num_steps, SamplerKind kind,
                  std::uint64_t seed, const numerics::Shape& sample_shape, double eta = 0.0);

}  // namespace diffq::diffusion
