// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "diffq/numerics/tensor.hpp"

namespace diffq::diffusion {

// Fixed-variance noise schedule. Timesteps are 1-based: index t reads slot
// t-1 of each array.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // sigma_t^2 = beta_t

  double beta_at(int t) const;
  double alpha_at(int t) const;
  // alpha_bar(0) is 1 (the clean sample).
  double alpha_bar_at(int t) const;
  double sigma_at(int t) const;
  void check_t(int t) const;
};

// Linearly spaced betas from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise
numerics::Tensor forward_diffuse(const numerics::Tensor& x0, int t, const numerics::Tensor& noise,
                                 const NoiseSchedule& sched);

// One step of the Markov forward process:
// x_t = sqrt(alpha_t) x_{t-1} + sqrt(beta_t) noise
numerics::Tensor forward_step(const numerics::Tensor& x_prev, int t, const numerics::Tensor& noise,
                              const NoiseSchedule& sched);

// Posterior mean mu = (x_t - beta_t / sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_t)
numerics::Tensor predict_mu(const numerics::Tensor& x_t, int t, const numerics::Tensor& eps_pred,
                            const NoiseSchedule& sched);

}  // namespace diffq::diffusion
