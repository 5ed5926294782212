// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/diffusion/schedule.hpp"

#include <cmath>
#include <string>

#include "diffq/errors.hpp"

namespace diffq::diffusion {

using numerics::Tensor;

void NoiseSchedule::check_t(int t) const {
  if (t < 1 || t > T) throw RangeError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
}

double NoiseSchedule::beta_at(int t) const {
  check_t(t);
  return beta[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_at(int t) const {
  check_t(t);
  return alpha[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t == 0) return 1.0;
  check_t(t);
  return alpha_bar[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::sigma_at(int t) const {
  check_t(t);
  return sigma[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
    s.sigma.push_back(std::sqrt(b));
  }
  return s;
}

namespace {
Tensor affine(const Tensor& a, double ca, const Tensor& b, double cb, const char* op) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(op) + ": shape mismatch");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ca * a[i] + cb * b[i];
  return out;
}
}  // namespace

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar_at(t);
  sched.check_t(t);
  return affine(x0, std::sqrt(ab), noise, std::sqrt(1.0 - ab), "forward_diffuse");
}

Tensor forward_step(const Tensor& x_prev, int t, const Tensor& noise, const NoiseSchedule& sched) {
  return affine(x_prev, std::sqrt(sched.alpha_at(t)), noise, std::sqrt(sched.beta_at(t)), "forward_step");
}

Tensor predict_mu(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& sched) {
  const double a = sched.alpha_at(t);
  const double coef = sched.beta_at(t) / std::sqrt(1.0 - sched.alpha_bar_at(t));
  return affine(x_t, 1.0 / std::sqrt(a), eps_pred, -coef / std::sqrt(a), "predict_mu");
}

}  // namespace diffq::diffusion
