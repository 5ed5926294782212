// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/diffusion/sampler.hpp"

#include <cmath>
#include <string>

#include "diffq/diffusion/rng.hpp"
#include "diffq/errors.hpp"

namespace diffq::diffusion {

EpsModel fp_eps_model(const ModelGraph& model) {
  return [&model](const Tensor& x, std::span<const int> t) { return model.predict(x, t); };
}

SamplerKind parse_sampler(std::string_view name) {
  if (name == "ddpm") return SamplerKind::ddpm;
  if (name == "ddim") return SamplerKind::ddim;
  throw ConfigError("unknown sampler '" + std::string(name) + "' (expected ddpm or ddim)");
}

std::string_view to_string(SamplerKind kind) { return kind == SamplerKind::ddpm ? "ddpm" : "ddim"; }

namespace {
std::vector<int> batch_t(const Tensor& x, int t) { return std::vector<int>(x.dim(0), t); }

Tensor checked_eps(const EpsModel& model, const Tensor& x, int t) {
  const auto ts = batch_t(x, t);
  Tensor eps = model(x, ts);
  if (eps.shape() != x.shape()) throw ShapeError("eps model output shape differs from input");
  return eps;
}
}  // namespace

Tensor ddpm_step(const Tensor& x_t, int t, const EpsModel& model, const NoiseSchedule& sched,
                 std::uint64_t noise_seed, std::optional<double> sigma_override) {
  sched.check_t(t);
  Tensor mu = predict_mu(x_t, t, checked_eps(model, x_t, t), sched);
  if (t == 1) return mu;
  const double sigma = sigma_override.value_or(sched.sigma_at(t));
  if (sigma == 0.0) return mu;
  const Tensor z = gaussian(x_t.shape(), noise_seed);
  auto m = mu.mutable_data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] += sigma * z[i];
  return mu;
}

double ddim_sigma(int t, int t_prev, const NoiseSchedule& sched, double eta) {
  const double ab_t = sched.alpha_bar_at(t);
  const double ab_prev = sched.alpha_bar_at(t_prev);
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
}

Tensor ddim_step(const Tensor& x_t, int t, int t_prev, const EpsModel& model, const NoiseSchedule& sched, double eta,
                 std::uint64_t noise_seed) {
  sched.check_t(t);
  if (!(t > t_prev && t_prev >= 0))
    throw RangeError("ddim_step: need t > t_prev >= 0, got " + std::to_string(t) + " -> " + std::to_string(t_prev));
  if (!(eta >= 0.0 && eta <= 1.0)) throw RangeError("ddim_step: eta must lie in [0, 1]");
  const Tensor eps = checked_eps(model, x_t, t);
  const double ab_t = sched.alpha_bar_at(t);
  const double ab_prev = sched.alpha_bar_at(t_prev);
  const double sigma = ddim_sigma(t, t_prev, sched, eta);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  Tensor out(x_t.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x0 = (x_t[i] - std::sqrt(1.0 - ab_t) * eps[i]) / std::sqrt(ab_t);
    o[i] = std::sqrt(ab_prev) * x0 + dir * eps[i];
  }
  if (sigma > 0.0) {
    const Tensor z = gaussian(x_t.shape(), noise_seed);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += sigma * z[i];
  }
  return out;
}

std::vector<int> timestep_subset(int T, std::size_t num_steps) {
  if (num_steps == 0 || num_steps > static_cast<std::size_t>(T))
    throw RangeError("num_steps must lie in [1, T]");
  std::vector<int> out;
  for (std::size_t j = 0; j < num_steps; ++j)
    out.push_back(T - static_cast<int>(j * static_cast<std::size_t>(T) / num_steps));
  return out;
}

Trajectory sample(const EpsModel& model, const NoiseSchedule& sched, std::size_t num_steps, SamplerKind kind,
                  std::uint64_t seed, const numerics::Shape& sample_shape, double eta) {
  if (kind == SamplerKind::ddpm && num_steps != static_cast<std::size_t>(sched.T))
    throw ConfigError("ddpm sampling visits every timestep; num_steps must equal T");
  Trajectory tr;
  tr.timesteps = timestep_subset(sched.T, num_steps);
  tr.states.push_back(gaussian(sample_shape, derive_seed(seed, 0)));
  for (std::size_t j = 0; j < tr.timesteps.size(); ++j) {
    const int t = tr.timesteps[j];
    const int t_prev = j + 1 < tr.timesteps.size() ? tr.timesteps[j + 1] : 0;
    const std::uint64_t ns = derive_seed(seed, j + 1);
    tr.noise_seeds.push_back(ns);
    const Tensor& x = tr.states.back();
    tr.states.push_back(kind == SamplerKind::ddpm ? ddpm_step(x, t, model, sched, ns)
                                                  : ddim_step(x, t, t_prev, model, sched, eta, ns));
  }
  return tr;
}

}  // namespace diffq::diffusion
