// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/diag/diagnostics.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <tuple>

#include "diffq/errors.hpp"
#include "diffq/numerics/kernels.hpp"
#include "diffq/recon/losses.hpp"

namespace diffq::diag {

namespace k = numerics::kernels;

namespace {

FeatureTable split_by_t(const std::vector<Tensor>& batched) {
  const std::size_t T = batched.front().dim(0);
  FeatureTable table(T);
  for (std::size_t r = 0; r < T; ++r)
    for (const Tensor& f : batched) {
      const Tensor row = numerics::slice_rows(f, r, r + 1);
      table[r].push_back(row.reshape({row.size()}));
    }
  return table;
}

std::vector<int> all_t(int T) {
  std::vector<int> t(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) t[static_cast<std::size_t>(i)] = i + 1;
  return t;
}

void check_ti(const FeatureTable& table, int t, std::size_t i) {
  if (t < 1 || t > static_cast<int>(table.size()))
    throw RangeError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(table.size()) + "]");
  if (i >= table.front().size()) throw RangeError("feature index " + std::to_string(i) + " out of range");
}

}  // namespace

FeatureTable feature_table(const diffusion::ModelGraph& fp, int T) {
  return split_by_t(recon::fp_temporal_features(fp, all_t(T)));
}

FeatureTable feature_table(const quant::QuantModel& qm) { return split_by_t(qm.temporal_features(all_t(qm.T()))); }

double temporal_feature_error(const diffusion::ModelGraph& fp, const quant::QuantModel& qm, int t, std::size_t i) {
  if (t < 1 || t > qm.T()) throw RangeError("timestep " + std::to_string(t) + " out of range");
  const int ts[] = {t};
  const auto a = recon::fp_temporal_features(fp, ts);
  const auto b = qm.temporal_features(ts);
  if (i >= a.size()) throw RangeError("feature index " + std::to_string(i) + " out of range");
  return k::cosine_similarity(a[i], b[i]);
}

int mismatch_delta(const FeatureTable& fp, const Tensor& quantized, int t, std::size_t i) {
  check_ti(fp, t, i);
  int best = 0;
  double best_cos = -2.0;
  bool first = true;
  for (int tp = 1; tp <= static_cast<int>(fp.size()); ++tp) {
    const double c = k::cosine_similarity(fp[static_cast<std::size_t>(tp - 1)][i], quantized);
    const int d = tp - t;
    const bool better = first || c > best_cos ||
                        (c == best_cos && (std::abs(d) < std::abs(best) || (std::abs(d) == std::abs(best) && d < best)));
    if (better) {
      best = d;
      best_cos = c;
      first = false;
    }
  }
  return best;
}

int mismatch_delta(const diffusion::ModelGraph& fp, const quant::QuantModel& qm, int t, std::size_t i) {
  const FeatureTable table = feature_table(fp, qm.T());
  check_ti(table, t, i);
  const int ts[] = {t};
  const auto q = qm.temporal_features(ts);
  return mismatch_delta(table, q[i].reshape({q[i].size()}), t, i);
}

std::vector<TrajectoryRow> trajectory_deviation(const diffusion::Trajectory& fp, const diffusion::Trajectory& q) {
  if (fp.states.size() != q.states.size()) throw std::invalid_argument("trajectories differ in length");
  if (fp.timesteps != q.timesteps) throw std::invalid_argument("trajectories visit different timesteps");
  if (fp.noise_seeds != q.noise_seeds) throw std::invalid_argument("trajectories use different noise seeds");
  std::vector<TrajectoryRow> rows;
  for (std::size_t j = 0; j < fp.states.size(); ++j) {
    const Tensor& a = fp.states[j];
    const Tensor& b = q.states[j];
    if (a.shape() != b.shape()) throw ShapeError("trajectory states differ in shape");
    TrajectoryRow r;
    r.step = j;
    r.t = j < fp.timesteps.size() ? fp.timesteps[j] : 0;
    r.mse = k::sum_squares(k::sub(a, b)) / static_cast<double>(a.size());
    r.cos = k::cosine_similarity(a, b);
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::vector<Tensor> block_outputs(const diffusion::ModelGraph& base, diffusion::LayerHooks* hooks, const Tensor& x,
                                  std::span<const int> t) {
  numerics::Tape tape(false);
  diffusion::ForwardContext ctx(tape, hooks);
  std::vector<Tensor> outs(base.n_blocks());
  ctx.block_probe = [&](std::size_t i, numerics::Var, numerics::Var out) { outs[i] = out.value(); };
  base.forward(ctx, tape.leaf(x), t);
  return outs;
}

}  // namespace

double block_output_similarity(const diffusion::ModelGraph& fp, const quant::QuantModel& qm,
                               const calib::CalibEntry& entry, std::size_t i) {
  if (i >= fp.n_blocks()) throw RangeError("block index " + std::to_string(i) + " out of range");
  numerics::Shape shape{1};
  shape.insert(shape.end(), entry.x.shape().begin(), entry.x.shape().end());
  const Tensor x = entry.x.reshape(shape);
  const int t[] = {entry.t};
  quant::QuantHooks hooks(qm);
  const auto a = block_outputs(fp, nullptr, x, t);
  const auto b = block_outputs(qm.base(), &hooks, x, t);
  return k::cosine_similarity(a[i], b[i]);
}

DiagnosticsReport diagnose(const diffusion::ModelGraph& fp, const quant::QuantModel& qm,
                           const diffusion::NoiseSchedule& sched, const calib::CalibrationSet& calib,
                           const DiagConfig& cfg) {
  if (qm.T() != sched.T) throw ConfigError("diagnose: schedule T differs from the quantized model");
  DiagnosticsReport rep;
  if (fp.config().time_conditioning) {
    const FeatureTable a = feature_table(fp, sched.T);
    const FeatureTable b = feature_table(qm);
    for (int t = 1; t <= sched.T; ++t)
      for (std::size_t i = 0; i < a.front().size(); ++i) {
        const auto& qa = a[static_cast<std::size_t>(t - 1)][i];
        const auto& qb = b[static_cast<std::size_t>(t - 1)][i];
        rep.tfe.push_back({t, i, k::cosine_similarity(qa, qb)});
        rep.mismatch.push_back({t, i, mismatch_delta(a, qb, t, i)});
      }
  }

  const auto& mc = fp.config();
  const numerics::Shape shape{cfg.n_samples, mc.in_channels, mc.image_size, mc.image_size};
  const auto fp_traj = diffusion::sample(diffusion::fp_eps_model(fp), sched, cfg.steps, cfg.sampler, cfg.seed, shape, cfg.eta);
  const auto q_traj = diffusion::sample(qm.eps_model(), sched, cfg.steps, cfg.sampler, cfg.seed, shape, cfg.eta);
  rep.trajectory = trajectory_deviation(fp_traj, q_traj);

  bool tib_calibrated = !qm.partition().tib.empty();
  for (const auto& name : qm.partition().tib) tib_calibrated = tib_calibrated && qm.act_quantizer(name).calibrated;
  if (tib_calibrated) rep.ranges = calib::range_report(qm);
  std::sort(rep.ranges.begin(), rep.ranges.end(),
            [](const calib::RangeRow& x, const calib::RangeRow& y) { return std::tie(x.layer, x.t) < std::tie(y.layer, y.t); });

  quant::QuantHooks hooks(qm);
  for (const auto& [t, idx] : calib.by_t) {
    const calib::CalibBatch b = calib.batch(idx);
    const auto oa = block_outputs(fp, nullptr, b.x, b.t);
    const auto ob = block_outputs(qm.base(), &hooks, b.x, b.t);
    for (std::size_t i = 0; i < oa.size(); ++i) rep.blocks.push_back({t, i, k::cosine_similarity(oa[i], ob[i])});
  }
  return rep;
}

Summary summarize(const DiagnosticsReport& r) {
  Summary s;
  if (!r.tfe.empty()) {
    s.min_tfe = 1.0;
    for (const auto& row : r.tfe) {
      s.mean_tfe += row.cos;
      s.mean_tfe_distance += 1.0 - row.cos;
      s.min_tfe = std::min(s.min_tfe, row.cos);
    }
    s.mean_tfe /= static_cast<double>(r.tfe.size());
    s.mean_tfe_distance /= static_cast<double>(r.tfe.size());
  }
  for (const auto& row : r.mismatch) {
    s.max_abs_delta = std::max(s.max_abs_delta, std::abs(row.delta));
    s.nonzero_delta += row.delta != 0;
  }
  if (!r.trajectory.empty()) {
    s.terminal_mse = r.trajectory.back().mse;
    s.terminal_cos = r.trajectory.back().cos;
  }
  for (const auto& row : r.blocks) s.mean_block_cos += row.cos;
  if (!r.blocks.empty()) s.mean_block_cos /= static_cast<double>(r.blocks.size());
  s.range_rows = r.ranges.size();
  return s;
}

}  // namespace diffq::diag
