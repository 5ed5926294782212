// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "diffq/calib/calibrate.hpp"
#include "diffq/calib/range_estimator.hpp"
#include "diffq/errors.hpp"
#include "diffq/quant/quant_model.hpp"
#include "diffq/recon/partition.hpp"
#include "toy_fixture.hpp"

namespace diffq::calib {
namespace {

using numerics::Tensor;

std::vector<double> normal_values(std::size_t n, std::uint64_t seed) {
  const Tensor g = diffusion::gaussian({n}, seed);
  return {g.data().begin(), g.data().end()};
}

TEST(RangeEstimator, MinMax) {
  const std::vector<double> v{-2.0, 0.0, 5.0};
  const auto r = estimate_range(v, RangeMethod::minmax);
  EXPECT_EQ(r.min, -2.0);
  EXPECT_EQ(r.max, 5.0);
  EXPECT_EQ(r.sample_count, 3u);
  const Tensor parts[] = {Tensor::from({-2.0, 0.0}), Tensor::from({5.0})};
  const auto rt = estimate_range(std::span<const Tensor>(parts), RangeMethod::minmax);
  EXPECT_EQ(rt.min, -2.0);
  EXPECT_EQ(rt.max, 5.0);
}

TEST(RangeEstimator, FullPercentileIsMinMax) {
  const auto v = normal_values(5000, 1);
  RangeOptions o;
  o.percentile = 1.0;
  const auto p = estimate_range(v, RangeMethod::percentile, o), m = estimate_range(v, RangeMethod::minmax);
  EXPECT_EQ(p.min, m.min);
  EXPECT_EQ(p.max, m.max);
}

TEST(RangeEstimator, PercentileMatchesSortedMagnitudes) {
  const auto v = normal_values(10000, 2);
  std::vector<double> mags;
  for (double x : v) mags.push_back(std::abs(x));
  std::sort(mags.begin(), mags.end());
  const double clip = mags[static_cast<std::size_t>(std::ceil(0.999 * mags.size())) - 1];
  const auto r = estimate_range(v, RangeMethod::percentile);
  EXPECT_EQ(r.max, std::min(clip, *std::max_element(v.begin(), v.end())));
  EXPECT_EQ(r.min, std::max(-clip, *std::min_element(v.begin(), v.end())));
}

// Values on the 8-bit lattice of a symmetric grid with scale c*/127.5 need no
// clipping; the K-candidate search must land within one cell of c*.
TEST(RangeEstimator, MseFindsLatticeClip) {
  const double cstar = 2.0;
  const quant::QuantParams grid = quant::compute_qparams(-cstar, cstar, 8);
  std::vector<double> v;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> k(0, 255);
  for (int i = 0; i < 4000; ++i) v.push_back((k(rng) - grid.z) * grid.s);
  v.push_back(-grid.z * grid.s);
  v.push_back((255 - grid.z) * grid.s);
  const auto r = estimate_range(v, RangeMethod::mse);

  // Brute force over the same candidates.
  const double amax = std::max(std::abs(*std::min_element(v.begin(), v.end())), *std::max_element(v.begin(), v.end()));
  double best = std::numeric_limits<double>::infinity(), best_c = 0;
  for (int j = 1; j <= 100; ++j) {
    const double c = j / 100.0 * amax;
    const auto qp = quant::compute_qparams(std::max(-c, -amax), std::min(c, amax), 8);
    double err = 0;
    for (double x : v) err += (x - quant::fake_quant(x, qp)) * (x - quant::fake_quant(x, qp));
    if (err < best) best = err, best_c = c;
  }
  EXPECT_NEAR(r.max, std::min(best_c, *std::max_element(v.begin(), v.end())), 1e-12);
  EXPECT_LE(std::abs(std::max(-r.min, r.max) - cstar), grid.s);
}

TEST(RangeEstimator, KlClipsHeavyTails) {
  auto v = normal_values(20000, 4);
  v.push_back(60.0);  // one far outlier
  const auto kl = estimate_range(v, RangeMethod::kl);
  EXPECT_LT(kl.max, 60.0);
  EXPECT_GT(kl.max, 1.0);
  EXPECT_LE(kl.min, 0.0);
}

TEST(RangeEstimator, DegenerateAndEmpty) {
  const std::vector<double> zeros(10, 0.0);
  for (auto m : {RangeMethod::minmax, RangeMethod::percentile, RangeMethod::mse, RangeMethod::kl}) {
    const auto r = estimate_range(zeros, m);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.min, 0.0);
    EXPECT_EQ(r.max, 0.0);
  }
  EXPECT_THROW(estimate_range(std::vector<double>{}, RangeMethod::minmax), NumericError);
  RangeOptions bad;
  bad.percentile = 1.5;
  EXPECT_THROW(estimate_range(zeros, RangeMethod::percentile, bad), ConfigError);
}

TEST(RangeEstimator, MethodNames) {
  for (auto m : {RangeMethod::minmax, RangeMethod::percentile, RangeMethod::mse, RangeMethod::kl})
    EXPECT_EQ(parse_range_method(to_string(m)), m);
  EXPECT_THROW(parse_range_method("lsq"), ConfigError);
}

TEST(Ema, Examples) {
  RangeEstimate cur;
  cur.min = 0.0;
  cur.max = 1.0;
  const auto next = ema_update(cur, 0.0, 3.0, 0.9);
  EXPECT_DOUBLE_EQ(next.min, 0.0);
  EXPECT_DOUBLE_EQ(next.max, 1.2);
  const auto fixed = ema_update(cur, 0.0, 1.0, 0.9);
  EXPECT_EQ(fixed.max, 1.0);

  // Closed form after n identical batches: b + (m0 - b) d^n.
  RangeEstimate r = cur;
  for (int n = 1; n <= 30; ++n) {
    r = ema_update(r, -2.0, 3.0, 0.9);
    EXPECT_NEAR(r.max, 3.0 + (1.0 - 3.0) * std::pow(0.9, n), 1e-12);
    EXPECT_NEAR(r.min, -2.0 + (0.0 + 2.0) * std::pow(0.9, n), 1e-12);
  }
}

TEST(CalibrationSet, SizeAndTags) {
  const auto& fp = testing::trained_toy();
  const auto eps = diffusion::fp_eps_model(fp);
  const auto set = generate_calibration_set(eps, testing::toy_schedule(), {1, 8, 8}, 1, 4, 5);
  ASSERT_EQ(set.size(), 4u);
  const auto traj = diffusion::sample(eps, testing::toy_schedule(), 4, diffusion::SamplerKind::ddim, 5, {1, 1, 8, 8});
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(set.entries[j].t, traj.timesteps[j]);
    EXPECT_TRUE(numerics::identical(set.entries[j].x, traj.states[j].reshape({1, 8, 8})));
  }
  EXPECT_EQ(set.by_t.size(), 4u);

  const auto again = generate_calibration_set(eps, testing::toy_schedule(), {1, 8, 8}, 1, 4, 5);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_TRUE(numerics::identical(set.entries[j].x, again.entries[j].x));

  const auto& big = testing::toy_calib();
  EXPECT_EQ(big.size(), 80u);
  for (const auto& [t, idx] : big.by_t) EXPECT_EQ(idx.size(), 8u);
}

class ToyCalib : public ::testing::Test {
 protected:
  const diffusion::ModelGraph& fp = testing::trained_toy();
  const recon::BlockPartition part = recon::partition_blocks(fp);
};

// Every enumerated TIB input is quantized with error at most s_t / 2 by its
// own per-t params, i.e. nothing is clipped, and s_t never exceeds the shared
// scale. Summed over t, the per-t grids beat the shared grid. Cell by cell
// they can lose when s_t is within a few percent of the shared scale: on 64
// values the nearest-rounding error is not monotone in the step.
TEST_F(ToyCalib, FscCoversAndDominates) {
  auto qm = quant::wrap_model(fp, 4, 8, part, 100);
  calibrate_fsc(qm, {});
  const auto obs = observe_tib(qm);
  ASSERT_EQ(obs.size(), 8u);
  for (const auto& [name, per_t] : obs) {
    const auto& aq = qm.act_quantizer(name);
    ASSERT_TRUE(aq.enabled);
    double lo = 0, hi = 0;
    for (const auto& x : per_t) lo = std::min(lo, x.min()), hi = std::max(hi, x.max());
    const auto shared = quant::compute_qparams(lo, hi, 8);
    double sum_fsc = 0, sum_shared = 0;
    for (int t = 1; t <= 100; ++t) {
      const auto& qp = aq.per_t.at(t);
      const Tensor& x = per_t[t - 1];
      double e_fsc = 0, e_shared = 0;
      for (double v : x.data()) {
        const double d = v - quant::fake_quant(v, qp);
        ASSERT_LE(std::abs(d), qp.s / 2 * (1 + 1e-12)) << name << " t=" << t;
        e_fsc += d * d;
        e_shared += (v - quant::fake_quant(v, shared)) * (v - quant::fake_quant(v, shared));
      }
      EXPECT_LE(qp.s, shared.s * (1 + 1e-12));
      if (qp.s < 0.8 * shared.s) EXPECT_LE(e_fsc, e_shared) << name << " t=" << t;
      sum_fsc += e_fsc;
      sum_shared += e_shared;
    }
    EXPECT_LT(sum_fsc, sum_shared) << name;
  }
}

TEST_F(ToyCalib, FscIsIdempotent) {
  auto a = quant::wrap_model(fp, 4, 8, part, 100);
  calibrate_fsc(a, {});
  auto b = a;
  calibrate_fsc(b, {});
  for (const auto& name : part.tib)
    for (int t = 1; t <= 100; ++t) EXPECT_EQ(a.act_quantizer(name).per_t.at(t), b.act_quantizer(name).per_t.at(t));
}

TEST_F(ToyCalib, SingleTimestepFscEqualsSharedCalibration) {
  auto qm = quant::wrap_model(fp, 4, 8, part, 1);
  calibrate_fsc(qm, {});
  for (const auto& [name, per_t] : observe_tib(qm)) {
    ASSERT_EQ(per_t.size(), 1u);
    EXPECT_EQ(qm.act_quantizer(name).per_t.at(1), quant::compute_qparams(std::min(0.0, per_t[0].min()), per_t[0].max(), 8));
  }
}

TEST_F(ToyCalib, PerTimestepScalesFollowRanges) {
  // s_t = width_t / 255 at 8-bit minmax, e.g. [0, 1] -> 1/255 and [0, 10] -> 10/255.
  EXPECT_DOUBLE_EQ(quant::compute_qparams(0.0, 1.0, 8).s, 1.0 / 255.0);
  EXPECT_DOUBLE_EQ(quant::compute_qparams(0.0, 10.0, 8).s, 10.0 / 255.0);
  auto qm = quant::wrap_model(fp, 4, 8, part, 100);
  calibrate_fsc(qm, {});
  const auto rows = range_report(qm);
  for (const auto& row : rows) {
    const double width = std::max(row.max, 0.0) - std::min(row.min, 0.0);
    EXPECT_NEAR(qm.act_quantizer(row.layer).per_t.at(row.t).s, width / 255.0, 1e-15);
  }
}

TEST_F(ToyCalib, RangeReportShapeAndVariation) {
  auto qm = quant::wrap_model(fp, 4, 8, part, 100);
  EXPECT_THROW(range_report(qm), std::logic_error);
  calibrate_fsc(qm, {});
  const auto rows = range_report(qm);
  ASSERT_EQ(rows.size(), part.tib.size() * 100);
  EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end(), [](const RangeRow& a, const RangeRow& b) {
    return a.layer != b.layer ? a.layer < b.layer : a.t < b.t;
  }));
  double best_ratio = 0;
  std::map<std::string, std::pair<double, double>> w;
  for (const auto& r : rows) {
    auto& [mn, mx] = w.try_emplace(r.layer, 1e300, 0.0).first->second;
    mn = std::min(mn, r.max - r.min);
    mx = std::max(mx, r.max - r.min);
  }
  for (const auto& [name, mm] : w) best_ratio = std::max(best_ratio, mm.second / mm.first);
  EXPECT_GT(best_ratio, 1.5);
}

TEST_F(ToyCalib, ConstantTibRangesAreFlat) {
  diffusion::ModelGraph flat = fp;
  for (auto& [name, t] : flat.parameters())
    if (name.rfind("time_embed.0.weight", 0) == 0) *t = Tensor(t->shape(), 0.0);
  auto qm = quant::wrap_model(flat, 32, 8, recon::partition_blocks(flat), 100);
  calibrate_fsc(qm, {});
  const auto rows = range_report(qm);
  for (const auto& r : rows) {
    if (r.layer == "time_embed.0") continue;  // its input is the timestep code itself
    const auto& first = *std::find_if(rows.begin(), rows.end(), [&](const RangeRow& x) { return x.layer == r.layer; });
    EXPECT_EQ(r.min, first.min) << r.layer;
    EXPECT_EQ(r.max, first.max) << r.layer;
  }
}

TEST_F(ToyCalib, StandardSingleEntryMatchesObservedRange) {
  CalibrationSet one;
  one.add(testing::toy_calib().entries[13]);
  auto qm = quant::wrap_model(fp, 4, 8, part, 100);
  calibrate_standard(qm, one, {}, true);

  // Observe the same forward independently.
  std::map<std::string, std::pair<double, double>> seen;
  quant::QuantHooks hooks(qm);
  hooks.observer = [&](const quant::Layer& l, const Tensor& x, std::span<const int>) {
    seen[l.name] = {x.min(), x.max()};
  };
  auto off = qm;
  off.enable_activation_quant(false);
  quant::QuantHooks off_hooks(off);
  off_hooks.observer = hooks.observer;
  numerics::Tape tape(false);
  diffusion::ForwardContext ctx(tape, &off_hooks);
  const CalibBatch b = one.range(0, 1);
  off.base().forward(ctx, tape.leaf(b.x), b.t);

  ASSERT_EQ(seen.size(), qm.layer_names().size());
  for (const auto& [name, mm] : seen) {
    const auto& aq = qm.act_quantizer(name);
    const auto want = quant::compute_qparams(mm.first, mm.second, 8);
    const auto& got = aq.time_indexed ? aq.per_t.at(1) : aq.single;
    EXPECT_EQ(got, want) << name;
    if (aq.time_indexed)
      for (int t = 2; t <= 100; ++t) EXPECT_EQ(aq.per_t.at(t), got);
  }
}

TEST_F(ToyCalib, StandardWithoutTibLeavesItUncalibrated) {
  auto qm = quant::wrap_model(fp, 4, 8, part, 100);
  calibrate_standard(qm, testing::toy_calib(), {}, false);
  for (const auto& name : part.tib) EXPECT_FALSE(qm.act_quantizer(name).calibrated);
  for (const auto& name : part.rest) EXPECT_TRUE(qm.act_quantizer(name).enabled);
  calibrate_fsc(qm, {});
  EXPECT_EQ(qm.enabled_act_quantizers(), qm.layer_names().size());
}

TEST_F(ToyCalib, StandardIsDeterministicAndAbits32IsNoop) {
  auto a = quant::wrap_model(fp, 4, 8, part, 100), b = a;
  calibrate_standard(a, testing::toy_calib(), {}, true);
  calibrate_standard(b, testing::toy_calib(), {}, true);
  for (const auto& name : a.layer_names()) EXPECT_EQ(a.act_quantizer(name).single, b.act_quantizer(name).single);

  auto full = quant::wrap_model(fp, 4, 32, part, 100);
  calibrate_standard(full, testing::toy_calib(), {}, true);
  calibrate_fsc(full, {});
  EXPECT_EQ(full.enabled_act_quantizers(), 0u);
}

}  // namespace
}  // namespace diffq::calib
