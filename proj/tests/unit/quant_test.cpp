// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "diffq/diffusion/checkpoint.hpp"
#include "diffq/errors.hpp"
#include "diffq/numerics/gradcheck.hpp"
#include "diffq/numerics/ops.hpp"
#include "diffq/numerics/precision.hpp"
#include "diffq/quant/quant_model.hpp"
#include "diffq/quant/quant_ops.hpp"
#include "diffq/recon/partition.hpp"
#include "toy_fixture.hpp"

namespace diffq::quant {
namespace {

using numerics::Precision;
using numerics::PrecisionScope;
using testing::random_tensor;

TEST(QParams, AsymmetricExample) {
  const auto qp = compute_qparams(-1.0, 3.0, 8);
  EXPECT_DOUBLE_EQ(qp.s, 4.0 / 255.0);
  EXPECT_EQ(qp.z, 64);  // round(63.75)
}

TEST(QParams, IntegerLattice) {
  for (int b : {2, 3, 4, 8, 12}) {
    const auto qp = compute_qparams(0.0, std::ldexp(1.0, b) - 1.0, b);
    EXPECT_DOUBLE_EQ(qp.s, 1.0);
    EXPECT_EQ(qp.z, 0);
  }
}

TEST(QParams, SymmetricRangeRoundsHalfAway) {
  static_assert(kRoundingMode == RoundingMode::half_away_from_zero);
  EXPECT_EQ(compute_qparams(-2.0, 2.0, 8).z, 128);  // round(127.5)
  EXPECT_EQ(round_half_away(2.5), 3.0);
  EXPECT_EQ(round_half_away(-2.5), -3.0);
  EXPECT_EQ(round_half_away(-0.4), -0.0);
}

TEST(QParams, RangeAlwaysContainsZero) {
  const auto pos = compute_qparams(2.0, 5.0, 8);
  EXPECT_EQ(pos.z, 0);
  EXPECT_DOUBLE_EQ(pos.s, 5.0 / 255.0);
  const auto neg = compute_qparams(-5.0, -2.0, 8);
  EXPECT_EQ(neg.z, 255);
  EXPECT_EQ(fake_quant(0.0, neg), 0.0);
}

TEST(QParams, DegenerateAndInvalid) {
  const auto d = compute_qparams(0.0, 0.0, 8);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.s, 1.0);
  EXPECT_EQ(d.z, 0);
  EXPECT_THROW(compute_qparams(1.0, -1.0, 8), RangeError);
  EXPECT_THROW(compute_qparams(-1.0, 1.0, 1), ConfigError);
  EXPECT_THROW(compute_qparams(-1.0, 1.0, 31), ConfigError);
}

TEST(FakeQuant, Examples) {
  const QuantParams qp{0.5, 0, 4};
  EXPECT_EQ(fake_quant(1.3, qp), 1.5);
  EXPECT_EQ(fake_quant(10.0, qp), 7.5);
  EXPECT_EQ(fake_quant(-3.0, qp), 0.0);
  EXPECT_EQ(fake_quant(2.0, qp), 2.0);
}

// Dense sweep of the representable range for several grids.
TEST(FakeQuant, RoundTripBoundIdempotenceMonotonicity) {
  const double scales[] = {0.013, 0.5, 1.0 / 3.0};
  for (int b : {2, 4, 8})
    for (double s : scales)
      for (int z : {0, 1, (1 << b) / 2, (1 << b) - 1}) {
        const QuantParams qp{s, z, b};
        const double lo = qp.lo(), hi = qp.hi();
        constexpr int kPoints = 100000;
        double prev = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < kPoints; ++k) {
          const double x = lo + (hi - lo) * k / (kPoints - 1);
          const double q = fake_quant(x, qp);
          ASSERT_LE(std::abs(x - q), s / 2 + 1e-6) << "b=" << b << " s=" << s << " z=" << z << " x=" << x;
          ASSERT_EQ(fake_quant(q, qp), q);
          ASSERT_GE(q, prev);
          prev = q;
        }
        EXPECT_EQ(fake_quant(0.0, qp), 0.0);
      }
}

TEST(FakeQuant, TensorMatchesScalar) {
  const Tensor x = random_tensor({50}, 1, -3.0, 3.0);
  const QuantParams qp = compute_qparams(-1.0, 2.0, 4);
  const Tensor y = fake_quant(x, qp);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], fake_quant(x[i], qp));
}

TEST(FakeQuant, PerChannelRows) {
  const Tensor w({2, 3}, {0.12, -0.7, 0.33, 4.1, -2.2, 1.0});
  const QuantParams p[] = {compute_qparams(-0.7, 0.33, 4), compute_qparams(-2.2, 4.1, 4)};
  const Tensor q = fake_quant_channels(w, p);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(q[c * 3 + k], fake_quant(w[c * 3 + k], p[c]));
}

TEST(Fsc, Examples) {
  TimeIndexedQuantParams tq = uniform_time_params(compute_qparams(-1.0, 1.0, 8), 10);
  const Tensor x = random_tensor({7}, 2);
  for (int t = 2; t <= 10; ++t) EXPECT_TRUE(numerics::identical(fsc_quant(x, t, tq), fsc_quant(x, 1, tq)));
  tq.at(5) = QuantParams{1.0, 0, 8};
  EXPECT_EQ(fsc_quant(Tensor::from({3.4}), 5, tq)[0], 3.0);
  EXPECT_THROW(fsc_quant(x, 11, tq), RangeError);
  EXPECT_THROW(fsc_quant(x, 0, tq), RangeError);
}

TEST(SoftRounding, BoundsAndDerivative) {
  PrecisionScope p(Precision::f64);
  for (double v = -8.0; v <= 8.0; v += 0.37) {
    const double h = soft_rounding(v);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 1.0);
    const double fd = (soft_rounding(v + 1e-6) - soft_rounding(v - 1e-6)) / 2e-6;
    EXPECT_NEAR(soft_rounding_grad(v), fd, 1e-6);
  }
  EXPECT_EQ(soft_rounding(50.0), 1.0);
  EXPECT_EQ(soft_rounding(-50.0), 0.0);
}

TEST(Rounding, InitReproducesNearestAndWeight) {
  PrecisionScope p(Precision::f64);
  const Tensor w = random_tensor({4, 6}, 3, -0.8, 0.8);
  std::vector<QuantParams> ch;
  for (std::size_t c = 0; c < 4; ++c) {
    double lo = 0, hi = 0;
    for (std::size_t k = 0; k < 6; ++k) lo = std::min(lo, w[c * 6 + k]), hi = std::max(hi, w[c * 6 + k]);
    ch.push_back(compute_qparams(lo, hi, 4));
  }
  const Tensor v = init_rounding(w, ch);
  EXPECT_TRUE(numerics::identical(rounded_weight(w, v, ch, false), fake_quant_channels(w, ch)));
  const Tensor soft = rounded_weight(w, v, ch, true);
  // The relaxation starts at the weight itself, clamped to the grid's range.
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& qp = ch[i / 6];
    EXPECT_NEAR(soft[i], std::clamp(w[i], qp.lo(), qp.hi()), 1e-9);
  }
}

TEST(Rounding, AdaroundGradientMatchesFiniteDifferences) {
  PrecisionScope p(Precision::f64);
  const Tensor w = random_tensor({3, 5}, 4, -1.0, 1.0);
  std::vector<QuantParams> ch(3, compute_qparams(-1.0, 1.0, 4));
  numerics::Tape tape;
  Var v = tape.leaf(random_tensor({3, 5}, 5, -2.0, 2.0));
  Var x = tape.leaf(random_tensor({2, 5}, 6));
  Var y = numerics::linear(x, adaround_op(v, w, ch, true), tape.leaf(Tensor({3}, 0.0)));
  Var loss = numerics::add(numerics::sum_squares(y), rounding_regularizer(v, 3.0));
  const Var wrt[] = {v};
  EXPECT_LE(numerics::finite_diff_check(tape, loss, wrt, 1e-6), 1e-4);
}

TEST(Rounding, RegularizerValue) {
  PrecisionScope p(Precision::f64);
  numerics::Tape tape;
  const Tensor vals = Tensor::from({-3.0, 0.0, 0.4, 5.0});
  Var v = tape.leaf(vals);
  double want = 0.0;
  for (double x : vals.data()) want += 1.0 - std::pow(std::abs(2.0 * soft_rounding(x) - 1.0), 2.5);
  EXPECT_NEAR(rounding_regularizer(v, 2.5).value().item(), want, 1e-14);
}

class ToyQuant : public ::testing::Test {
 protected:
  const diffusion::ModelGraph& fp = testing::trained_toy();
  const recon::BlockPartition part = recon::partition_blocks(fp);
};

TEST_F(ToyQuant, FullPrecisionWrapIsBitIdentical) {
  auto qm = wrap_model(fp, 32, 32, part, 100);
  qm.enable_activation_quant(true);
  EXPECT_EQ(qm.enabled_act_quantizers(), 0u);
  const auto eps = diffusion::fp_eps_model(fp);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const Tensor x = diffusion::gaussian({1, 1, 8, 8}, k);
    const int t[] = {static_cast<int>(1 + k % 100)};
    ASSERT_TRUE(numerics::identical(qm.predict(x, t), eps(x, t)));
  }
}

TEST_F(ToyQuant, DisabledQuantizersAreTransparent) {
  auto qm = wrap_model(fp, 4, 8, part, 100);
  qm.enable_weight_quant(false);
  qm.enable_activation_quant(false);
  const Tensor x = diffusion::gaussian({4, 1, 8, 8}, 9);
  const int t[] = {1, 30, 60, 100};
  EXPECT_TRUE(numerics::identical(qm.predict(x, t), diffusion::fp_eps_model(fp)(x, t)));
  qm.enable_weight_quant(true);
  EXPECT_FALSE(numerics::identical(qm.predict(x, t), diffusion::fp_eps_model(fp)(x, t)));
}

TEST_F(ToyQuant, FourBitActivationsOffWhenFullPrecision) {
  auto qm = wrap_model(fp, 4, 32, part, 100);
  qm.enable_activation_quant(true);
  EXPECT_EQ(qm.enabled_act_quantizers(), 0u);
}

TEST_F(ToyQuant, ChannelWiseWeightParams) {
  const auto qm = wrap_model(fp, 4, 8, part, 100);
  for (const auto& name : qm.layer_names()) {
    const auto& layer = fp.layer(name);
    const auto& wq = qm.weight_quantizer(name);
    EXPECT_EQ(wq.channels.size(), layer.out_channels()) << name;
    EXPECT_EQ(wq.rounding.shape(), layer.weight.shape());
    EXPECT_EQ(qm.act_quantizer(name).time_indexed, part.in_tib(name)) << name;
  }
  EXPECT_THROW(wrap_model(fp, 1, 8, part, 100), ConfigError);
  EXPECT_THROW(wrap_model(fp, 4, 20, part, 100), ConfigError);
}

TEST_F(ToyQuant, EffectiveWeightIsOnTheGrid) {
  const auto qm = wrap_model(fp, 4, 8, part, 100);
  const std::string name = part.res_blocks[0].front();
  const Tensor w = qm.effective_weight(name);
  const auto& ch = qm.weight_quantizer(name).channels;
  const std::size_t per = w.size() / ch.size();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& qp = ch[i / per];
    const double k = w[i] / qp.s + qp.z;
    EXPECT_NEAR(k, std::round(k), 1e-9);
    EXPECT_GE(std::round(k), 0);
    EXPECT_LE(std::round(k), qp.qmax());
  }
}

TEST_F(ToyQuant, StorageOverhead) {
  const auto qm = wrap_model(fp, 4, 8, part, 100);
  const auto r = storage_overhead(qm);
  EXPECT_EQ(r.tib_sites, part.tib.size());
  EXPECT_EQ(r.tib_sites, 8u);
  EXPECT_EQ(r.extra_params, r.tib_sites * 2 * 100 - r.tib_sites * 2);
  EXPECT_EQ(r.model_params, fp.parameter_count());
  EXPECT_DOUBLE_EQ(r.fraction, static_cast<double>(r.extra_params) / static_cast<double>(r.model_params));
  EXPECT_LT(r.fraction, 0.01);

  const auto single = storage_overhead(wrap_model(fp, 4, 8, part, 1));
  EXPECT_EQ(single.extra_params, 0u);
  EXPECT_EQ(single.fraction, 0.0);
}

TEST_F(ToyQuant, CheckpointRoundTripIsBitExact) {
  auto qm = wrap_model(fp, 4, 8, part, 100);
  // Perturb some state so the round trip is not of defaults only.
  auto& aq = qm.act_quantizer(part.tib.front());
  aq.per_t = uniform_time_params(compute_qparams(-1.0, 1.0, 8), 100);
  aq.per_t.at(7) = compute_qparams(-0.3, 2.7, 8);
  aq.calibrated = true;
  auto& wq = qm.weight_quantizer(part.rest.empty() ? part.res_blocks[0][0] : part.rest[0]);
  wq.rounding.mutable_data()[0] = -1.25;

  const std::string bytes = diffusion::serialize_checkpoint(quant_checkpoint(qm));
  const auto back = quant_from_checkpoint(fp, diffusion::parse_checkpoint(bytes));
  EXPECT_EQ(diffusion::serialize_checkpoint(quant_checkpoint(back)), bytes);
  EXPECT_EQ(back.act_quantizer(part.tib.front()).per_t.at(7), aq.per_t.at(7));
  for (const auto& name : qm.layer_names())
    EXPECT_TRUE(numerics::identical(back.weight_quantizer(name).rounding, qm.weight_quantizer(name).rounding));

  auto model_only = diffusion::model_checkpoint(fp, 1);
  EXPECT_THROW(quant_from_checkpoint(fp, model_only), ArchitectureMismatch);
}

}  // namespace
}  // namespace diffq::quant
