// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "diffq/calib/calibrate.hpp"
#include "diffq/diffusion/checkpoint.hpp"
#include "diffq/errors.hpp"
#include "diffq/numerics/kernels.hpp"
#include "diffq/numerics/precision.hpp"
#include "diffq/quant/quant_model.hpp"
#include "diffq/quant/quant_ops.hpp"
#include "diffq/recon/losses.hpp"
#include "diffq/recon/partition.hpp"
#include "diffq/recon/pipeline.hpp"
#include "diffq/recon/reconstruct.hpp"
#include "toy_fixture.hpp"

namespace diffq::recon {
namespace {

using numerics::Tensor;

std::vector<int> all_t(int T) {
  std::vector<int> t(T);
  std::iota(t.begin(), t.end(), 1);
  return t;
}

class Toy : public ::testing::Test {
 protected:
  const diffusion::ModelGraph& fp = testing::trained_toy();
  const BlockPartition part = partition_blocks(fp);
  const diffusion::NoiseSchedule& sched = testing::toy_schedule();
  const calib::CalibrationSet& calib = testing::toy_calib();

  quant::QuantModel wrap(int wbits, int abits = 32) const { return quant::wrap_model(fp, wbits, abits, part, sched.T); }

  // TIAR run shared by several tests.
  static const std::pair<quant::QuantModel, ReconResult>& tiar_4bit() {
    static const auto run = [] {
      const auto& m = testing::trained_toy();
      auto qm = quant::wrap_model(m, 4, 32, partition_blocks(m), 100);
      ReconConfig cfg;
      cfg.seed = 3;
      auto r = reconstruct_tiar(m, qm, testing::toy_schedule(), cfg);
      return std::make_pair(std::move(qm), std::move(r));
    }();
    return run;
  }
};

TEST_F(Toy, PartitionOfDefaultModel) {
  ASSERT_EQ(part.tib.size(), 8u);
  std::size_t time_embed = 0, emb = 0;
  for (const auto& name : part.tib) {
    const auto role = fp.layer(name).role;
    time_embed += role == diffusion::LayerRole::time_embed;
    emb += role == diffusion::LayerRole::embedding;
  }
  EXPECT_EQ(time_embed, 2u);
  EXPECT_EQ(emb, 6u);
  ASSERT_EQ(part.res_blocks.size(), 6u);
  EXPECT_FALSE(part.tib_empty);

  auto all = part.all_layers();
  std::set<std::string> uniq(all.begin(), all.end());
  EXPECT_EQ(uniq.size(), all.size());
  const auto q = fp.quantizable_layer_names();
  EXPECT_EQ(uniq, std::set<std::string>(q.begin(), q.end()));
  for (std::size_t i = 0; i < 6; ++i)
    for (const auto& name : part.res_blocks[i]) EXPECT_FALSE(part.in_tib(name));
}

TEST(Partition, NoTimeConditioning) {
  diffusion::ModelConfig c;
  c.time_conditioning = false;
  const auto m = diffusion::ModelGraph::build(c, 1);
  const auto p = partition_blocks(m);
  EXPECT_TRUE(p.tib_empty);
  EXPECT_TRUE(p.tib.empty());
  EXPECT_EQ(p.all_layers().size(), m.quantizable_layer_names().size());
}

TEST_F(Toy, TiarLossZeroWhenDisabled) {
  auto qm = wrap(4);
  qm.enable_weight_quant(false);
  EXPECT_EQ(tiar_loss(fp, qm, all_t(100)), 0.0);
}

TEST_F(Toy, TiarLossOfConstantOffset) {
  numerics::PrecisionScope p(numerics::Precision::f64);
  diffusion::ModelGraph shifted = fp;
  const double c = 0.25;
  const std::string emb = fp.embedding_layer_name(2);
  for (auto& [name, t] : shifted.parameters())
    if (name == emb + ".bias") *t = numerics::kernels::add(*t, Tensor(t->shape(), c));
  auto qm = quant::wrap_model(shifted, 4, 32, part, 100);
  qm.enable_weight_quant(false);
  const double d = static_cast<double>(fp.layer(emb).out_channels());
  EXPECT_NEAR(tiar_loss(fp, qm, all_t(10)), d * c * c, 1e-12);
}

TEST_F(Toy, FourBitLossesArePositive) {
  const auto qm = wrap(4);
  EXPECT_GT(tiar_loss(fp, qm, all_t(100)), 0.0);
  EXPECT_GT(block_loss(fp, qm, 0, calib.range(0, 16)), 0.0);
}

TEST_F(Toy, BlockLossOfConstantOffset) {
  numerics::PrecisionScope p(numerics::Precision::f64);
  auto off = wrap(4);
  off.enable_weight_quant(false);
  EXPECT_EQ(block_loss(fp, off, 1, calib.range(0, 8)), 0.0);

  diffusion::ModelGraph shifted = fp;
  const double c = -0.5;
  for (auto& [name, t] : shifted.parameters())
    if (name == "blocks.0.conv2.bias") *t = numerics::kernels::add(*t, Tensor(t->shape(), c));
  auto qm = quant::wrap_model(shifted, 4, 32, part, 100);
  qm.enable_weight_quant(false);
  const double m = static_cast<double>(fp.layer("blocks.0.conv2").out_channels() * 8 * 8);
  EXPECT_NEAR(block_loss(fp, qm, 0, calib.range(0, 8)), m * c * c, 1e-9);
}

TEST(Anneal, Schedule) {
  ReconConfig cfg;
  cfg.iterations = 100;
  EXPECT_EQ(anneal_beta(cfg, 0), 0.0);
  EXPECT_EQ(anneal_beta(cfg, 19), 0.0);
  EXPECT_DOUBLE_EQ(anneal_beta(cfg, 20), 20.0);
  EXPECT_DOUBLE_EQ(anneal_beta(cfg, 60), 11.0);
  EXPECT_DOUBLE_EQ(anneal_beta(cfg, 100), 2.0);
  for (std::size_t it = 21; it < 100; ++it) EXPECT_LT(anneal_beta(cfg, it), anneal_beta(cfg, it - 1));
}

TEST(ReconConfigCheck, RejectsBadValues) {
  ReconConfig cfg;
  cfg.warmup = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr_rounding = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST_F(Toy, TiarZeroIterationsIsNoop) {
  auto qm = wrap(4);
  const auto before = qm;
  ReconConfig cfg;
  cfg.iterations = 0;
  const auto r = reconstruct_tiar(fp, qm, sched, cfg);
  for (const auto& name : qm.layer_names())
    EXPECT_TRUE(numerics::identical(qm.weight_quantizer(name).rounding, before.weight_quantizer(name).rounding));
  // The traced and plain evaluations differ only by f32 rounding.
  EXPECT_NEAR(r.initial_loss, tiar_loss(fp, before, all_t(100)), 1e-6 * r.initial_loss);
  EXPECT_EQ(r.final_loss, r.initial_loss);
}

TEST_F(Toy, TiarHalvesTheLoss) {
  const auto& [qm, r] = tiar_4bit();
  EXPECT_LE(r.final_loss / r.initial_loss, 0.5);
  EXPECT_NEAR(r.final_loss, tiar_loss(fp, qm, all_t(100)), 1e-6 * r.final_loss);
  EXPECT_EQ(r.loss_curve.size(), 2001u);
}

TEST_F(Toy, TiarCurveTrendsDown) {
  const auto& curve = tiar_4bit().second.loss_curve;
  std::vector<double> smooth;
  for (std::size_t k = 0; k + 100 <= curve.size(); ++k)
    smooth.push_back(std::accumulate(curve.begin() + k, curve.begin() + k + 100, 0.0) / 100.0);
  // Non-increasing up to 5% noise: no window rises above the running minimum by more than 5%.
  double lowest = smooth.front();
  for (double v : smooth) {
    EXPECT_LE(v, lowest * 1.05);
    lowest = std::min(lowest, v);
  }
  EXPECT_LT(smooth.back(), smooth.front());
}

TEST_F(Toy, TiarTouchesOnlyTheTib) {
  const auto& qm = tiar_4bit().first;
  const auto ref = wrap(4);
  bool tib_changed = false;
  for (const auto& name : qm.layer_names()) {
    const bool same = numerics::identical(qm.weight_quantizer(name).rounding, ref.weight_quantizer(name).rounding);
    if (part.in_tib(name))
      tib_changed |= !same;
    else
      EXPECT_TRUE(same) << name;
  }
  EXPECT_TRUE(tib_changed);
}

TEST_F(Toy, TiarRoundingSettlesNearBinary) {
  const auto& qm = tiar_4bit().first;
  std::size_t total = 0, settled = 0;
  for (const auto& name : part.tib)
    for (double v : qm.weight_quantizer(name).rounding.data()) {
      const double h = quant::soft_rounding(v);
      ++total;
      settled += std::min(h, 1.0 - h) <= 1e-3;
    }
  EXPECT_GE(static_cast<double>(settled) / static_cast<double>(total), 0.95);
}

TEST_F(Toy, TiarIsDeterministicAndDataFree) {
  // No calibration set is passed; two runs with the same seed agree bit for bit.
  ReconConfig cfg;
  cfg.iterations = 50;
  auto a = wrap(4), b = wrap(4);
  const auto ra = reconstruct_tiar(fp, a, sched, cfg);
  const auto rb = reconstruct_tiar(fp, b, sched, cfg);
  EXPECT_EQ(ra.loss_curve, rb.loss_curve);
  for (const auto& name : part.tib)
    EXPECT_TRUE(numerics::identical(a.weight_quantizer(name).rounding, b.weight_quantizer(name).rounding));
}

TEST_F(Toy, EightBitTiarIsFarBelowFourBitStart) {
  auto qm = wrap(8);
  ReconConfig cfg;
  cfg.iterations = 500;
  const auto r = reconstruct_tiar(fp, qm, sched, cfg);
  EXPECT_LE(r.final_loss, 1e-2 * tiar_4bit().second.initial_loss);
}

TEST_F(Toy, BlockFreezeKeepsEmbeddingRounding) {
  ReconConfig cfg;
  cfg.iterations = 120;
  cfg.freeze_embedding = true;
  auto qm = wrap(4);
  const auto before = qm;
  const auto r = reconstruct_block(fp, qm, 1, calib, cfg);
  const std::string emb = fp.embedding_layer_name(1);
  EXPECT_TRUE(numerics::identical(qm.weight_quantizer(emb).rounding, before.weight_quantizer(emb).rounding));
  for (const auto& name : part.res_blocks[1])
    EXPECT_FALSE(numerics::identical(qm.weight_quantizer(name).rounding, before.weight_quantizer(name).rounding)) << name;
  EXPECT_LT(r.final_loss, r.initial_loss);

  cfg.freeze_embedding = false;
  auto joint = wrap(4);
  reconstruct_block(fp, joint, 1, calib, cfg);
  EXPECT_FALSE(numerics::identical(joint.weight_quantizer(emb).rounding, before.weight_quantizer(emb).rounding));
}

TEST_F(Toy, BlockZeroIterationsIsNoop) {
  ReconConfig cfg;
  cfg.iterations = 0;
  auto qm = wrap(4);
  const auto before = qm;
  const auto r = reconstruct_block(fp, qm, 0, calib, cfg);
  for (const auto& name : qm.layer_names())
    EXPECT_TRUE(numerics::identical(qm.weight_quantizer(name).rounding, before.weight_quantizer(name).rounding));
  EXPECT_EQ(r.final_loss, r.initial_loss);
  EXPECT_THROW(reconstruct_block(fp, qm, 6, calib, cfg), RangeError);
}

TEST_F(Toy, LayerReconstructionReducesLoss) {
  ReconConfig cfg;
  cfg.iterations = 150;
  auto qm = wrap(4);
  const auto r = reconstruct_layer(fp, qm, part.rest.empty() ? "time_embed.1" : part.rest.front(), calib, cfg);
  EXPECT_LT(r.final_loss, r.initial_loss);
}

TEST(PipelineModes, Names) {
  for (auto m : {PipelineMode::baseline, PipelineMode::tiar, PipelineMode::fsc, PipelineMode::tfmq})
    EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_EQ(parse_mode("tiar_only"), PipelineMode::tiar);
  EXPECT_EQ(parse_mode("fsc_only"), PipelineMode::fsc);
  EXPECT_THROW(parse_mode("brecq"), ConfigError);
  EXPECT_TRUE(uses_tiar(PipelineMode::tfmq) && uses_fsc(PipelineMode::tfmq));
  EXPECT_FALSE(uses_tiar(PipelineMode::baseline) || uses_fsc(PipelineMode::baseline));
}

TEST_F(Toy, TfmqIsTiarThenFsc) {
  PipelineConfig cfg;
  cfg.recon.iterations = 20;
  cfg.recon.eval_every = 10;
  const auto whole = quantize_pipeline(fp, sched, calib, cfg, PipelineMode::tfmq);
  auto parts = reconstruct_weights(fp, sched, calib, cfg, true);
  calibrate_activations(parts, calib, cfg, true);
  EXPECT_EQ(diffusion::serialize_checkpoint(quant::quant_checkpoint(whole)),
            diffusion::serialize_checkpoint(quant::quant_checkpoint(parts)));
}

TEST_F(Toy, AllModesComplete) {
  PipelineConfig cfg;
  cfg.recon.iterations = 10;
  cfg.recon.eval_every = 5;
  for (auto mode : {PipelineMode::baseline, PipelineMode::tiar, PipelineMode::fsc, PipelineMode::tfmq}) {
    PipelineResult res;
    const auto qm = quantize_pipeline(fp, sched, calib, cfg, mode, &res);
    EXPECT_EQ(qm.enabled_act_quantizers(), qm.layer_names().size()) << to_string(mode);
    ASSERT_FALSE(res.units.empty());
    EXPECT_EQ(res.units.front().first == "tib", uses_tiar(mode)) << to_string(mode);
    for (const auto& name : part.tib) EXPECT_EQ(qm.act_quantizer(name).time_indexed, true);
    // FSC gives per-t params that differ across t; the baseline shares one set.
    const auto& aq = qm.act_quantizer("time_embed.1");
    EXPECT_EQ(!(aq.per_t.at(1) == aq.per_t.at(100)), uses_fsc(mode)) << to_string(mode);
  }
}

}  // namespace
}  // namespace diffq::recon
