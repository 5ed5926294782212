// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/recon/losses.hpp"

#include "diffq/errors.hpp"
#include "diffq/numerics/kernels.hpp"
#include "diffq/numerics/ops.hpp"

namespace diffq::recon {

namespace ops = numerics;
namespace k = numerics::kernels;

double feature_mismatch(std::span<const Tensor> a, std::span<const Tensor> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("feature_mismatch: feature lists differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) throw ShapeError("feature_mismatch: feature shapes differ");
    acc += k::sum_squares(k::sub(a[i], b[i]));
  }
  return acc / static_cast<double>(a.front().dim(0));
}

std::vector<Tensor> fp_temporal_features(const diffusion::ModelGraph& fp, std::span<const int> t) {
  numerics::Tape tape(false);
  diffusion::ForwardContext ctx(tape);
  std::vector<Tensor> out;
  for (const Var& v : fp.temporal_features(ctx, t)) out.push_back(v.value());
  return out;
}

double tiar_loss(const diffusion::ModelGraph& fp, const quant::QuantModel& qm, std::span<const int> t_batch) {
  const auto a = fp_temporal_features(fp, t_batch);
  const auto b = qm.temporal_features(t_batch);
  return feature_mismatch(a, b);
}

BlockIO block_io(const diffusion::ModelGraph& fp, std::size_t block, const calib::CalibBatch& batch) {
  if (block >= fp.n_blocks()) throw RangeError("block index " + std::to_string(block) + " out of range");
  numerics::Tape tape(false);
  diffusion::ForwardContext ctx(tape);
  BlockIO io;
  io.t = batch.t;
  ctx.block_probe = [&](std::size_t i, Var in, Var out) {
    if (i != block) return;
    io.input = in.value();
    io.output = out.value();
  };
  fp.forward(ctx, tape.leaf(batch.x), batch.t);
  return io;
}

Tensor quant_time_embedding(const quant::QuantModel& qm, std::span<const int> t) {
  numerics::Tape tape(false);
  quant::QuantHooks hooks(qm);
  diffusion::ForwardContext ctx(tape, &hooks);
  return qm.base().time_embed(ctx, t).value();
}

double block_loss(const diffusion::ModelGraph& fp, const quant::QuantModel& qm, std::size_t block,
                  const calib::CalibBatch& batch) {
  const BlockIO io = block_io(fp, block, batch);
  std::optional<Tensor> h;
  if (qm.base().config().time_conditioning) h = quant_time_embedding(qm, io.t);
  numerics::Tape tape(false);
  quant::QuantHooks hooks(qm);
  diffusion::ForwardContext ctx(tape, &hooks);
  std::optional<Var> hv;
  if (h) hv = tape.leaf(*h);
  const Var out = qm.base().res_block(ctx, block, tape.leaf(io.input), hv, io.t);
  return k::sum_squares(k::sub(out.value(), io.output)) / static_cast<double>(io.output.dim(0));
}

Var tiar_loss_traced(diffusion::ForwardContext& ctx, const quant::QuantModel& qm, std::span<const int> t,
                     std::span<const Tensor> fp_features) {
  const auto q = qm.base().temporal_features(ctx, t);
  if (q.size() != fp_features.size()) throw ShapeError("tiar loss: feature count mismatch");
  std::optional<Var> acc;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Var term = ops::sum_squares(ops::sub(q[i], ctx.tape.leaf(fp_features[i])));
    acc = acc ? ops::add(*acc, term) : term;
  }
  return ops::scale(*acc, 1.0 / static_cast<double>(t.size()));
}

Var block_loss_traced(diffusion::ForwardContext& ctx, const quant::QuantModel& qm, std::size_t block,
                      const Tensor& input, const Tensor& h, const Tensor& target, std::span<const int> t) {
  std::optional<Var> hv;
  if (h.defined()) hv = ctx.tape.leaf(h);
  const Var out = qm.base().res_block(ctx, block, ctx.tape.leaf(input), hv, t);
  return ops::scale(ops::sum_squares(ops::sub(out, ctx.tape.leaf(target))),
                    1.0 / static_cast<double>(target.dim(0)));
}

}  // namespace diffq::recon
