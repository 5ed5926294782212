// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/recon/reconstruct.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <unordered_map>

#include "diffq/errors.hpp"
#include "diffq/numerics/adam.hpp"
#include "diffq/numerics/kernels.hpp"
#include "diffq/numerics/ops.hpp"
#include "diffq/quant/quant_ops.hpp"
#include "diffq/recon/losses.hpp"

namespace diffq::recon {

namespace ops = numerics;
namespace k = numerics::kernels;
using quant::QuantHooks;
using quant::QuantModel;

void ReconConfig::validate() const {
  if (batch == 0 || tiar_batch == 0) throw ConfigError("recon batch sizes must be positive");
  if (!(lr_rounding > 0.0)) throw ConfigError("recon.lr_rounding must be positive");
  if (anneal_start < anneal_end || anneal_end <= 0.0) throw ConfigError("recon anneal needs start >= end > 0");
  if (!(warmup >= 0.0 && warmup < 1.0)) throw ConfigError("recon.warmup must lie in [0, 1)");
  if (reg_weight < 0.0) throw ConfigError("recon.reg_weight must be non-negative");
  if (eval_every == 0) throw ConfigError("recon.eval_every must be positive");
}

double anneal_beta(const ReconConfig& cfg, std::size_t it) {
  const double n = static_cast<double>(cfg.iterations);
  const double start = cfg.warmup * n;
  if (static_cast<double>(it) < start) return 0.0;
  const double rel = n > start ? (static_cast<double>(it) - start) / (n - start) : 1.0;
  return cfg.anneal_end + (cfg.anneal_start - cfg.anneal_end) * std::max(0.0, 1.0 - rel);
}

namespace {

// Switches activation quantizers off for the lifetime of the guard.
class ActQuantOff {
 public:
  explicit ActQuantOff(QuantModel& qm) : qm_(qm) {
    for (const auto& name : qm.layer_names()) {
      saved_.emplace(name, qm.act_quantizer(name).enabled);
      qm.act_quantizer(name).enabled = false;
    }
  }
  ~ActQuantOff() {
    for (const auto& [name, on] : saved_) qm_.act_quantizer(name).enabled = on;
  }
  ActQuantOff(const ActQuantOff&) = delete;
  ActQuantOff& operator=(const ActQuantOff&) = delete;

 private:
  QuantModel& qm_;
  std::unordered_map<std::string, bool> saved_;
};

// Builds the reconstruction loss for the given sample indices on `ctx`.
using LossBuilder = std::function<Var(diffusion::ForwardContext& ctx, const std::vector<std::size_t>& idx)>;

struct Unit {
  std::vector<std::string> layers;  // rounding variables to optimize
  std::size_t n_samples = 0;
  std::size_t batch = 0;
  std::size_t eval_every = 1;
  std::size_t eval_chunk = 64;
  LossBuilder loss;
};

double hard_loss(const QuantModel& qm, const Unit& u) {
  double acc = 0.0;
  for (std::size_t b = 0; b < u.n_samples; b += u.eval_chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(b + u.eval_chunk, u.n_samples); ++i) idx.push_back(i);
    numerics::Tape tape(false);
    QuantHooks hooks(qm);
    diffusion::ForwardContext ctx(tape, &hooks);
    acc += u.loss(ctx, idx).value().item() * static_cast<double>(idx.size());
  }
  return acc / static_cast<double>(u.n_samples);
}

ReconResult optimize(QuantModel& qm, const Unit& u, const ReconConfig& cfg) {
  cfg.validate();
  if (u.n_samples == 0) throw ConfigError("reconstruction unit has no samples");
  const auto t0 = std::chrono::steady_clock::now();
  ActQuantOff guard(qm);
  ReconResult res;
  std::vector<std::string> layers;
  for (const auto& l : u.layers)
    if (qm.weight_quantizer(l).enabled) layers.push_back(l);

  auto record = [&](std::size_t it) {
    const double v = hard_loss(qm, u);
    if (!std::isfinite(v)) throw NumericError("reconstruction loss non-finite at iteration " + std::to_string(it));
    res.loss_curve.push_back(v);
    res.curve_iterations.push_back(it);
  };
  record(0);
  res.initial_loss = res.loss_curve.front();

  if (!layers.empty() && cfg.iterations > 0) {
    numerics::Adam opt(cfg.lr_rounding);
    std::mt19937_64 gen(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, u.n_samples - 1);
    std::vector<std::size_t> all(u.n_samples);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      std::vector<std::size_t> idx;
      if (u.n_samples <= u.batch) {
        idx = all;
      } else {
        for (std::size_t j = 0; j < u.batch; ++j) idx.push_back(pick(gen));
      }
      numerics::Tape tape;
      QuantHooks hooks(qm);
      hooks.trainable.insert(layers.begin(), layers.end());
      hooks.soft = true;
      diffusion::ForwardContext ctx(tape, &hooks);
      Var loss = u.loss(ctx, idx);
      const double beta = anneal_beta(cfg, it);
      if (beta > 0.0 && cfg.reg_weight > 0.0)
        for (const auto& l : layers)
          loss = ops::add(loss, ops::scale(quant::rounding_regularizer(hooks.rounding_leaves.at(l), beta), cfg.reg_weight));
      if (!std::isfinite(loss.value().item()))
        throw NumericError("reconstruction loss non-finite at iteration " + std::to_string(it));

      std::vector<Var> wrt;
      std::vector<numerics::Tensor*> targets;
      for (const auto& l : layers) {
        wrt.push_back(hooks.rounding_leaves.at(l));
        targets.push_back(&qm.weight_quantizer(l).rounding);
      }
      const auto grads = numerics::gradients(tape, loss, wrt);
      std::vector<Tensor> g;
      for (const Var& w : wrt) g.push_back(grads.at(w.id()));
      opt.step(targets, g);

      if ((it + 1) % u.eval_every == 0 || it + 1 == cfg.iterations) record(it + 1);
    }
  }
  res.final_loss = res.loss_curve.back();
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// Full-precision inputs to `layer` over the calibration set, in entry order.
struct LayerData {
  Tensor input;
  std::vector<int> t;
};

LayerData collect_layer_inputs(const diffusion::ModelGraph& fp, const std::string& layer,
                               const calib::CalibrationSet& calib) {
  class Probe : public diffusion::LayerHooks {
   public:
    explicit Probe(const std::string& name) : name_(name) {}
    Var activation(const diffusion::Layer& l, Var x, std::span<const int>) override {
      if (l.name == name_) seen.push_back(x.value());
      return x;
    }
    std::vector<Tensor> seen;

   private:
    const std::string& name_;
  } probe(layer);
  LayerData d;
  constexpr std::size_t kChunk = 64;
  for (std::size_t b = 0; b < calib.size(); b += kChunk) {
    const calib::CalibBatch cb = calib.range(b, std::min(b + kChunk, calib.size()));
    numerics::Tape tape(false);
    diffusion::ForwardContext ctx(tape, &probe);
    const auto& l = fp.layer(layer);
    if (l.role == diffusion::LayerRole::time_embed || l.role == diffusion::LayerRole::embedding)
      fp.temporal_features(ctx, cb.t);
    else
      fp.forward(ctx, tape.leaf(cb.x), cb.t);
    d.t.insert(d.t.end(), cb.t.begin(), cb.t.end());
  }
  d.input = numerics::stack(probe.seen, true);
  return d;
}

Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& idx) {
  std::vector<Tensor> rows;
  rows.reserve(idx.size());
  for (std::size_t i : idx) rows.push_back(numerics::slice_rows(src, i, i + 1));
  return numerics::stack(rows, true);
}

std::vector<int> gather(const std::vector<int>& src, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (std::size_t i : idx) out.push_back(src[i]);
  return out;
}

}  // namespace

ReconResult reconstruct_tiar(const diffusion::ModelGraph& fp, QuantModel& qm, const diffusion::NoiseSchedule& sched,
                             const ReconConfig& cfg) {
  if (qm.partition().tib.empty()) throw ConfigError("reconstruct_tiar: model has no temporal information block");
  if (qm.T() != sched.T) throw ConfigError("reconstruct_tiar: schedule T differs from the quantized model");
  std::vector<int> ts(static_cast<std::size_t>(sched.T));
  for (int t = 1; t <= sched.T; ++t) ts[static_cast<std::size_t>(t - 1)] = t;
  const std::vector<Tensor> targets = fp_temporal_features(fp, ts);

  Unit u;
  u.layers = qm.partition().tib;
  u.n_samples = ts.size();
  u.batch = cfg.tiar_batch;
  u.eval_every = 1;
  u.eval_chunk = ts.size();
  u.loss = [&](diffusion::ForwardContext& ctx, const std::vector<std::size_t>& idx) {
    std::vector<Tensor> fp_rows;
    for (const Tensor& f : targets) fp_rows.push_back(gather_rows(f, idx));
    const auto t = gather(ts, idx);
    return tiar_loss_traced(ctx, qm, t, fp_rows);
  };
  ReconResult res = optimize(qm, u, cfg);
  res.block_losses["tib"] = res.final_loss;
  return res;
}

ReconResult reconstruct_block(const diffusion::ModelGraph& fp, QuantModel& qm, std::size_t block,
                              const calib::CalibrationSet& calib, const ReconConfig& cfg) {
  if (block >= fp.n_blocks()) throw RangeError("block index " + std::to_string(block) + " out of range");
  if (calib.size() == 0) throw ConfigError("reconstruct_block: empty calibration set");
  std::vector<Tensor> ins, outs;
  std::vector<int> ts;
  constexpr std::size_t kChunk = 64;
  for (std::size_t b = 0; b < calib.size(); b += kChunk) {
    const BlockIO io = block_io(fp, block, calib.range(b, std::min(b + kChunk, calib.size())));
    ins.push_back(io.input);
    outs.push_back(io.output);
    ts.insert(ts.end(), io.t.begin(), io.t.end());
  }
  const Tensor input = numerics::stack(ins, true), target = numerics::stack(outs, true);
  const bool timed = fp.config().time_conditioning;
  const std::string emb = timed ? fp.embedding_layer_name(block) : std::string();

  Unit u;
  for (const auto& l : fp.block_layer_names(block))
    if (!(cfg.freeze_embedding && l == emb)) u.layers.push_back(l);
  u.n_samples = calib.size();
  u.batch = cfg.batch;
  u.eval_every = cfg.eval_every;
  u.loss = [&](diffusion::ForwardContext& ctx, const std::vector<std::size_t>& idx) {
    const auto t = gather(ts, idx);
    const Tensor h = timed ? quant_time_embedding(qm, t) : Tensor();
    return block_loss_traced(ctx, qm, block, gather_rows(input, idx), h, gather_rows(target, idx), t);
  };
  ReconResult res = optimize(qm, u, cfg);
  res.block_losses["blocks." + std::to_string(block)] = res.final_loss;
  return res;
}

ReconResult reconstruct_layer(const diffusion::ModelGraph& fp, QuantModel& qm, const std::string& layer,
                              const calib::CalibrationSet& calib, const ReconConfig& cfg) {
  const diffusion::Layer& l = fp.layer(layer);
  if (!l.quantizable()) throw ConfigError("layer '" + layer + "' is kept in full precision");
  if (calib.size() == 0) throw ConfigError("reconstruct_layer: empty calibration set");
  const LayerData d = collect_layer_inputs(fp, layer, calib);
  const Tensor target = l.kind == diffusion::LayerKind::linear ? k::linear(d.input, l.weight, l.bias)
                                                               : k::conv2d(d.input, l.weight, l.bias);
  Unit u;
  u.layers = {layer};
  u.n_samples = d.input.dim(0);
  u.batch = cfg.batch;
  u.eval_every = cfg.eval_every;
  u.loss = [&](diffusion::ForwardContext& ctx, const std::vector<std::size_t>& idx) {
    Var x = ctx.tape.leaf(gather_rows(d.input, idx));
    Var w = ctx.hooks->weight(l, ctx.tape.leaf(l.weight));
    Var b = ctx.tape.leaf(l.bias);
    Var y = l.kind == diffusion::LayerKind::linear ? ops::linear(x, w, b) : ops::conv2d(x, w, b);
    return ops::scale(ops::sum_squares(ops::sub(y, ctx.tape.leaf(gather_rows(target, idx)))),
                      1.0 / static_cast<double>(idx.size()));
  };
  ReconResult res = optimize(qm, u, cfg);
  res.block_losses[layer] = res.final_loss;
  return res;
}

}  // namespace diffq::recon
