// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/calib/calibrate.hpp"

#include <algorithm>
#include <unordered_map>

#include "diffq/errors.hpp"

namespace diffq::calib {

using quant::ActQuantizer;
using quant::QuantModel;

namespace {

void disable_act_quant(QuantModel& qm) {
  for (const auto& name : qm.layer_names()) qm.act_quantizer(name).enabled = false;
}

std::map<std::string, std::vector<Tensor>> observe_tib_off(const QuantModel& qm) {
  std::map<std::string, std::vector<Tensor>> out;
  for (const auto& name : qm.partition().tib) out[name].resize(static_cast<std::size_t>(qm.T()));
  quant::QuantHooks hooks(qm);
  int cur = 0;
  hooks.observer = [&](const quant::Layer& layer, const Tensor& x, std::span<const int>) {
    auto it = out.find(layer.name);
    if (it != out.end()) it->second[static_cast<std::size_t>(cur - 1)] = x;
  };
  for (cur = 1; cur <= qm.T(); ++cur) {
    numerics::Tape tape(false);
    diffusion::ForwardContext ctx(tape, &hooks);
    const int t[] = {cur};
    qm.base().temporal_features(ctx, t);
  }
  return out;
}

}  // namespace

std::map<std::string, std::vector<Tensor>> observe_tib(const QuantModel& qm) {
  QuantModel copy = qm;
  disable_act_quant(copy);
  return observe_tib_off(copy);
}

void calibrate_fsc(QuantModel& qm, const CalibConfig& cfg) {
  if (qm.partition().tib.empty()) throw ConfigError("calibrate_fsc: model has no temporal information block");
  cfg.options.validate();
  if (qm.abits() == quant::kFullPrecisionBits) return;
  RangeOptions opts = cfg.options;
  opts.bits = qm.abits();
  disable_act_quant(qm);
  for (const auto& [name, per_t] : observe_tib_off(qm)) {
    ActQuantizer& aq = qm.act_quantizer(name);
    aq.per_t.per_t.clear();
    for (const Tensor& x : per_t) {
      const RangeEstimate r = estimate_range(std::span<const double>(x.data()), cfg.method, opts);
      aq.per_t.per_t.push_back(quant::compute_qparams(r.min, r.max, qm.abits()));
    }
    aq.calibrated = true;
  }
  qm.enable_activation_quant(true);
}

void calibrate_standard(QuantModel& qm, const CalibrationSet& calib, const CalibConfig& cfg, bool include_tib) {
  if (calib.size() == 0) throw ConfigError("calibrate_standard: empty calibration set");
  if (cfg.batch == 0) throw ConfigError("calib.batch must be positive");
  cfg.options.validate();
  if (qm.abits() == quant::kFullPrecisionBits) return;
  RangeOptions opts = cfg.options;
  opts.bits = qm.abits();

  std::unordered_map<std::string, RangeEstimate> ema;
  std::unordered_map<std::string, std::vector<double>> batch_vals;
  quant::QuantHooks hooks(qm);
  hooks.observer = [&](const quant::Layer& layer, const Tensor& x, std::span<const int>) {
    if (!include_tib && qm.partition().in_tib(layer.name)) return;
    auto& v = batch_vals[layer.name];
    v.insert(v.end(), x.data().begin(), x.data().end());
  };

  disable_act_quant(qm);
  for (std::size_t begin = 0; begin < calib.size(); begin += cfg.batch) {
    const CalibBatch b = calib.range(begin, std::min(begin + cfg.batch, calib.size()));
    batch_vals.clear();
    numerics::Tape tape(false);
    diffusion::ForwardContext ctx(tape, &hooks);
    qm.base().forward(ctx, tape.leaf(b.x), b.t);
    for (auto& [name, vals] : batch_vals) {
      const RangeEstimate r = estimate_range(std::span<const double>(vals), cfg.method, opts);
      auto it = ema.find(name);
      if (it == ema.end())
        ema.emplace(name, r);
      else
        it->second = ema_update(it->second, r.min, r.max, cfg.ema_decay);
    }
  }

  for (const auto& [name, r] : ema) {
    ActQuantizer& aq = qm.act_quantizer(name);
    const quant::QuantParams qp = quant::compute_qparams(r.min, r.max, qm.abits());
    if (aq.time_indexed)
      aq.per_t = quant::uniform_time_params(qp, qm.T());
    else
      aq.single = qp;
    aq.calibrated = true;
  }
  qm.enable_activation_quant(true);
}

std::vector<RangeRow> range_report(const QuantModel& qm) {
  for (const auto& name : qm.partition().tib)
    if (!qm.act_quantizer(name).calibrated)
      throw std::logic_error("range_report: TIB activation quantizer '" + name + "' is not calibrated");
  std::vector<RangeRow> rows;
  for (const auto& [name, per_t] : observe_tib(qm))
    for (std::size_t i = 0; i < per_t.size(); ++i) rows.push_back({name, static_cast<int>(i + 1), per_t[i].min(), per_t[i].max()});
  return rows;
}

}  // namespace diffq::calib
