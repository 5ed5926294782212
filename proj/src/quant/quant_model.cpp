// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/quant/quant_model.hpp"

#include <algorithm>
#include <set>

#include "diffq/errors.hpp"
#include "diffq/quant/quant_ops.hpp"

namespace diffq::quant {

using numerics::Var;

namespace {

void check_bits(int bits, const char* what) {
  if (bits != kFullPrecisionBits && (bits < 2 || bits > 16))
    throw ConfigError(std::string(what) + " must be 32 or lie in [2, 16], got " + std::to_string(bits));
}

}  // namespace

QuantModel::QuantModel(ModelGraph base, recon::BlockPartition partition, int wbits, int abits, int T)
    : base_(std::move(base)), partition_(std::move(partition)), wbits_(wbits), abits_(abits), T_(T) {
  check_bits(wbits, "wbits");
  check_bits(abits, "abits");
  if (T < 1) throw ConfigError("T must be positive");
  names_ = base_.quantizable_layer_names();
  auto listed = partition_.all_layers();
  std::set<std::string> a(names_.begin(), names_.end()), b(listed.begin(), listed.end());
  if (a != b || listed.size() != b.size())
    throw ArchitectureMismatch("partition does not cover exactly the model's quantizable layers");
  for (const auto& name : names_) {
    weights_[name];
    acts_[name].time_indexed = partition_.in_tib(name);
  }
}

WeightQuantizer& QuantModel::weight_quantizer(const std::string& layer) {
  auto it = weights_.find(layer);
  if (it == weights_.end()) throw RangeError("no weight quantizer for layer '" + layer + "'");
  return it->second;
}

const WeightQuantizer& QuantModel::weight_quantizer(const std::string& layer) const {
  return const_cast<QuantModel*>(this)->weight_quantizer(layer);
}

ActQuantizer& QuantModel::act_quantizer(const std::string& layer) {
  auto it = acts_.find(layer);
  if (it == acts_.end()) throw RangeError("no activation quantizer for layer '" + layer + "'");
  return it->second;
}

const ActQuantizer& QuantModel::act_quantizer(const std::string& layer) const {
  return const_cast<QuantModel*>(this)->act_quantizer(layer);
}

void QuantModel::enable_activation_quant(bool on) {
  for (auto& [name, aq] : acts_) aq.enabled = on && aq.calibrated && abits_ != kFullPrecisionBits;
}

void QuantModel::enable_weight_quant(bool on) {
  for (auto& [name, wq] : weights_) wq.enabled = on && wbits_ != kFullPrecisionBits;
}

std::size_t QuantModel::enabled_act_quantizers() const {
  return static_cast<std::size_t>(std::count_if(acts_.begin(), acts_.end(), [](const auto& kv) { return kv.second.enabled; }));
}

Tensor QuantModel::effective_weight(const std::string& layer) const {
  const WeightQuantizer& wq = weight_quantizer(layer);
  const Tensor& w = base_.layer(layer).weight;
  return wq.enabled ? rounded_weight(w, wq.rounding, wq.channels, false) : w;
}

Tensor QuantModel::predict(const Tensor& x, std::span<const int> t) const {
  numerics::Tape tape(false);
  QuantHooks hooks(*this);
  diffusion::ForwardContext ctx(tape, &hooks);
  return base_.forward(ctx, tape.leaf(x), t).value();
}

diffusion::EpsModel QuantModel::eps_model() const {
  return [this](const Tensor& x, std::span<const int> t) { return predict(x, t); };
}

std::vector<Tensor> QuantModel::temporal_features(std::span<const int> t) const {
  numerics::Tape tape(false);
  QuantHooks hooks(*this);
  diffusion::ForwardContext ctx(tape, &hooks);
  std::vector<Tensor> out;
  for (const Var& v : base_.temporal_features(ctx, t)) out.push_back(v.value());
  return out;
}

QuantModel wrap_model(const ModelGraph& model, int wbits, int abits, const recon::BlockPartition& partition, int T) {
  QuantModel qm(model, partition, wbits, abits, T);
  if (wbits == kFullPrecisionBits) return qm;
  for (const auto& name : qm.layer_names()) {
    const Tensor& w = model.layer(name).weight;
    WeightQuantizer& wq = qm.weight_quantizer(name);
    const std::size_t per = w.size() / w.dim(0);
    const auto d = w.data();
    for (std::size_t c = 0; c < w.dim(0); ++c) {
      const auto [lo, hi] = std::minmax_element(d.begin() + static_cast<std::ptrdiff_t>(c * per),
                                                d.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
      wq.channels.push_back(compute_qparams(*lo, *hi, wbits));
    }
    wq.rounding = init_rounding(w, wq.channels);
    wq.enabled = true;
  }
  return qm;
}

Var QuantHooks::weight(const Layer& layer, Var w) {
  if (!layer.quantizable()) return w;
  const WeightQuantizer& wq = qm_.weight_quantizer(layer.name);
  if (!wq.enabled) return w;
  if (trainable.count(layer.name)) {
    Var v = w.tape().leaf(wq.rounding);
    rounding_leaves[layer.name] = v;
    return adaround_op(v, layer.weight, wq.channels, soft);
  }
  return w.tape().leaf(rounded_weight(layer.weight, wq.rounding, wq.channels, false));
}

Var QuantHooks::activation(const Layer& layer, Var x, std::span<const int> t) {
  if (!layer.quantizable()) return x;
  if (observer) observer(layer, x.value(), t);
  const ActQuantizer& aq = qm_.act_quantizer(layer.name);
  if (!aq.enabled) return x;
  std::vector<QuantParams> rows;
  if (aq.time_indexed) {
    if (t.size() != x.shape()[0]) throw ShapeError("activation quantizer: need one timestep per batch row");
    for (int ti : t) rows.push_back(aq.per_t.at(ti));
  } else {
    rows.push_back(aq.single);
  }
  return fake_quant_op(x, std::move(rows));
}

OverheadReport storage_overhead(const QuantModel& qm) {
  OverheadReport r;
  for (const auto& name : qm.layer_names())
    if (qm.act_quantizer(name).time_indexed) ++r.tib_sites;
  if (qm.abits() == kFullPrecisionBits) r.tib_sites = 0;
  r.extra_params = r.tib_sites * 2 * static_cast<std::size_t>(qm.T() - 1);
  r.model_params = qm.base().parameter_count();
  r.fraction = static_cast<double>(r.extra_params) / static_cast<double>(r.model_params);
  return r;
}

namespace {

Tensor pack(const QuantParams& qp) { return Tensor({3}, std::vector<double>{qp.s, double(qp.z), qp.degenerate ? 1.0 : 0.0}); }

QuantParams unpack(const Tensor& t, int bits) {
  if (t.size() != 3) throw IoError("quantizer entry must hold 3 values");
  QuantParams qp;
  qp.s = t[0];
  qp.z = static_cast<int>(t[1]);
  qp.bits = bits;
  qp.degenerate = t[2] != 0.0;
  qp.validate();
  return qp;
}

int int_attr(const diffusion::Checkpoint& ck, const std::string& key) {
  try {
    return std::stoi(ck.attr(key));
  } catch (const std::invalid_argument&) {
    throw IoError("checkpoint attribute " + key + " is not an integer");
  }
}

}  // namespace

diffusion::Checkpoint quant_checkpoint(const QuantModel& qm) {
  diffusion::Checkpoint ck;
  ck.attrs["kind"] = "quant";
  ck.attrs["quant.wbits"] = std::to_string(qm.wbits());
  ck.attrs["quant.abits"] = std::to_string(qm.abits());
  ck.attrs["quant.T"] = std::to_string(qm.T());
  for (const auto& name : qm.layer_names()) {
    const WeightQuantizer& wq = qm.weight_quantizer(name);
    ck.attrs["weight." + name + ".enabled"] = wq.enabled ? "1" : "0";
    if (!wq.channels.empty()) {
      std::vector<double> s, z;
      for (const auto& qp : wq.channels) {
        s.push_back(qp.s);
        z.push_back(qp.z);
      }
      const std::size_t c = s.size();
      ck.put(name + "/weight/scale", Tensor({c}, std::move(s)));
      ck.put(name + "/weight/zero_point", Tensor({c}, std::move(z)));
      ck.put(name + "/weight/rounding", wq.rounding);
    }
    const ActQuantizer& aq = qm.act_quantizer(name);
    ck.attrs["act." + name + ".calibrated"] = aq.calibrated ? "1" : "0";
    ck.attrs["act." + name + ".enabled"] = aq.enabled ? "1" : "0";
    if (!aq.calibrated) continue;
    if (aq.time_indexed)
      for (int t = 1; t <= aq.per_t.T(); ++t) ck.put(name + "/act/" + std::to_string(t), pack(aq.per_t.at(t)));
    else
      ck.put(name + "/act", pack(aq.single));
  }
  return ck;
}

QuantModel quant_from_checkpoint(const ModelGraph& base, const diffusion::Checkpoint& ckpt) {
  if (ckpt.attr("kind") != "quant") throw ArchitectureMismatch("checkpoint does not hold quantization parameters");
  const int wbits = int_attr(ckpt, "quant.wbits"), abits = int_attr(ckpt, "quant.abits"), T = int_attr(ckpt, "quant.T");
  QuantModel qm(base, recon::partition_blocks(base), wbits, abits, T);
  for (const auto& name : qm.layer_names()) {
    WeightQuantizer& wq = qm.weight_quantizer(name);
    wq.enabled = ckpt.attr("weight." + name + ".enabled") == "1";
    if (const Tensor* s = ckpt.find(name + "/weight/scale")) {
      const Tensor& z = ckpt.tensor(name + "/weight/zero_point");
      const Tensor& w = base.layer(name).weight;
      if (s->size() != w.dim(0) || z.size() != w.dim(0))
        throw ArchitectureMismatch("layer '" + name + "' channel count differs from the checkpoint");
      for (std::size_t c = 0; c < s->size(); ++c) {
        QuantParams qp;
        qp.s = (*s)[c];
        qp.z = static_cast<int>(z[c]);
        qp.bits = wbits;
        qp.validate();
        wq.channels.push_back(qp);
      }
      wq.rounding = ckpt.tensor(name + "/weight/rounding");
      if (wq.rounding.shape() != w.shape())
        throw ArchitectureMismatch("layer '" + name + "' rounding variables have the wrong shape");
    } else if (wq.enabled) {
      throw ArchitectureMismatch("layer '" + name + "' weight quantizer enabled without parameters");
    }
    ActQuantizer& aq = qm.act_quantizer(name);
    aq.calibrated = ckpt.attr("act." + name + ".calibrated") == "1";
    aq.enabled = ckpt.attr("act." + name + ".enabled") == "1";
    if (!aq.calibrated) continue;
    if (aq.time_indexed) {
      aq.per_t.per_t.clear();
      for (int t = 1; t <= T; ++t) aq.per_t.per_t.push_back(unpack(ckpt.tensor(name + "/act/" + std::to_string(t)), abits));
    } else {
      aq.single = unpack(ckpt.tensor(name + "/act"), abits);
    }
  }
  return qm;
}

}  // namespace diffq::quant
