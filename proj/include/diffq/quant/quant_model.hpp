// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "diffq/diffusion/checkpoint.hpp"
#include "diffq/diffusion/model.hpp"
#include "diffq/diffusion/sampler.hpp"
#include "diffq/quant/quant_params.hpp"
#include "diffq/recon/partition.hpp"

namespace diffq::quant {

using diffusion::Layer;
using diffusion::ModelGraph;

// Bit width that switches a quantizer family off.
inline constexpr int kFullPrecisionBits = 32;

struct WeightQuantizer {
  std::vector<QuantParams> channels;  // one per output channel
  Tensor rounding;                    // rounding variables V, weight-shaped
  bool enabled = false;
};

struct ActQuantizer {
  bool time_indexed = false;
  QuantParams single;
  TimeIndexedQuantParams per_t;
  bool calibrated = false;
  bool enabled = false;
};

// A model copy with one weight and one activation quantizer per quantizable
// layer. Activation quantizers act on the layer input.
class QuantModel {
 public:
  QuantModel(ModelGraph base, recon::BlockPartition partition, int wbits, int abits, int T);

  const ModelGraph& base() const noexcept { return base_; }
  const recon::BlockPartition& partition() const noexcept { return partition_; }
  int wbits() const noexcept { return wbits_; }
  int abits() const noexcept { return abits_; }
  int T() const noexcept { return T_; }
  const std::vector<std::string>& layer_names() const noexcept { return names_; }

  WeightQuantizer& weight_quantizer(const std::string& layer);
  const WeightQuantizer& weight_quantizer(const std::string& layer) const;
  ActQuantizer& act_quantizer(const std::string& layer);
  const ActQuantizer& act_quantizer(const std::string& layer) const;

  // Enables every calibrated activation quantizer (no-op when abits = 32).
  void enable_activation_quant(bool on);
  void enable_weight_quant(bool on);
  std::size_t enabled_act_quantizers() const;

  // Weight under hard rounding, or the FP weight if its quantizer is off.
  Tensor effective_weight(const std::string& layer) const;

  Tensor predict(const Tensor& x, std::span<const int> t) const;
  diffusion::EpsModel eps_model() const;
  // Values of {h(t), g_1, ..., g_n}.
  std::vector<Tensor> temporal_features(std::span<const int> t) const;

 private:
  ModelGraph base_;
  recon::BlockPartition partition_;
  int wbits_, abits_, T_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, WeightQuantizer> weights_;
  std::unordered_map<std::string, ActQuantizer> acts_;
};

// Channel-wise weight params from per-channel min-max, rounding variables at
// nearest rounding, activation quantizers installed but disabled. TIB layers
// get time-indexed activation params.
QuantModel wrap_model(const ModelGraph& model, int wbits, int abits, const recon::BlockPartition& partition, int T);

// Routes a ModelGraph forward through a QuantModel's quantizers.
class QuantHooks : public diffusion::LayerHooks {
 public:
  explicit QuantHooks(const QuantModel& qm) : qm_(qm) {}

  // Layers whose rounding variables become tape leaves, recorded in
  // rounding_leaves; `soft` selects the relaxation over hard rounding.
  std::unordered_set<std::string> trainable;
  bool soft = true;
  std::unordered_map<std::string, numerics::Var> rounding_leaves;
  // Sees each quantizable layer input before its activation quantizer.
  std::function<void(const Layer&, const Tensor&, std::span<const int>)> observer;

  numerics::Var weight(const Layer& layer, numerics::Var w) override;
  numerics::Var activation(const Layer& layer, numerics::Var x, std::span<const int> t) override;

 private:
  const QuantModel& qm_;
};

struct OverheadReport {
  std::size_t tib_sites = 0;     // time-indexed activation quantizers
  std::size_t extra_params = 0;  // (s_t, z_t) entries beyond one shared pair per site
  std::size_t model_params = 0;
  double fraction = 0.0;
};

OverheadReport storage_overhead(const QuantModel& qm);

diffusion::Checkpoint quant_checkpoint(const QuantModel& qm);
// `base` must be the full-precision model the checkpoint was produced from.
QuantModel quant_from_checkpoint(const ModelGraph& base, const diffusion::Checkpoint& ckpt);

}  // namespace diffq::quant
