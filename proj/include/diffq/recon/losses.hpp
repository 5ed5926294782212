// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "diffq/calib/calibration_set.hpp"
#include "diffq/quant/quant_model.hpp"

namespace diffq::recon {

using numerics::Tensor;
using numerics::Var;

// sum_i ||a_i - b_i||_F^2 / N for batch-major features sharing batch size N.
double feature_mismatch(std::span<const Tensor> a, std::span<const Tensor> b);

// Temporal features of the FP model for each t: {h, g_1, ..., g_n}.
std::vector<Tensor> fp_temporal_features(const diffusion::ModelGraph& fp, std::span<const int> t);

// Summed squared error of all n+1 temporal features, averaged over t_batch.
double tiar_loss(const diffusion::ModelGraph& fp, const quant::QuantModel& qm, std::span<const int> t_batch);

// Input and output of residual block `block` in the FP model.
struct BlockIO {
  Tensor input, output;
  std::vector<int> t;
};
BlockIO block_io(const diffusion::ModelGraph& fp, std::size_t block, const calib::CalibBatch& batch);

// ||f_i(x) - f^_i(x)||_F^2 / N with the FP block input x fed to both; the
// quantized block receives the quantized time embedding.
double block_loss(const diffusion::ModelGraph& fp, const quant::QuantModel& qm, std::size_t block,
                  const calib::CalibBatch& batch);

// Traced forms. `ctx` must route through QuantHooks on `qm`.
Var tiar_loss_traced(diffusion::ForwardContext& ctx, const quant::QuantModel& qm, std::span<const int> t,
                     std::span<const Tensor> fp_features);
Var block_loss_traced(diffusion::ForwardContext& ctx, const quant::QuantModel& qm, std::size_t block,
                      const Tensor& input, const Tensor& h, const Tensor& target, std::span<const int> t);

// Time embedding h(t) of the quantized model.
Tensor quant_time_embedding(const quant::QuantModel& qm, std::span<const int> t);

}  // namespace diffq::recon
