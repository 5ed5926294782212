// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "diffq/calib/calibration_set.hpp"
#include "diffq/diffusion/schedule.hpp"
#include "diffq/quant/quant_model.hpp"

namespace diffq::recon {

struct ReconConfig {
  std::size_t iterations = 2000;
  std::size_t batch = 8;        // calibration entries per block step
  std::size_t tiar_batch = 32;  // timesteps per TIAR step
  double lr_rounding = 1e-2;
  // Unused: activation scales come from calibration. Kept so configs can
  // carry the setting.
  double lr_actscale = 0.0;
  double anneal_start = 20.0;  // regularizer exponent at the end of warmup
  double anneal_end = 2.0;     // ... and at the last iteration
  double warmup = 0.2;         // fraction of iterations without regularizer
  double reg_weight = 0.01;
  bool freeze_embedding = false;
  std::size_t eval_every = 50;  // block and layer curves; TIAR records every step
  std::uint64_t seed = 0;

  void validate() const;
};

struct ReconResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  // Hard-rounded loss on the unit's full evaluation set: before the first
  // update, then at each recording point. final_loss is the last entry.
  std::vector<double> loss_curve;
  std::vector<std::size_t> curve_iterations;
  double wall_time = 0.0;
  std::map<std::string, double> block_losses;  // per-unit final losses
};

// Regularizer exponent at iteration `it` (0 during warmup).
double anneal_beta(const ReconConfig& cfg, std::size_t it);

// Optimizes the rounding variables of the TIB jointly against the temporal
// feature loss. Reads timesteps only, never sample data.
ReconResult reconstruct_tiar(const diffusion::ModelGraph& fp, quant::QuantModel& qm,
                             const diffusion::NoiseSchedule& sched, const ReconConfig& cfg);

// Block-wise reconstruction of residual block `block` with FP inputs. With
// cfg.freeze_embedding the block's embedding layer keeps its rounding.
ReconResult reconstruct_block(const diffusion::ModelGraph& fp, quant::QuantModel& qm, std::size_t block,
                              const calib::CalibrationSet& calib, const ReconConfig& cfg);

// Layer-wise reconstruction of one linear or conv layer with FP inputs drawn
// from the calibration set.
ReconResult reconstruct_layer(const diffusion::ModelGraph& fp, quant::QuantModel& qm, const std::string& layer,
                              const calib::CalibrationSet& calib, const ReconConfig& cfg);

}  // namespace diffq::recon
