// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diffq/calib/calibrate.hpp"
#include "diffq/recon/reconstruct.hpp"

namespace diffq::recon {

// baseline: layer-wise time embed, embedding layers optimized jointly with
// their block, shared activation params everywhere. tiar: TIB reconstructed
// against the temporal feature loss. fsc: per-timestep activation params in
// the TIB. tfmq: both.
enum class PipelineMode { baseline, tiar, fsc, tfmq };

PipelineMode parse_mode(std::string_view name);
std::string_view to_string(PipelineMode mode);
bool uses_tiar(PipelineMode mode) noexcept;
bool uses_fsc(PipelineMode mode) noexcept;

struct PipelineConfig {
  int wbits = 4;
  int abits = 8;
  ReconConfig recon;
  calib::CalibConfig calib;
};

struct PipelineResult {
  // Reconstruction units in the order they ran, e.g. "tib", "blocks.0".
  std::vector<std::pair<std::string, ReconResult>> units;
  double recon_seconds = 0.0;
  double calib_seconds = 0.0;
};

// Weight reconstruction only: partition, wrap, then the TIB, residual blocks
// and remaining layers in network order. Activation quantizers stay off.
quant::QuantModel reconstruct_weights(const diffusion::ModelGraph& fp, const diffusion::NoiseSchedule& sched,
                                      const calib::CalibrationSet& calib, const PipelineConfig& cfg, bool tiar,
                                      PipelineResult* result = nullptr);

// Activation calibration of an already reconstructed model.
void calibrate_activations(quant::QuantModel& qm, const calib::CalibrationSet& calib, const PipelineConfig& cfg,
                           bool fsc, PipelineResult* result = nullptr);

quant::QuantModel quantize_pipeline(const diffusion::ModelGraph& fp, const diffusion::NoiseSchedule& sched,
                                    const calib::CalibrationSet& calib, const PipelineConfig& cfg, PipelineMode mode,
                                    PipelineResult* result = nullptr);

}  // namespace diffq::recon
