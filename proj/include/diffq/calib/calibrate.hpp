// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "diffq/calib/calibration_set.hpp"
#include "diffq/calib/range_estimator.hpp"
#include "diffq/quant/quant_model.hpp"

namespace diffq::calib {

struct CalibConfig {
  RangeMethod method = RangeMethod::minmax;
  RangeOptions options;
  double ema_decay = 0.9;
  std::size_t batch = 16;
};

// Inputs of every TIB layer at each t in 1..T, observed with quantized
// weights and activation quantizers off: samples[layer][t-1].
std::map<std::string, std::vector<Tensor>> observe_tib(const quant::QuantModel& qm);

// Fills per_t[t] of every TIB activation quantizer from the range at t alone,
// enumerating the whole timestep set. Enables calibrated quantizers after.
void calibrate_fsc(quant::QuantModel& qm, const CalibConfig& cfg);

// Streams the calibration set in order, in batches of cfg.batch, and tracks an
// EMA of each layer's per-batch range estimate. Covers the non-TIB layers, and
// the TIB layers too when `include_tib` is set (sharing one parameter set
// across all t). Enables calibrated quantizers after.
void calibrate_standard(quant::QuantModel& qm, const CalibrationSet& calib, const CalibConfig& cfg,
                        bool include_tib);

struct RangeRow {
  std::string layer;
  int t = 0;
  double min = 0.0;
  double max = 0.0;
};

// Observed input range of every TIB layer at every t, sorted by layer then t.
// Requires calibrated TIB quantizers.
std::vector<RangeRow> range_report(const quant::QuantModel& qm);

}  // namespace diffq::calib
