// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "diffq/numerics/tensor.hpp"

namespace diffq::calib {

enum class RangeMethod { minmax, percentile, mse, kl };

RangeMethod parse_range_method(std::string_view name);
std::string_view to_string(RangeMethod m);

struct RangeOptions {
  double percentile = 0.999;
  std::size_t mse_grid = 100;
  std::size_t kl_bins = 2048;
  int bits = 8;  // grid used by the mse and kl searches

  void validate() const;
};

struct RangeEstimate {
  double min = 0.0;
  double max = 0.0;
  RangeMethod method = RangeMethod::minmax;
  std::size_t sample_count = 0;
  bool degenerate = false;  // every observed value was zero
};

RangeEstimate estimate_range(std::span<const numerics::Tensor> samples, RangeMethod method,
                             const RangeOptions& options = {});
RangeEstimate estimate_range(std::span<const double> values, RangeMethod method, const RangeOptions& options = {});

// min <- decay min + (1 - decay) batch_min, likewise for max.
RangeEstimate ema_update(const RangeEstimate& current, double batch_min, double batch_max, double decay);

}  // namespace diffq::calib
