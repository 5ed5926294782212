// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "diffq/numerics/tensor.hpp"

namespace diffq::quant {

using numerics::Tensor;

// Rounding rule for every quantizer and zero-point computation.
enum class RoundingMode { half_away_from_zero };
inline constexpr RoundingMode kRoundingMode = RoundingMode::half_away_from_zero;

double round_half_away(double v) noexcept;

// Affine grid {(k - z) s : k in [0, 2^b - 1]}.
struct QuantParams {
  double s = 1.0;
  int z = 0;
  int bits = 8;
  // Set by compute_qparams when the observed range was [0, 0].
  bool degenerate = false;

  int qmax() const noexcept { return (1 << bits) - 1; }
  double lo() const noexcept { return -z * s; }
  double hi() const noexcept { return (qmax() - z) * s; }
  void validate() const;
  bool operator==(const QuantParams& o) const noexcept { return s == o.s && z == o.z && bits == o.bits; }
};

// Asymmetric params covering [min(lo, 0), max(hi, 0)].
QuantParams compute_qparams(double lo, double hi, int bits);

double fake_quant(double x, const QuantParams& qp) noexcept;
Tensor fake_quant(const Tensor& x, const QuantParams& qp);
// Weight layout [out, ...]: row c uses params[c].
Tensor fake_quant_channels(const Tensor& w, std::span<const QuantParams> params);

// One parameter set per timestep; per_t[t-1] serves timestep t.
struct TimeIndexedQuantParams {
  std::vector<QuantParams> per_t;

  int T() const noexcept { return static_cast<int>(per_t.size()); }
  const QuantParams& at(int t) const;
  QuantParams& at(int t);
  void validate() const;
};

TimeIndexedQuantParams uniform_time_params(const QuantParams& qp, int T);

Tensor fsc_quant(const Tensor& x, int t, const TimeIndexedQuantParams& tq);

}  // namespace diffq::quant
