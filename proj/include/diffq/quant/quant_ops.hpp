// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "diffq/numerics/tape.hpp"
#include "diffq/quant/quant_params.hpp"

namespace diffq::quant {

using numerics::Var;

// Rectified sigmoid stretch bounds of the soft-rounding relaxation.
inline constexpr double kZeta = 1.1;
inline constexpr double kGamma = -0.1;

// h(V) = clamp(sigmoid(V) (zeta - gamma) + gamma, 0, 1)
double soft_rounding(double v) noexcept;
double soft_rounding_grad(double v) noexcept;

// Rounding variables whose soft value h(V) equals the fractional part of
// w / s, so the relaxation starts at the full-precision weight and the hard
// threshold V >= 0 reproduces nearest rounding (ties away from zero).
Tensor init_rounding(const Tensor& w, std::span<const QuantParams> channels);

// s_c (clamp(floor(w / s_c) + r + z_c, 0, qmax) - z_c) with r = h(V) when
// `soft` and r = [V >= 0] otherwise.
Tensor rounded_weight(const Tensor& w, const Tensor& v, std::span<const QuantParams> channels, bool soft);

// Traced fake quantization of activations; batch row r uses rows[r], or
// rows[0] for every row when a single set is given. Gradient is the
// saturating straight-through rule.
Var fake_quant_op(Var x, std::vector<QuantParams> rows);

// Traced weight built from rounding variables `v` (the only input).
Var adaround_op(Var v, Tensor w, std::vector<QuantParams> channels, bool soft);

// sum(1 - |2 h(V) - 1|^beta)
Var rounding_regularizer(Var v, double beta);

}  // namespace diffq::quant
