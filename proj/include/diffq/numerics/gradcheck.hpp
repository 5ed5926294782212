// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "diffq/errors.hpp"
#include "diffq/numerics/tape.hpp"

namespace diffq::numerics {

// The evaluation point lies within one finite-difference step of a quantizer
// rounding or clamping discontinuity, so a central difference is meaningless.
class QuantizerBreakpointError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Compares reverse-mode gradients of `loss` w.r.t. the leaves in `wrt` with
// central differences (replaying the tape with quantizers replaced by their
// straight-through surrogates). Returns the maximum over all elements of
// |analytic - numeric| / (|analytic| + 1e-12). Requires f64 mode. The tape is
// restored to its original leaf values before returning.
double finite_diff_check(Tape& tape, Var loss, std::span<const Var> wrt, double step);

}  // namespace diffq::numerics
