// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "diffq/numerics/precision.hpp"

namespace diffq::numerics {

double finite_diff_check(Tape& tape, Var loss, std::span<const Var> wrt, double step) {
  if (precision() != Precision::f64) throw std::logic_error("finite_diff_check requires f64 precision mode");
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  for (const Var& w : wrt)
    if (!tape.is_leaf(w.id())) throw std::invalid_argument("finite_diff_check: wrt must be leaves");

  for (NodeId i = 0; i < tape.size(); ++i) {
    if (!tape.is_quantizer(i)) continue;
    std::vector<const Tensor*> in;
    for (NodeId id : tape.inputs(i)) in.push_back(&tape.value(id));
    const auto& spec = tape.spec(i);
    if (spec.near_breakpoint && spec.near_breakpoint(in, step))
      throw QuantizerBreakpointError("finite_diff_check: node " + std::to_string(i) + " (" + spec.name +
                                     ") has an input within step of a quantizer breakpoint");
  }

  tape.anchor_surrogates();
  const auto analytic = gradients(tape, loss, wrt);
  double worst = 0.0;
  for (const Var& w : wrt) {
    const Tensor base = tape.value(w.id());
    const Tensor& grad = analytic.at(w.id());
    for (std::size_t e = 0; e < base.size(); ++e) {
      auto eval_at = [&](double delta) {
        Tensor probe = base.clone();
        probe.mutable_data()[e] += delta;
        tape.set_leaf(w.id(), std::move(probe));
        tape.replay(Tape::Replay::surrogate);
        return tape.value(loss.id()).item();
      };
      const double numeric = (eval_at(step) - eval_at(-step)) / (2.0 * step);
      worst = std::max(worst, std::abs(grad[e] - numeric) / (std::abs(grad[e]) + 1e-12));
    }
    tape.set_leaf(w.id(), base);
  }
  tape.replay(Tape::Replay::exact);
  return worst;
}

}  // namespace diffq::numerics
