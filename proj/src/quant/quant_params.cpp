// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/quant/quant_params.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffq/errors.hpp"

namespace diffq::quant {

double round_half_away(double v) noexcept { return std::round(v); }

void QuantParams::validate() const {
  if (bits < 2 || bits > 30) throw ConfigError("quantizer bit width must lie in [2, 30], got " + std::to_string(bits));
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("quantizer step size must be positive and finite");
  if (z < 0 || z > qmax()) throw NumericError("zero point " + std::to_string(z) + " outside [0, qmax]");
}

QuantParams compute_qparams(double lo, double hi, int bits) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw NumericError("compute_qparams: non-finite range");
  if (lo > hi) throw RangeError("compute_qparams: min exceeds max");
  QuantParams qp;
  qp.bits = bits;
  if (bits < 2 || bits > 30) throw ConfigError("quantizer bit width must lie in [2, 30], got " + std::to_string(bits));
  const double a = std::min(lo, 0.0), b = std::max(hi, 0.0);
  if (a == b) {
    qp.degenerate = true;
    return qp;
  }
  qp.s = (b - a) / qp.qmax();
  qp.z = static_cast<int>(std::clamp(round_half_away(-a / qp.s), 0.0, static_cast<double>(qp.qmax())));
  return qp;
}

double fake_quant(double x, const QuantParams& qp) noexcept {
  const double k = std::clamp(round_half_away(x / qp.s) + qp.z, 0.0, static_cast<double>(qp.qmax()));
  return (k - qp.z) * qp.s;
}

Tensor fake_quant(const Tensor& x, const QuantParams& qp) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  const auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fake_quant(in[i], qp);
  return out;
}

Tensor fake_quant_channels(const Tensor& w, std::span<const QuantParams> params) {
  if (w.rank() == 0 || params.size() != w.dim(0))
    throw ShapeError("fake_quant_channels: need one parameter set per output channel");
  Tensor out(w.shape());
  auto o = out.mutable_data();
  const auto in = w.data();
  const std::size_t per = w.size() / w.dim(0);
  for (std::size_t c = 0; c < params.size(); ++c)
    for (std::size_t i = c * per; i < (c + 1) * per; ++i) o[i] = fake_quant(in[i], params[c]);
  return out;
}

const QuantParams& TimeIndexedQuantParams::at(int t) const {
  if (t < 1 || t > T()) throw RangeError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T()) + "]");
  return per_t[static_cast<std::size_t>(t - 1)];
}

QuantParams& TimeIndexedQuantParams::at(int t) {
  return const_cast<QuantParams&>(static_cast<const TimeIndexedQuantParams&>(*this).at(t));
}

void TimeIndexedQuantParams::validate() const {
  if (per_t.empty()) throw NumericError("time-indexed params are empty");
  for (const auto& qp : per_t) {
    qp.validate();
    if (qp.bits != per_t.front().bits) throw NumericError("time-indexed params disagree on bit width");
  }
}

TimeIndexedQuantParams uniform_time_params(const QuantParams& qp, int T) {
  if (T < 1) throw RangeError("T must be positive");
  return {std::vector<QuantParams>(static_cast<std::size_t>(T), qp)};
}

Tensor fsc_quant(const Tensor& x, int t, const TimeIndexedQuantParams& tq) { return fake_quant(x, tq.at(t)); }

}  // namespace diffq::quant
