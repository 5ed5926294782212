// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/quant/quant_ops.hpp"

#include <algorithm>
#include <cmath>

#include "diffq/errors.hpp"

namespace diffq::quant {

using numerics::TensorRefs;
using Needs = std::vector<bool>;

namespace {

double sigmoid(double v) noexcept { return 1.0 / (1.0 + std::exp(-v)); }

const QuantParams& row_params(const std::vector<QuantParams>& rows, std::size_t r) {
  return rows.size() == 1 ? rows[0] : rows[r];
}

void check_rows(const Tensor& x, const std::vector<QuantParams>& rows) {
  if (rows.empty() || (rows.size() != 1 && rows.size() != x.dim(0)))
    throw ShapeError("fake_quant_op: need one parameter set or one per batch row");
}

void check_channels(const Tensor& w, std::span<const QuantParams> channels) {
  if (channels.size() != w.dim(0)) throw ShapeError("weight quantizer: need one parameter set per output channel");
}

}  // namespace

double soft_rounding(double v) noexcept { return std::clamp(sigmoid(v) * (kZeta - kGamma) + kGamma, 0.0, 1.0); }

double soft_rounding_grad(double v) noexcept {
  const double sg = sigmoid(v);
  const double raw = sg * (kZeta - kGamma) + kGamma;
  return (raw > 0.0 && raw < 1.0) ? (kZeta - kGamma) * sg * (1.0 - sg) : 0.0;
}

Tensor init_rounding(const Tensor& w, std::span<const QuantParams> channels) {
  check_channels(w, channels);
  Tensor v(w.shape());
  auto o = v.mutable_data();
  const auto in = w.data();
  const std::size_t per = w.size() / w.dim(0);
  for (std::size_t c = 0; c < channels.size(); ++c)
    for (std::size_t i = c * per; i < (c + 1) * per; ++i) {
      const double q = in[i] / channels[c].s;
      const double frac = q - std::floor(q);
      const double p = (frac - kGamma) / (kZeta - kGamma);
      double vi = std::log(p / (1.0 - p));
      // A negative tie must round away from zero, i.e. down.
      if (frac == 0.5 && q < 0.0) vi = -1e-9;
      o[i] = vi;
    }
  return v;
}

Tensor rounded_weight(const Tensor& w, const Tensor& v, std::span<const QuantParams> channels, bool soft) {
  check_channels(w, channels);
  if (v.shape() != w.shape()) throw ShapeError("rounding variables must match the weight shape");
  Tensor out(w.shape());
  auto o = out.mutable_data();
  const auto in = w.data();
  const std::size_t per = w.size() / w.dim(0);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const QuantParams& qp = channels[c];
    for (std::size_t i = c * per; i < (c + 1) * per; ++i) {
      const double r = soft ? soft_rounding(v[i]) : (v[i] >= 0.0 ? 1.0 : 0.0);
      const double k = std::clamp(std::floor(in[i] / qp.s) + r + qp.z, 0.0, static_cast<double>(qp.qmax()));
      o[i] = (k - qp.z) * qp.s;
    }
  }
  return out;
}

Var fake_quant_op(Var x, std::vector<QuantParams> rows) {
  check_rows(x.value(), rows);
  auto per_row = [](const Tensor& t) { return t.size() / t.dim(0); };
  auto forward = [rows, per_row](TensorRefs in) {
    const Tensor& t = *in[0];
    Tensor out(t.shape());
    auto o = out.mutable_data();
    const std::size_t per = per_row(t);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fake_quant(t[i], row_params(rows, i / per));
    return out;
  };
  auto surrogate = [rows, per_row](TensorRefs in) {
    const Tensor& t = *in[0];
    Tensor out(t.shape());
    auto o = out.mutable_data();
    const std::size_t per = per_row(t);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const QuantParams& qp = row_params(rows, i / per);
      o[i] = std::clamp(t[i], qp.lo(), qp.hi());
    }
    return out;
  };
  auto backward = [rows, per_row](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
    const Tensor& t = *in[0];
    Tensor dx(t.shape());
    auto d = dx.mutable_data();
    const std::size_t per = per_row(t);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const QuantParams& qp = row_params(rows, i / per);
      d[i] = (t[i] >= qp.lo() && t[i] <= qp.hi()) ? g[i] : 0.0;
    }
    return std::vector<Tensor>{dx};
  };
  auto near = [rows, per_row](TensorRefs in, double step) {
    const Tensor& t = *in[0];
    const std::size_t per = per_row(t);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const QuantParams& qp = row_params(rows, i / per);
      if (std::abs(t[i] - qp.lo()) <= step || std::abs(t[i] - qp.hi()) <= step) return true;
      if (t[i] < qp.lo() || t[i] > qp.hi()) continue;
      const double q = t[i] / qp.s;
      const double mid = std::floor(q) + 0.5;
      if (std::abs(q - mid) * qp.s <= step) return true;
    }
    return false;
  };
  return x.tape().record({"fake_quant", forward, backward, surrogate, near}, {x});
}

Var adaround_op(Var v, Tensor w, std::vector<QuantParams> channels, bool soft) {
  check_channels(w, channels);
  if (v.shape() != w.shape()) throw ShapeError("rounding variables must match the weight shape");
  auto forward = [w, channels, soft](TensorRefs in) { return rounded_weight(w, *in[0], channels, soft); };
  auto backward = [w, channels, soft](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
    const Tensor& vv = *in[0];
    Tensor dv(vv.shape());
    if (!soft) return std::vector<Tensor>{dv};
    auto d = dv.mutable_data();
    const std::size_t per = w.size() / w.dim(0);
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const QuantParams& qp = channels[c];
      for (std::size_t i = c * per; i < (c + 1) * per; ++i) {
        const double k = std::floor(w[i] / qp.s) + soft_rounding(vv[i]) + qp.z;
        if (k < 0.0 || k > qp.qmax()) continue;
        d[i] = g[i] * qp.s * soft_rounding_grad(vv[i]);
      }
    }
    return std::vector<Tensor>{dv};
  };
  return v.tape().record({"adaround", forward, backward}, {v});
}

Var rounding_regularizer(Var v, double beta) {
  auto forward = [beta](TensorRefs in) {
    double acc = 0.0;
    for (double x : in[0]->data()) acc += 1.0 - std::pow(std::abs(2.0 * soft_rounding(x) - 1.0), beta);
    return Tensor::scalar(acc);
  };
  auto backward = [beta](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
    const Tensor& vv = *in[0];
    Tensor dv(vv.shape());
    auto d = dv.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double u = 2.0 * soft_rounding(vv[i]) - 1.0;
      const double a = std::abs(u);
      if (a == 0.0) continue;
      const double sign = u > 0.0 ? 1.0 : -1.0;
      d[i] = -g.item() * beta * std::pow(a, beta - 1.0) * sign * 2.0 * soft_rounding_grad(vv[i]);
    }
    return std::vector<Tensor>{dv};
  };
  return v.tape().record({"rounding_regularizer", forward, backward}, {v});
}

}  // namespace diffq::quant
