// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/calib/range_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "diffq/errors.hpp"
#include "diffq/quant/quant_params.hpp"

namespace diffq::calib {

RangeMethod parse_range_method(std::string_view name) {
  if (name == "minmax") return RangeMethod::minmax;
  if (name == "percentile") return RangeMethod::percentile;
  if (name == "mse") return RangeMethod::mse;
  if (name == "kl") return RangeMethod::kl;
  throw ConfigError("unknown calibration method '" + std::string(name) + "' (expected minmax, percentile, mse or kl)");
}

std::string_view to_string(RangeMethod m) {
  switch (m) {
    case RangeMethod::minmax: return "minmax";
    case RangeMethod::percentile: return "percentile";
    case RangeMethod::mse: return "mse";
    case RangeMethod::kl: return "kl";
  }
  return "unknown";
}

void RangeOptions::validate() const {
  if (!(percentile > 0.0 && percentile <= 1.0)) throw ConfigError("calib.percentile must lie in (0, 1]");
  if (mse_grid == 0) throw ConfigError("calib.mse_grid must be positive");
  if (bits < 2 || bits > 16) throw ConfigError("calibration bit width must lie in [2, 16]");
  if (kl_bins < (std::size_t{1} << (bits - 1))) throw ConfigError("calib.kl_bins must be at least 2^(bits-1)");
}

namespace {

double clip_mse(std::span<const double> v, double lo, double hi, int bits) {
  const quant::QuantParams qp = quant::compute_qparams(lo, hi, bits);
  double err = 0.0;
  for (double x : v) {
    const double d = x - quant::fake_quant(x, qp);
    err += d * d;
  }
  return err;
}

// Threshold on |v| minimizing KL(P || Q), where P is the clipped reference
// histogram and Q its requantization to 2^(bits-1) bins expanded back over
// the non-empty source bins.
double kl_threshold(std::span<const double> v, double amax, std::size_t bins, int bits) {
  const double width = amax / static_cast<double>(bins);
  std::vector<double> hist(bins, 0.0);
  for (double x : v) {
    auto b = static_cast<std::size_t>(std::abs(x) / width);
    hist[std::min(b, bins - 1)] += 1.0;
  }
  const std::size_t nq = std::size_t{1} << (bits - 1);
  std::vector<double> p(bins), q(bins);
  std::size_t best = bins;
  double best_kl = std::numeric_limits<double>::infinity();
  double tail = 0.0;
  for (std::size_t k = nq; k < bins; ++k) tail += hist[k];

  for (std::size_t i = nq; i <= bins; ++i) {
    std::copy(hist.begin(), hist.begin() + static_cast<std::ptrdiff_t>(i), p.begin());
    p[i - 1] += tail;
    if (i < bins) tail -= hist[i];

    for (std::size_t j = 0; j < nq; ++j) {
      const std::size_t start = j * i / nq, end = (j + 1) * i / nq;
      double sum = 0.0;
      std::size_t nonzero = 0;
      for (std::size_t k = start; k < end; ++k) {
        sum += hist[k];
        nonzero += hist[k] != 0.0;
      }
      for (std::size_t k = start; k < end; ++k) q[k] = (hist[k] != 0.0) ? sum / static_cast<double>(nonzero) : 0.0;
    }
    double psum = 0.0, qsum = 0.0;
    for (std::size_t k = 0; k < i; ++k) {
      psum += p[k];
      qsum += q[k];
    }
    if (psum == 0.0 || qsum == 0.0) continue;
    constexpr double kEps = 1e-10;
    double kl = 0.0;
    for (std::size_t k = 0; k < i; ++k) {
      if (p[k] == 0.0) continue;
      const double pk = p[k] / psum;
      const double qk = std::max(q[k] / qsum, kEps);
      kl += pk * std::log(pk / qk);
    }
    if (kl < best_kl) {
      best_kl = kl;
      best = i;
    }
  }
  return (static_cast<double>(best) + 0.5) * width;
}

}  // namespace

RangeEstimate estimate_range(std::span<const double> values, RangeMethod method, const RangeOptions& options) {
  if (values.empty()) throw NumericError("estimate_range: no samples");
  options.validate();
  RangeEstimate est;
  est.method = method;
  est.sample_count = values.size();
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn, hi = *mx;
  const double amax = std::max(std::abs(lo), std::abs(hi));
  if (amax == 0.0) {
    est.degenerate = true;
    return est;
  }
  auto clip_to = [&](double c) {
    est.min = std::max(lo, -c);
    est.max = std::min(hi, c);
  };

  switch (method) {
    case RangeMethod::minmax:
      est.min = lo;
      est.max = hi;
      break;
    case RangeMethod::percentile: {
      std::vector<double> mags(values.size());
      std::transform(values.begin(), values.end(), mags.begin(), [](double x) { return std::abs(x); });
      const double pos = std::ceil(options.percentile * static_cast<double>(mags.size()));
      const auto k = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(mags.size()))) - 1;
      std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
      clip_to(mags[k]);
      break;
    }
    case RangeMethod::mse: {
      double best_err = std::numeric_limits<double>::infinity();
      double best_c = amax;
      for (std::size_t k = 1; k <= options.mse_grid; ++k) {
        const double c = static_cast<double>(k) / static_cast<double>(options.mse_grid) * amax;
        const double err = clip_mse(values, std::max(lo, -c), std::min(hi, c), options.bits);
        if (err < best_err) {
          best_err = err;
          best_c = c;
        }
      }
      clip_to(best_c);
      break;
    }
    case RangeMethod::kl:
      clip_to(std::min(kl_threshold(values, amax, options.kl_bins, options.bits), amax));
      break;
  }
  return est;
}

RangeEstimate estimate_range(std::span<const numerics::Tensor> samples, RangeMethod method,
                             const RangeOptions& options) {
  std::vector<double> flat;
  for (const auto& t : samples) flat.insert(flat.end(), t.data().begin(), t.data().end());
  return estimate_range(std::span<const double>(flat), method, options);
}

RangeEstimate ema_update(const RangeEstimate& current, double batch_min, double batch_max, double decay) {
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("EMA decay must lie in (0, 1)");
  RangeEstimate out = current;
  out.min = decay * current.min + (1.0 - decay) * batch_min;
  out.max = decay * current.max + (1.0 - decay) * batch_max;
  out.degenerate = current.degenerate && batch_min == 0.0 && batch_max == 0.0;
  return out;
}

}  // namespace diffq::calib
