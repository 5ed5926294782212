// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace diffq::numerics {

// Global arithmetic mode. Storage is always double; in f32 mode every op
// output (and every leaf placed on a tape) is rounded to the nearest float.
enum class Precision { f32, f64 };

Precision precision() noexcept;
void set_precision(Precision p) noexcept;

inline double narrow(double v, Precision p) noexcept {
  return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

}  // namespace diffq::numerics
