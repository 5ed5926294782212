// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "diffq/numerics/tensor.hpp"

namespace diffq::numerics {

// Adam with bias correction over a fixed list of parameter tensors.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const noexcept { return lr_; }
  void set_lr(double lr) noexcept { lr_ = lr; }

  // params[i] -= update(grads[i]). The moment buffers are created on the first
  // call and sized from it; later calls must pass the same shapes.
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace diffq::numerics
