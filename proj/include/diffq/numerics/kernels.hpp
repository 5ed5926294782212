// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "diffq/numerics/tensor.hpp"

// Untraced forward and backward kernels. Layouts: images are NCHW, linear
// weights are [out, in], conv weights are [out, in, k, k] with odd k.
namespace diffq::numerics::kernels {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x [N,in], w [out,in], b [out] -> [N,out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
struct LinearGrads {
  Tensor dx, dw, db;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad, bool need_dx, bool need_dw,
                            bool need_db);

// Stride 1, zero "same" padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);
struct ConvGrads {
  Tensor dx, dw, db;
};
ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad, bool need_dx, bool need_dw,
                          bool need_db);

Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& grad);

// Normalizes each (sample, group) over its channels and spatial positions,
// then applies per-channel gamma/beta. Works for [N,C] and [N,C,H,W].
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t groups, double eps);
struct GroupNormGrads {
  Tensor dx, dgamma, dbeta;
};
GroupNormGrads group_norm_backward(const Tensor& x, const Tensor& gamma, std::size_t groups, double eps,
                                   const Tensor& grad);

// x [N,C,H,W] + e [N,C] broadcast over H,W.
Tensor broadcast_add_spatial(const Tensor& x, const Tensor& e);
Tensor spatial_sum(const Tensor& grad);

Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& x, const Tensor& grad);
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& x, const Tensor& grad);

double sum_squares(const Tensor& x);
double mean(const Tensor& x);
double dot(const Tensor& a, const Tensor& b);
// Cosine similarity of the flattened tensors; throws NumericError if either is
// the zero vector.
double cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace diffq::numerics::kernels
