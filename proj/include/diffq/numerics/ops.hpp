// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "diffq/numerics/tape.hpp"

// Traced ops. Each records one node on the tape that owns its inputs.
namespace diffq::numerics {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var matmul(Var a, Var b);
Var linear(Var x, Var w, Var b);
Var conv2d(Var x, Var w, Var b);
Var silu(Var x);
Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps = 1e-5);
Var broadcast_add_spatial(Var x, Var e);
Var avg_pool2(Var x);
Var upsample2(Var x);
Var reshape(Var x, Shape shape);
Var mean(Var x);
Var sum_squares(Var x);
Var cosine_similarity(Var a, Var b);

}  // namespace diffq::numerics
