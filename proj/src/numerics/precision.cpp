// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/numerics/precision.hpp"

#include <atomic>

namespace diffq::numerics {

namespace {
std::atomic<Precision> g_precision{Precision::f32};
}

Precision precision() noexcept { return g_precision.load(std::memory_order_relaxed); }

void set_precision(Precision p) noexcept { g_precision.store(p, std::memory_order_relaxed); }

}  // namespace diffq::numerics
