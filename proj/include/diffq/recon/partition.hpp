// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "diffq/diffusion/model.hpp"

namespace diffq::recon {

// Split of the quantizable layers into the temporal information block (every
// layer fed only by the timestep), one group per residual block, and the rest.
struct BlockPartition {
  std::vector<std::string> tib;
  std::vector<std::vector<std::string>> res_blocks;
  std::vector<std::string> rest;
  // Set when the model has no time conditioning, so the TIB is empty.
  bool tib_empty = false;

  bool in_tib(const std::string& layer) const;
  std::vector<std::string> all_layers() const;
};

// Derives the TIB from graph reachability: a layer belongs to it when its
// input depends on the timestep code and not on the sample x. Throws
// ArchitectureMismatch if a time-embedding or embedding layer is reachable
// from x.
BlockPartition partition_blocks(const diffusion::ModelGraph& model);

}  // namespace diffq::recon
