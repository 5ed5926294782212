// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "diffq/diffusion/model.hpp"

namespace diffq::diffusion {

// Named tensors plus string attributes. On disk: a UTF-8 manifest
//
//   diffq-checkpoint 1
//   attr <key> <value>
//   tensor <name> f64 <rank> <dims...> <offset> <nbytes>
//   payload <nbytes>
//
// followed by the little-endian IEEE-754 doubles of every tensor, row-major,
// at the recorded offsets from the start of the payload.
struct Checkpoint {
  std::map<std::string, std::string> attrs;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  const Tensor* find(const std::string& name) const;
  const std::string& attr(const std::string& key) const;
  void put(std::string name, Tensor value);
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint model_checkpoint(const ModelGraph& model, std::uint64_t init_seed);
// Rebuilds the architecture from the stored config and loads every parameter.
// Throws ArchitectureMismatch on missing, extra or misshapen tensors.
ModelGraph model_from_checkpoint(const Checkpoint& ckpt);
void load_parameters(ModelGraph& model, const Checkpoint& ckpt);

}  // namespace diffq::diffusion
