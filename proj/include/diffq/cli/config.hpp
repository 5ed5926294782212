// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffq/diag/diagnostics.hpp"
#include "diffq/diffusion/model.hpp"
#include "diffq/diffusion/trainer.hpp"
#include "diffq/numerics/precision.hpp"
#include "diffq/recon/pipeline.hpp"

namespace diffq::cli {

struct ScheduleConfig {
  int T = 100;
  double beta_start = 1e-3;
  double beta_end = 0.2;
};

struct DataConfig {
  std::size_t size = 2048;
  std::uint64_t seed = 7;
};

struct CalibSetConfig {
  std::size_t trajectories = 32;
  std::size_t steps = 20;
  diffusion::SamplerKind sampler = diffusion::SamplerKind::ddim;
  std::uint64_t seed = 11;
};

struct SampleConfig {
  std::size_t count = 16;
  std::size_t steps = 100;
  diffusion::SamplerKind sampler = diffusion::SamplerKind::ddpm;
  double eta = 0.0;
  std::uint64_t seed = 1234;
};

// Every setting of a run. All fields have defaults.
struct RunConfig {
  diffusion::ModelConfig model;
  std::uint64_t model_seed = 1;
  ScheduleConfig schedule;
  DataConfig data;
  diffusion::TrainConfig train;
  recon::PipelineMode mode = recon::PipelineMode::tfmq;
  recon::PipelineConfig quant;
  CalibSetConfig calib_set;
  SampleConfig sample;
  diag::DiagConfig diag;
  numerics::Precision precision = numerics::Precision::f32;
  std::string out = "run";

  // Cross-field checks; throws ConfigError naming the key.
  void validate() const;
};

// Flat "key = value" lines with dotted section names. Blank lines and lines
// starting with '#' are ignored. Unknown keys and malformed values throw
// ConfigError naming the line and key.
RunConfig parse_config(const std::string& text);
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
// Every key in a fixed order with canonical value formatting.
std::string serialize_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

RunConfig load_config(const std::filesystem::path& path);

}  // namespace diffq::cli
