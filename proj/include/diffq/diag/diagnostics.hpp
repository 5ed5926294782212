// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diffq/calib/calibrate.hpp"
#include "diffq/diffusion/sampler.hpp"
#include "diffq/quant/quant_model.hpp"

namespace diffq::diag {

using numerics::Tensor;

struct TfeRow {
  int t = 0;
  std::size_t i = 0;
  double cos = 0.0;
};
struct MismatchRow {
  int t = 0;
  std::size_t i = 0;
  int delta = 0;
};
struct TrajectoryRow {
  std::size_t step = 0;
  int t = 0;  // timestep of the state; 0 for x_0
  double mse = 0.0;
  double cos = 0.0;
};
struct BlockRow {
  int t = 0;
  std::size_t i = 0;
  double cos = 0.0;
};

struct DiagnosticsReport {
  std::vector<TfeRow> tfe;
  std::vector<MismatchRow> mismatch;
  std::vector<TrajectoryRow> trajectory;
  std::vector<calib::RangeRow> ranges;
  std::vector<BlockRow> blocks;
};

// Temporal features for every t in 1..T: features[t-1][i], i = 0..n.
using FeatureTable = std::vector<std::vector<Tensor>>;
FeatureTable feature_table(const diffusion::ModelGraph& fp, int T);
FeatureTable feature_table(const quant::QuantModel& qm);

// cos(emb_{t,i}, emb^_{t,i}).
double temporal_feature_error(const diffusion::ModelGraph& fp, const quant::QuantModel& qm, int t, std::size_t i);
// argmax over t' of cos(emb_{t',i}, emb^_{t,i}), minus t. Ties go to the
// smaller |delta|, then to the negative one.
int mismatch_delta(const diffusion::ModelGraph& fp, const quant::QuantModel& qm, int t, std::size_t i);
int mismatch_delta(const FeatureTable& fp, const Tensor& quantized, int t, std::size_t i);

// Per-state MSE and cosine between paired trajectories, x_T first. Throws
// std::invalid_argument unless both share timesteps and noise seeds.
std::vector<TrajectoryRow> trajectory_deviation(const diffusion::Trajectory& fp, const diffusion::Trajectory& q);

// Cosine between FP and quantized outputs of residual block i when both
// models receive the same (x_t, t).
double block_output_similarity(const diffusion::ModelGraph& fp, const quant::QuantModel& qm,
                               const calib::CalibEntry& entry, std::size_t i);

struct DiagConfig {
  std::size_t n_samples = 16;  // trajectories sampled as one batch
  std::size_t steps = 100;
  diffusion::SamplerKind sampler = diffusion::SamplerKind::ddpm;
  double eta = 0.0;
  std::uint64_t seed = 1234;
};

DiagnosticsReport diagnose(const diffusion::ModelGraph& fp, const quant::QuantModel& qm,
                           const diffusion::NoiseSchedule& sched, const calib::CalibrationSet& calib,
                           const DiagConfig& cfg);

// Scalar aggregates over a report.
struct Summary {
  double mean_tfe = 0.0;
  double mean_tfe_distance = 0.0;  // mean of 1 - cos
  double min_tfe = 0.0;
  int max_abs_delta = 0;
  std::size_t nonzero_delta = 0;
  double terminal_mse = 0.0;
  double terminal_cos = 0.0;
  double mean_block_cos = 0.0;
  std::size_t range_rows = 0;
};
Summary summarize(const DiagnosticsReport& report);

// Writes tfe.csv, mismatch.csv, trajectory.csv, blocks.csv, ranges.csv and
// summary.txt into `dir`, creating it if needed.
void emit_report(const DiagnosticsReport& report, const std::filesystem::path& dir);

}  // namespace diffq::diag
