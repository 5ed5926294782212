// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "diffq/cli/config.hpp"
#include "diffq/diag/diagnostics.hpp"

namespace diffq::cli {

namespace fs = std::filesystem;

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitOther = 1;

// Maps a library exception to its exit code.
int exit_code_for(const std::exception& e) noexcept;

// SHA-1 of "blob <size>\0" + contents, as lower-case hex (the git object id).
std::string content_hash(const std::string& bytes);
std::string file_hash(const fs::path& path);

// Binary PGM (P5) of images [N,1,H,W] with values in [-1, 1], tiled
// ceil(sqrt(N)) per row with a one pixel gap.
std::string pgm_grid(const numerics::Tensor& images);

// Each command writes its outputs plus a JSON manifest into cfg.out.
// Returned paths are the non-manifest outputs.

// out/fp.ckpt, out/train_loss.csv, out/train.json
std::vector<fs::path> cmd_train(const RunConfig& cfg);

// out/quant_<mode>.ckpt, out/recon_<mode>.csv, out/quantize_<mode>.json
std::vector<fs::path> cmd_quantize(const RunConfig& cfg, const fs::path& fp_ckpt);

// out/diag_<mode>/ with the diagnostics tables; <mode> is read from the
// quantized checkpoint.
diag::Summary cmd_diagnose(const RunConfig& cfg, const fs::path& fp_ckpt, const fs::path& quant_ckpt);

// out/samples_<label>.pgm and out/trajectory_<label>.ckpt. Samples the FP
// model when quant_ckpt is empty.
std::vector<fs::path> cmd_sample(const RunConfig& cfg, const fs::path& fp_ckpt, const fs::path& quant_ckpt = {});

// out/compare_<a>_<b>.csv: one row per summary metric with both values.
std::vector<fs::path> cmd_compare(const RunConfig& cfg, const fs::path& fp_ckpt, const fs::path& quant_a,
                                  const fs::path& quant_b);

// out/report.csv: one row per diag_<mode>/summary.txt found in out/, plus the
// storage overhead of each quantized checkpoint.
std::vector<fs::path> cmd_report(const RunConfig& cfg);

// Command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace diffq::cli
