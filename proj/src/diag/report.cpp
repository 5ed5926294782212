// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <sstream>

#include "diffq/diag/diagnostics.hpp"
#include "diffq/errors.hpp"

namespace diffq::diag {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void emit_report(const DiagnosticsReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::ostringstream tfe, mis, traj, blocks, ranges, summary;
  tfe << "t,i,cos\n";
  for (const auto& row : r.tfe) tfe << row.t << ',' << row.i << ',' << num(row.cos) << '\n';
  mis << "t,i,delta\n";
  for (const auto& row : r.mismatch) mis << row.t << ',' << row.i << ',' << row.delta << '\n';
  traj << "step,t,mse,cos\n";
  for (const auto& row : r.trajectory) traj << row.step << ',' << row.t << ',' << num(row.mse) << ',' << num(row.cos) << '\n';
  blocks << "t,i,cos\n";
  for (const auto& row : r.blocks) blocks << row.t << ',' << row.i << ',' << num(row.cos) << '\n';
  ranges << "layer,t,min,max\n";
  for (const auto& row : r.ranges) ranges << row.layer << ',' << row.t << ',' << num(row.min) << ',' << num(row.max) << '\n';

  const Summary s = summarize(r);
  summary << "mean_tfe: " << num(s.mean_tfe) << '\n'
          << "mean_tfe_distance: " << num(s.mean_tfe_distance) << '\n'
          << "min_tfe: " << num(s.min_tfe) << '\n'
          << "max_abs_delta: " << s.max_abs_delta << '\n'
          << "nonzero_delta: " << s.nonzero_delta << '\n'
          << "terminal_mse: " << num(s.terminal_mse) << '\n'
          << "terminal_cos: " << num(s.terminal_cos) << '\n'
          << "mean_block_cos: " << num(s.mean_block_cos) << '\n'
          << "range_rows: " << s.range_rows << '\n';

  write_file(dir / "tfe.csv", tfe.str());
  write_file(dir / "mismatch.csv", mis.str());
  write_file(dir / "trajectory.csv", traj.str());
  write_file(dir / "blocks.csv", blocks.str());
  write_file(dir / "ranges.csv", ranges.str());
  write_file(dir / "summary.txt", summary.str());
}

}  // namespace diffq::diag
