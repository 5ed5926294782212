// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/recon/pipeline.hpp"

#include <chrono>

#include "diffq/errors.hpp"

namespace diffq::recon {

PipelineMode parse_mode(std::string_view name) {
  if (name == "baseline") return PipelineMode::baseline;
  if (name == "tiar" || name == "tiar_only") return PipelineMode::tiar;
  if (name == "fsc" || name == "fsc_only") return PipelineMode::fsc;
  if (name == "tfmq") return PipelineMode::tfmq;
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected baseline, tiar, fsc or tfmq)");
}

std::string_view to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::baseline: return "baseline";
    case PipelineMode::tiar: return "tiar";
    case PipelineMode::fsc: return "fsc";
    case PipelineMode::tfmq: return "tfmq";
  }
  return "unknown";
}

bool uses_tiar(PipelineMode mode) noexcept { return mode == PipelineMode::tiar || mode == PipelineMode::tfmq; }
bool uses_fsc(PipelineMode mode) noexcept { return mode == PipelineMode::fsc || mode == PipelineMode::tfmq; }

namespace {
double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

quant::QuantModel reconstruct_weights(const diffusion::ModelGraph& fp, const diffusion::NoiseSchedule& sched,
                                      const calib::CalibrationSet& calib, const PipelineConfig& cfg, bool tiar,
                                      PipelineResult* result) {
  const auto t0 = std::chrono::steady_clock::now();
  const BlockPartition part = partition_blocks(fp);
  quant::QuantModel qm = quant::wrap_model(fp, cfg.wbits, cfg.abits, part, sched.T);
  PipelineResult local;
  PipelineResult& res = result ? *result : local;
  if (cfg.wbits == quant::kFullPrecisionBits) return qm;

  const ReconConfig& rc = cfg.recon;
  std::uint64_t unit = 0;
  auto next = [&]() {
    ReconConfig c = rc;
    c.seed = cfg.recon.seed + unit++;
    return c;
  };

  if (!part.tib.empty()) {
    if (tiar) {
      res.units.emplace_back("tib", reconstruct_tiar(fp, qm, sched, next()));
    } else {
      // Embedding layers are left to their blocks.
      for (const auto& l : part.tib)
        if (fp.layer(l).role == diffusion::LayerRole::time_embed)
          res.units.emplace_back(l, reconstruct_layer(fp, qm, l, calib, next()));
    }
  }

  ReconConfig block_cfg = rc;
  block_cfg.freeze_embedding = tiar || rc.freeze_embedding;
  // Layers are stored in network order, so the first layer of each block or
  // remaining layer fixes its place in the sequence.
  int last_block = -1;
  for (const auto& layer : fp.layers()) {
    if (!layer.quantizable() || part.in_tib(layer.name)) continue;
    if (layer.block >= 0) {
      if (layer.block == last_block) continue;
      last_block = layer.block;
      const auto i = static_cast<std::size_t>(layer.block);
      ReconConfig c = block_cfg;
      c.seed = cfg.recon.seed + unit++;
      res.units.emplace_back("blocks." + std::to_string(i), reconstruct_block(fp, qm, i, calib, c));
    } else {
      res.units.emplace_back(layer.name, reconstruct_layer(fp, qm, layer.name, calib, next()));
    }
  }
  res.recon_seconds += seconds_since(t0);
  return qm;
}

void calibrate_activations(quant::QuantModel& qm, const calib::CalibrationSet& calib, const PipelineConfig& cfg,
                           bool fsc, PipelineResult* result) {
  const auto t0 = std::chrono::steady_clock::now();
  calib::calibrate_standard(qm, calib, cfg.calib, !fsc);
  if (fsc) calib::calibrate_fsc(qm, cfg.calib);
  if (result) result->calib_seconds += seconds_since(t0);
}

quant::QuantModel quantize_pipeline(const diffusion::ModelGraph& fp, const diffusion::NoiseSchedule& sched,
                                    const calib::CalibrationSet& calib, const PipelineConfig& cfg, PipelineMode mode,
                                    PipelineResult* result) {
  quant::QuantModel qm = reconstruct_weights(fp, sched, calib, cfg, uses_tiar(mode), result);
  calibrate_activations(qm, calib, cfg, uses_fsc(mode), result);
  return qm;
}

}  // namespace diffq::recon
