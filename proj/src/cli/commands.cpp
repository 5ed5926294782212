// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/cli/commands.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "diffq/calib/calibration_set.hpp"
#include "diffq/diffusion/checkpoint.hpp"
#include "diffq/diffusion/dataset.hpp"
#include "diffq/diffusion/sampler.hpp"
#include "diffq/diffusion/schedule.hpp"
#include "diffq/errors.hpp"
#include "diffq/quant/quant_model.hpp"
#include "diffq/recon/partition.hpp"

namespace diffq::cli {

using diffusion::ModelGraph;
using numerics::Tensor;
using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << bytes;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path out_dir(const RunConfig& cfg) {
  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

// Applies global settings and validates before any work is done.
void begin(const RunConfig& cfg) {
  cfg.validate();
  numerics::set_precision(cfg.precision);
}

diffusion::NoiseSchedule schedule_of(const RunConfig& cfg) {
  return diffusion::make_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
}

ModelGraph load_fp(const RunConfig& cfg, const fs::path& path) {
  const auto ckpt = diffusion::read_checkpoint(path);
  ModelGraph model = diffusion::model_from_checkpoint(ckpt);
  if (!(model.config() == cfg.model))
    throw ArchitectureMismatch(path.string() + " was trained with a different model.* configuration");
  return model;
}

struct LoadedQuant {
  quant::QuantModel qm;
  std::string mode;
};

LoadedQuant load_quant(const RunConfig& cfg, const ModelGraph& fp, const fs::path& path) {
  const auto ckpt = diffusion::read_checkpoint(path);
  quant::QuantModel qm = quant::quant_from_checkpoint(fp, ckpt);
  if (qm.T() != cfg.schedule.T) throw ArchitectureMismatch(path.string() + " was calibrated for a different T");
  const auto it = ckpt.attrs.find("pipeline.mode");
  return {std::move(qm), it != ckpt.attrs.end() ? it->second : std::string(recon::to_string(cfg.mode))};
}

calib::CalibrationSet calibration_set(const RunConfig& cfg, const ModelGraph& fp,
                                      const diffusion::NoiseSchedule& sched) {
  const auto& m = cfg.model;
  return calib::generate_calibration_set(diffusion::fp_eps_model(fp), sched, {m.in_channels, m.image_size, m.image_size},
                                         cfg.calib_set.trajectories, cfg.calib_set.steps, cfg.calib_set.seed,
                                         cfg.calib_set.sampler);
}

Json config_json(const RunConfig& cfg) {
  Json j = Json::object();
  std::istringstream in(serialize_config(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

Json file_list(const RunConfig& cfg, const std::vector<fs::path>& paths) {
  Json arr = Json::array();
  for (const auto& p : paths)
    arr.push_back({{"path", fs::relative(p, cfg.out).generic_string()}, {"sha1", file_hash(p)}});
  return arr;
}

// The manifest is the only output carrying wall times; everything else is a
// pure function of the config and input files.
void write_manifest(const RunConfig& cfg, const std::string& name, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs, const Json& results, double wall) {
  Json j;
  j["command"] = name;
  j["config"] = config_json(cfg);
  Json in = Json::array();
  for (const auto& p : inputs) in.push_back({{"path", p.generic_string()}, {"sha1", file_hash(p)}});
  j["inputs"] = in;
  j["outputs"] = file_list(cfg, outputs);
  j["results"] = results;
  j["wall_seconds"] = wall;
  write_file(fs::path(cfg.out) / (name + ".json"), j.dump(2) + "\n");
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError(what + " is not finite");
}

Json summary_json(const diag::Summary& s) {
  return {{"mean_tfe", s.mean_tfe},
          {"mean_tfe_distance", s.mean_tfe_distance},
          {"min_tfe", s.min_tfe},
          {"max_abs_delta", s.max_abs_delta},
          {"nonzero_delta", s.nonzero_delta},
          {"terminal_mse", s.terminal_mse},
          {"terminal_cos", s.terminal_cos},
          {"mean_block_cos", s.mean_block_cos}};
}

std::vector<std::pair<std::string, std::string>> summary_rows(const diag::Summary& s) {
  return {{"mean_tfe", num(s.mean_tfe)},
          {"mean_tfe_distance", num(s.mean_tfe_distance)},
          {"min_tfe", num(s.min_tfe)},
          {"max_abs_delta", std::to_string(s.max_abs_delta)},
          {"nonzero_delta", std::to_string(s.nonzero_delta)},
          {"terminal_mse", num(s.terminal_mse)},
          {"terminal_cos", num(s.terminal_cos)},
          {"mean_block_cos", num(s.mean_block_cos)}};
}

diag::Summary check_summary(const diag::Summary& s) {
  for (const auto& [k, v] : summary_rows(s)) require_finite(std::stod(v), "diagnostic " + k);
  return s;
}

}  // namespace

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const RangeError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ArchitectureMismatch*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e))
    return kExitIo;
  return kExitOther;
}

std::string content_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::bad_alloc();
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string file_hash(const fs::path& path) { return content_hash(read_file(path)); }

std::string pgm_grid(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 1) throw ShapeError("pgm_grid expects [N,1,H,W], got " + numerics::shape_string(images.shape()));
  const std::size_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t W = cols * (w + 1) - 1, H = rows * (h + 1) - 1;
  std::string pix(W * H, '\0');
  const auto d = images.data();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r0 = (k / cols) * (h + 1), c0 = (k % cols) * (w + 1);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = std::clamp(d[(k * h + y) * w + x], -1.0, 1.0);
        pix[(r0 + y) * W + c0 + x] = static_cast<char>(static_cast<unsigned char>(std::lround((v + 1.0) * 127.5)));
      }
  }
  return "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n" + pix;
}

std::vector<fs::path> cmd_train(const RunConfig& cfg) {
  begin(cfg);
  if (cfg.model.in_channels != 1) throw ConfigError("model.in_channels: the synthetic dataset is single-channel");
  const auto start = Clock::now();
  const fs::path dir = out_dir(cfg);
  const auto sched = schedule_of(cfg);
  const auto data = diffusion::make_synthetic_dataset(cfg.data.size, cfg.model.image_size, cfg.data.seed);
  ModelGraph model = ModelGraph::build(cfg.model, cfg.model_seed);
  const auto result = diffusion::train_toy(model, data, sched, cfg.train);
  require_finite(result.final_val_loss, "validation loss");

  const fs::path ckpt = dir / "fp.ckpt", curve = dir / "train_loss.csv";
  diffusion::write_checkpoint(ckpt, diffusion::model_checkpoint(model, cfg.model_seed));
  std::ostringstream csv;
  csv << "iteration,loss\n";
  for (std::size_t k = 0; k < result.loss_curve.size(); ++k)
    csv << (k + 1) * cfg.train.log_every << ',' << num(result.loss_curve[k]) << '\n';
  write_file(curve, csv.str());

  const std::vector<fs::path> outputs{ckpt, curve};
  write_manifest(cfg, "train", {}, outputs,
                 {{"initial_val_loss", result.initial_val_loss},
                  {"final_val_loss", result.final_val_loss},
                  {"parameters", model.parameter_count()}},
                 seconds_since(start));
  return outputs;
}

std::vector<fs::path> cmd_quantize(const RunConfig& cfg, const fs::path& fp_ckpt) {
  begin(cfg);
  const auto start = Clock::now();
  const fs::path dir = out_dir(cfg);
  const auto sched = schedule_of(cfg);
  const ModelGraph fp = load_fp(cfg, fp_ckpt);
  const auto calib = calibration_set(cfg, fp, sched);
  recon::PipelineResult result;
  const auto qm = recon::quantize_pipeline(fp, sched, calib, cfg.quant, cfg.mode, &result);

  const std::string mode(recon::to_string(cfg.mode));
  Json units = Json::object();
  std::ostringstream csv;
  csv << "unit,iteration,loss\n";
  for (const auto& [unit, r] : result.units) {
    require_finite(r.final_loss, "reconstruction loss of " + unit);
    for (std::size_t k = 0; k < r.loss_curve.size(); ++k)
      csv << unit << ',' << r.curve_iterations[k] << ',' << num(r.loss_curve[k]) << '\n';
    units[unit] = {{"initial_loss", r.initial_loss}, {"final_loss", r.final_loss}};
  }
  auto ckpt = quant::quant_checkpoint(qm);
  ckpt.attrs["pipeline.mode"] = mode;
  const fs::path ckpt_path = dir / ("quant_" + mode + ".ckpt"), curve = dir / ("recon_" + mode + ".csv");
  diffusion::write_checkpoint(ckpt_path, ckpt);
  write_file(curve, csv.str());

  const auto overhead = quant::storage_overhead(qm);
  const std::vector<fs::path> outputs{ckpt_path, curve};
  write_manifest(cfg, "quantize_" + mode, {fp_ckpt}, outputs,
                 {{"mode", mode},
                  {"units", units},
                  {"calibration_entries", calib.size()},
                  {"overhead_fraction", overhead.fraction}},
                 seconds_since(start));
  return outputs;
}

diag::Summary cmd_diagnose(const RunConfig& cfg, const fs::path& fp_ckpt, const fs::path& quant_ckpt) {
  begin(cfg);
  const auto start = Clock::now();
  const fs::path dir = out_dir(cfg);
  const auto sched = schedule_of(cfg);
  const ModelGraph fp = load_fp(cfg, fp_ckpt);
  const auto [qm, mode] = load_quant(cfg, fp, quant_ckpt);
  const auto calib = calibration_set(cfg, fp, sched);
  const auto report = diag::diagnose(fp, qm, sched, calib, cfg.diag);
  const auto summary = check_summary(diag::summarize(report));
  const fs::path diag_dir = dir / ("diag_" + mode);
  diag::emit_report(report, diag_dir);

  std::vector<fs::path> outputs;
  for (const char* f : {"tfe.csv", "mismatch.csv", "trajectory.csv", "blocks.csv", "ranges.csv", "summary.txt"})
    outputs.push_back(diag_dir / f);
  write_manifest(cfg, "diagnose_" + mode, {fp_ckpt, quant_ckpt}, outputs, summary_json(summary), seconds_since(start));
  return summary;
}

std::vector<fs::path> cmd_sample(const RunConfig& cfg, const fs::path& fp_ckpt, const fs::path& quant_ckpt) {
  begin(cfg);
  const auto start = Clock::now();
  const fs::path dir = out_dir(cfg);
  const auto sched = schedule_of(cfg);
  const ModelGraph fp = load_fp(cfg, fp_ckpt);
  std::optional<LoadedQuant> q;
  if (!quant_ckpt.empty()) q.emplace(load_quant(cfg, fp, quant_ckpt));
  const std::string label = q ? q->mode : "fp";
  const diffusion::EpsModel eps = q ? q->qm.eps_model() : diffusion::fp_eps_model(fp);

  const auto& m = cfg.model;
  const auto& s = cfg.sample;
  const auto traj = diffusion::sample(eps, sched, s.steps, s.sampler, s.seed, {s.count, m.in_channels, m.image_size, m.image_size}, s.eta);
  const Tensor& x0 = traj.states.back();
  if (!x0.all_finite()) throw NumericError("sampled images contain non-finite values");

  diffusion::Checkpoint dump;
  dump.attrs["kind"] = "trajectory";
  dump.attrs["model"] = label;
  std::string ts, seeds;
  for (std::size_t k = 0; k < traj.timesteps.size(); ++k) {
    ts += (k ? "," : "") + std::to_string(traj.timesteps[k]);
    seeds += (k ? "," : "") + std::to_string(traj.noise_seeds[k]);
  }
  dump.attrs["timesteps"] = ts;
  dump.attrs["noise_seeds"] = seeds;
  for (std::size_t k = 0; k < traj.states.size(); ++k) dump.put("state/" + std::to_string(k), traj.states[k]);

  const fs::path traj_path = dir / ("trajectory_" + label + ".ckpt"), grid = dir / ("samples_" + label + ".pgm");
  diffusion::write_checkpoint(traj_path, dump);
  if (m.in_channels == 1) write_file(grid, pgm_grid(x0));
  std::vector<fs::path> outputs{traj_path};
  if (m.in_channels == 1) outputs.push_back(grid);

  std::vector<fs::path> inputs{fp_ckpt};
  if (q) inputs.push_back(quant_ckpt);
  write_manifest(cfg, "sample_" + label, inputs, outputs, {{"model", label}, {"steps", traj.timesteps.size()}},
                 seconds_since(start));
  return outputs;
}

std::vector<fs::path> cmd_compare(const RunConfig& cfg, const fs::path& fp_ckpt, const fs::path& quant_a,
                                  const fs::path& quant_b) {
  begin(cfg);
  const auto start = Clock::now();
  const fs::path dir = out_dir(cfg);
  const auto sched = schedule_of(cfg);
  const ModelGraph fp = load_fp(cfg, fp_ckpt);
  const auto a = load_quant(cfg, fp, quant_a);
  const auto b = load_quant(cfg, fp, quant_b);
  const auto calib = calibration_set(cfg, fp, sched);
  const auto sa = check_summary(diag::summarize(diag::diagnose(fp, a.qm, sched, calib, cfg.diag)));
  const auto sb = check_summary(diag::summarize(diag::diagnose(fp, b.qm, sched, calib, cfg.diag)));

  const auto ra = summary_rows(sa), rb = summary_rows(sb);
  std::ostringstream csv;
  csv << "metric," << a.mode << ',' << b.mode << '\n';
  for (std::size_t k = 0; k < ra.size(); ++k) csv << ra[k].first << ',' << ra[k].second << ',' << rb[k].second << '\n';
  const fs::path table = dir / ("compare_" + a.mode + "_" + b.mode + ".csv");
  write_file(table, csv.str());

  const std::vector<fs::path> outputs{table};
  write_manifest(cfg, "compare_" + a.mode + "_" + b.mode, {fp_ckpt, quant_a, quant_b}, outputs,
                 {{a.mode, summary_json(sa)}, {b.mode, summary_json(sb)}}, seconds_since(start));
  return outputs;
}

std::vector<fs::path> cmd_report(const RunConfig& cfg) {
  begin(cfg);
  const auto start = Clock::now();
  const fs::path dir = out_dir(cfg);
  std::vector<std::string> modes;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && name.rfind("diag_", 0) == 0 && fs::exists(e.path() / "summary.txt"))
      modes.push_back(name.substr(5));
  }
  std::sort(modes.begin(), modes.end());
  if (modes.empty()) throw IoError("no diag_<mode>/summary.txt under " + dir.string() + "; run diagnose first");

  std::optional<ModelGraph> fp;
  if (fs::exists(dir / "fp.ckpt")) fp.emplace(load_fp(cfg, dir / "fp.ckpt"));

  std::vector<std::string> keys;
  std::ostringstream body;
  std::vector<fs::path> inputs;
  for (const auto& mode : modes) {
    const fs::path summary = dir / ("diag_" + mode) / "summary.txt";
    inputs.push_back(summary);
    std::istringstream in(read_file(summary));
    std::string line;
    std::vector<std::string> row_keys, values;
    while (std::getline(in, line)) {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) throw IoError("malformed line in " + summary.string() + ": " + line);
      row_keys.push_back(line.substr(0, colon));
      values.push_back(line.substr(colon + 2));
    }
    if (keys.empty()) keys = row_keys;
    if (row_keys != keys) throw IoError(summary.string() + " has a different set of keys");
    body << mode;
    for (const auto& v : values) body << ',' << v;

    const fs::path qpath = dir / ("quant_" + mode + ".ckpt");
    if (fp && fs::exists(qpath)) {
      inputs.push_back(qpath);
      const auto o = quant::storage_overhead(load_quant(cfg, *fp, qpath).qm);
      body << ',' << o.extra_params << ',' << num(o.fraction);
    } else {
      body << ",,";
    }
    body << '\n';
  }
  std::ostringstream csv;
  csv << "mode";
  for (const auto& k : keys) csv << ',' << k;
  csv << ",fsc_extra_params,fsc_overhead_fraction\n" << body.str();
  const fs::path table = dir / "report.csv";
  write_file(table, csv.str());
  write_manifest(cfg, "report", inputs, {table}, {{"modes", modes}}, seconds_since(start));
  return {table};
}

int run_cli(int argc, char** argv) {
  CLI::App app{"diffq: post-training quantization of a toy diffusion model"};
  app.require_subcommand(1);

  std::string config_path, mode, out, fp_path, quant_path, quant_a, quant_b;
  std::vector<std::string> overrides;
  std::optional<int> wbits, abits;
  std::optional<std::uint64_t> seed;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (flat key = value lines)");
    sub->add_option("--mode", mode, "pipeline mode: baseline, tiar, fsc or tfmq");
    sub->add_option("--wbits", wbits, "weight bit-width");
    sub->add_option("--abits", abits, "activation bit-width");
    sub->add_option("--seed", seed, "model initialization seed");
    sub->add_option("--out", out, "run directory");
    sub->add_option("--set", overrides, "extra key=value override, repeatable");
  };
  auto* train = app.add_subcommand("train", "train the full-precision model");
  auto* quantize = app.add_subcommand("quantize", "quantize a trained model");
  auto* diagnose = app.add_subcommand("diagnose", "compare a quantized model against full precision");
  auto* sample = app.add_subcommand("sample", "sample images and dump the trajectory");
  auto* compare = app.add_subcommand("compare", "diagnose two quantized models side by side");
  auto* report = app.add_subcommand("report", "collect diagnostics summaries of a run directory");
  for (auto* sub : {train, quantize, diagnose, sample, compare, report}) common(sub);
  for (auto* sub : {quantize, diagnose, sample, compare})
    sub->add_option("--fp", fp_path, "full-precision checkpoint (default <out>/fp.ckpt)");
  diagnose->add_option("--quant", quant_path, "quantized checkpoint (default <out>/quant_<mode>.ckpt)");
  sample->add_option("--quant", quant_path, "sample this quantized checkpoint instead of the FP model");
  compare->add_option("--quant-a", quant_a, "first quantized checkpoint (default <out>/quant_baseline.ckpt)");
  compare->add_option("--quant-b", quant_b, "second quantized checkpoint (default <out>/quant_tfmq.ckpt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!mode.empty()) apply_setting(cfg, "quant.mode", mode);
    if (wbits) cfg.quant.wbits = *wbits;
    if (abits) cfg.quant.abits = *abits;
    if (seed) cfg.model_seed = *seed;
    if (!out.empty()) apply_setting(cfg, "out", out);

    const fs::path dir(cfg.out);
    const fs::path fp = fp_path.empty() ? dir / "fp.ckpt" : fs::path(fp_path);
    const auto quant_default = [&](const std::string& m) { return dir / ("quant_" + m + ".ckpt"); };

    if (train->parsed()) {
      cmd_train(cfg);
      std::cout << "wrote " << (dir / "fp.ckpt").string() << '\n';
    } else if (quantize->parsed()) {
      const auto paths = cmd_quantize(cfg, fp);
      std::cout << "wrote " << paths.front().string() << '\n';
    } else if (diagnose->parsed()) {
      const auto q = quant_path.empty() ? quant_default(std::string(recon::to_string(cfg.mode))) : fs::path(quant_path);
      const auto s = cmd_diagnose(cfg, fp, q);
      for (const auto& [k, v] : summary_rows(s)) std::cout << k << ": " << v << '\n';
    } else if (sample->parsed()) {
      // --mode alone selects the checkpoint written by `quantize --mode`.
      const fs::path q = !quant_path.empty() ? fs::path(quant_path)
                         : mode.empty()      ? fs::path()
                                             : quant_default(std::string(recon::to_string(cfg.mode)));
      const auto paths = cmd_sample(cfg, fp, q);
      for (const auto& p : paths) std::cout << "wrote " << p.string() << '\n';
    } else if (compare->parsed()) {
      const auto paths = cmd_compare(cfg, fp, quant_a.empty() ? quant_default("baseline") : fs::path(quant_a),
                                     quant_b.empty() ? quant_default("tfmq") : fs::path(quant_b));
      std::cout << read_file(paths.front());
    } else if (report->parsed()) {
      std::cout << read_file(cmd_report(cfg).front());
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace diffq::cli
