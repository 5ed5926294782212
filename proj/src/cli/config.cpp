// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "diffq/errors.hpp"

namespace diffq::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_int(const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T, class M>
Field uint_field(std::string key, M member) {
  return {std::move(key), [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_int<T>(v); }};
}

template <class M>
Field real_field(std::string key, M member) {
  return {std::move(key), [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); }};
}

template <class M>
Field bool_field(std::string key, M member) {
  return {std::move(key), [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_bool(v); }};
}

template <class M>
Field sampler_field(std::string key, M member) {
  return {std::move(key),
          [member](const RunConfig& c) { return std::string(diffusion::to_string(member(const_cast<RunConfig&>(c)))); },
          [member](RunConfig& c, const std::string& v) { member(c) = diffusion::parse_sampler(v); }};
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      uint_field<std::size_t>("model.image_size", REF(model.image_size)),
      uint_field<std::size_t>("model.in_channels", REF(model.in_channels)),
      uint_field<std::size_t>("model.base_channels", REF(model.base_channels)),
      uint_field<std::size_t>("model.mid_channels", REF(model.mid_channels)),
      uint_field<std::size_t>("model.n_blocks", REF(model.n_blocks)),
      uint_field<std::size_t>("model.d_sin", REF(model.d_sin)),
      uint_field<std::size_t>("model.d_emb", REF(model.d_emb)),
      uint_field<std::size_t>("model.groups", REF(model.groups)),
      bool_field("model.time_conditioning", REF(model.time_conditioning)),
      uint_field<std::uint64_t>("model.seed", REF(model_seed)),
      uint_field<int>("schedule.T", REF(schedule.T)),
      real_field("schedule.beta_start", REF(schedule.beta_start)),
      real_field("schedule.beta_end", REF(schedule.beta_end)),
      uint_field<std::size_t>("data.size", REF(data.size)),
      uint_field<std::uint64_t>("data.seed", REF(data.seed)),
      uint_field<std::size_t>("train.iterations", REF(train.iterations)),
      uint_field<std::size_t>("train.batch", REF(train.batch)),
      real_field("train.lr", REF(train.lr)),
      uint_field<std::uint64_t>("train.seed", REF(train.seed)),
      uint_field<std::size_t>("train.val_size", REF(train.val_size)),
      uint_field<std::uint64_t>("train.val_seed", REF(train.val_seed)),
      uint_field<std::size_t>("train.log_every", REF(train.log_every)),
      {"quant.mode", [](const RunConfig& c) { return std::string(recon::to_string(c.mode)); },
       [](RunConfig& c, const std::string& v) { c.mode = recon::parse_mode(v); }},
      uint_field<int>("quant.wbits", REF(quant.wbits)),
      uint_field<int>("quant.abits", REF(quant.abits)),
      uint_field<std::size_t>("recon.iterations", REF(quant.recon.iterations)),
      uint_field<std::size_t>("recon.batch", REF(quant.recon.batch)),
      uint_field<std::size_t>("recon.tiar_batch", REF(quant.recon.tiar_batch)),
      real_field("recon.lr_rounding", REF(quant.recon.lr_rounding)),
      real_field("recon.lr_actscale", REF(quant.recon.lr_actscale)),
      real_field("recon.anneal_start", REF(quant.recon.anneal_start)),
      real_field("recon.anneal_end", REF(quant.recon.anneal_end)),
      real_field("recon.warmup", REF(quant.recon.warmup)),
      real_field("recon.reg_weight", REF(quant.recon.reg_weight)),
      bool_field("recon.freeze_embedding", REF(quant.recon.freeze_embedding)),
      uint_field<std::size_t>("recon.eval_every", REF(quant.recon.eval_every)),
      uint_field<std::uint64_t>("recon.seed", REF(quant.recon.seed)),
      {"calib.method", [](const RunConfig& c) { return std::string(calib::to_string(c.quant.calib.method)); },
       [](RunConfig& c, const std::string& v) { c.quant.calib.method = calib::parse_range_method(v); }},
      real_field("calib.percentile", REF(quant.calib.options.percentile)),
      uint_field<std::size_t>("calib.mse_grid", REF(quant.calib.options.mse_grid)),
      uint_field<std::size_t>("calib.kl_bins", REF(quant.calib.options.kl_bins)),
      real_field("calib.ema_decay", REF(quant.calib.ema_decay)),
      uint_field<std::size_t>("calib.batch", REF(quant.calib.batch)),
      uint_field<std::size_t>("calib.trajectories", REF(calib_set.trajectories)),
      uint_field<std::size_t>("calib.steps", REF(calib_set.steps)),
      sampler_field("calib.sampler", REF(calib_set.sampler)),
      uint_field<std::uint64_t>("calib.seed", REF(calib_set.seed)),
      uint_field<std::size_t>("sample.count", REF(sample.count)),
      uint_field<std::size_t>("sample.steps", REF(sample.steps)),
      sampler_field("sample.sampler", REF(sample.sampler)),
      real_field("sample.eta", REF(sample.eta)),
      uint_field<std::uint64_t>("sample.seed", REF(sample.seed)),
      uint_field<std::size_t>("diag.samples", REF(diag.n_samples)),
      uint_field<std::size_t>("diag.steps", REF(diag.steps)),
      sampler_field("diag.sampler", REF(diag.sampler)),
      real_field("diag.eta", REF(diag.eta)),
      uint_field<std::uint64_t>("diag.seed", REF(diag.seed)),
      {"numerics.precision", [](const RunConfig& c) { return std::string(c.precision == numerics::Precision::f32 ? "f32" : "f64"); },
       [](RunConfig& c, const std::string& v) {
         if (v == "f32")
           c.precision = numerics::Precision::f32;
         else if (v == "f64")
           c.precision = numerics::Precision::f64;
         else
           throw ConfigError("expected f32 or f64, got '" + v + "'");
       }},
      {"out", [](const RunConfig& c) { return c.out; },
       [](RunConfig& c, const std::string& v) {
         if (v.empty()) throw ConfigError("output directory must not be empty");
         c.out = v;
       }},
  };
  return all;
}

#undef REF

}  // namespace

void RunConfig::validate() const {
  model.validate();
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
  if (schedule.T < 1) fail("schedule.T", "must be positive");
  if (!(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1.0))
    fail("schedule.beta_start", "need 0 < beta_start <= beta_end < 1");
  if (data.size == 0) fail("data.size", "must be positive");
  if (train.batch == 0) fail("train.batch", "must be positive");
  if (!(train.lr > 0.0)) fail("train.lr", "must be positive");
  if (train.val_size == 0) fail("train.val_size", "must be positive");
  if (train.log_every == 0) fail("train.log_every", "must be positive");
  for (auto [key, bits] : {std::pair{"quant.wbits", quant.wbits}, std::pair{"quant.abits", quant.abits}})
    if (bits != 32 && (bits < 2 || bits > 16)) fail(key, "must be 32 or lie in [2, 16]");
  quant.recon.validate();
  quant.calib.options.validate();
  if (!(quant.calib.ema_decay > 0.0 && quant.calib.ema_decay < 1.0)) fail("calib.ema_decay", "must lie in (0, 1)");
  if (quant.calib.batch == 0) fail("calib.batch", "must be positive");
  if (calib_set.trajectories == 0) fail("calib.trajectories", "must be positive");
  if (calib_set.steps == 0 || calib_set.steps > static_cast<std::size_t>(schedule.T)) fail("calib.steps", "must lie in [1, T]");
  if (calib_set.sampler == diffusion::SamplerKind::ddpm && calib_set.steps != static_cast<std::size_t>(schedule.T))
    fail("calib.steps", "ddpm sampling requires steps = T");
  if (sample.count == 0) fail("sample.count", "must be positive");
  if (sample.steps == 0 || sample.steps > static_cast<std::size_t>(schedule.T)) fail("sample.steps", "must lie in [1, T]");
  if (sample.sampler == diffusion::SamplerKind::ddpm && sample.steps != static_cast<std::size_t>(schedule.T))
    fail("sample.steps", "ddpm sampling requires steps = T");
  if (!(sample.eta >= 0.0 && sample.eta <= 1.0)) fail("sample.eta", "must lie in [0, 1]");
  if (diag.n_samples == 0) fail("diag.samples", "must be positive");
  if (diag.steps == 0 || diag.steps > static_cast<std::size_t>(schedule.T)) fail("diag.steps", "must lie in [1, T]");
  if (diag.sampler == diffusion::SamplerKind::ddpm && diag.steps != static_cast<std::size_t>(schedule.T))
    fail("diag.steps", "ddpm sampling requires steps = T");
  if (!(diag.eta >= 0.0 && diag.eta <= 1.0)) fail("diag.eta", "must lie in [0, 1]");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (f.key == key) {
      try {
        f.set(cfg, value);
      } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
      }
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace diffq::cli
