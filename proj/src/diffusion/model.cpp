// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/diffusion/model.hpp"

#include <cmath>

#include "diffq/diffusion/rng.hpp"
#include "diffq/errors.hpp"
#include "diffq/numerics/ops.hpp"

namespace diffq::diffusion {

namespace ops = numerics;

void ModelConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError("model." + key + ": " + why); };
  if (image_size < 2 || image_size % 2) fail("image_size", "must be even and >= 2");
  if (in_channels == 0) fail("in_channels", "must be positive");
  if (n_blocks < 3) fail("n_blocks", "must be >= 3 (one block per resolution level)");
  if (groups == 0) fail("groups", "must be positive");
  if (base_channels == 0 || base_channels % groups) fail("base_channels", "must be a positive multiple of groups");
  if (mid_channels == 0 || mid_channels % groups) fail("mid_channels", "must be a positive multiple of groups");
  if (d_sin < 2 || d_sin % 2) fail("d_sin", "must be even and >= 2");
  if (d_emb == 0) fail("d_emb", "must be positive");
}

std::string_view to_string(LayerRole role) {
  switch (role) {
    case LayerRole::time_embed: return "time_embed";
    case LayerRole::embedding: return "embedding";
    case LayerRole::block_conv: return "block_conv";
    case LayerRole::block_skip: return "block_skip";
    case LayerRole::remaining: return "remaining";
    case LayerRole::input: return "input";
    case LayerRole::output: return "output";
  }
  return "unknown";
}

Tensor sinusoidal_encoding(std::span<const int> t, std::size_t dim) {
  if (t.empty()) throw ShapeError("sinusoidal_encoding: empty timestep batch");
  const std::size_t half = dim / 2;
  Tensor out({t.size(), dim});
  auto o = out.mutable_data();
  for (std::size_t n = 0; n < t.size(); ++n)
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      const double arg = static_cast<double>(t[n]) * freq;
      o[n * dim + k] = std::cos(arg);
      o[n * dim + half + k] = std::sin(arg);
    }
  return out;
}

ModelGraph ModelGraph::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelGraph m;
  m.config_ = config;
  std::uint64_t stream = 0;

  auto init = [&](const numerics::Shape& shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return uniform(shape, -bound, bound, derive_seed(seed, stream++));
  };
  auto add_linear = [&](std::string name, std::size_t in, std::size_t out, LayerRole role, int block) {
    Layer l;
    l.name = std::move(name);
    l.kind = LayerKind::linear;
    l.role = role;
    l.block = block;
    l.weight = init({out, in}, in);
    l.bias = init({out}, in);
    m.layers_.push_back(std::move(l));
    return m.layers_.size() - 1;
  };
  auto add_conv = [&](std::string name, std::size_t in, std::size_t out, std::size_t k, LayerRole role, int block) {
    Layer l;
    l.name = std::move(name);
    l.kind = LayerKind::conv;
    l.role = role;
    l.block = block;
    l.weight = init({out, in, k, k}, in * k * k);
    l.bias = init({out}, in * k * k);
    m.layers_.push_back(std::move(l));
    return m.layers_.size() - 1;
  };
  auto make_norm = [](std::string name, std::size_t ch) { return Norm{std::move(name), Tensor({ch}, 1.0), Tensor({ch})}; };

  const std::size_t n = config.n_blocks;
  const std::size_t n_mid = n / 3;
  const std::size_t n_down = (n - n_mid) / 2;
  for (std::size_t i = 0; i < n; ++i)
    m.levels_.push_back(i < n_down ? Level::down : i < n_down + n_mid ? Level::mid : Level::up);

  if (config.time_conditioning) {
    m.time0_ = add_linear("time_embed.0", config.d_sin, config.d_emb, LayerRole::time_embed, -1);
    m.time1_ = add_linear("time_embed.1", config.d_emb, config.d_emb, LayerRole::time_embed, -1);
  }
  m.conv_in_ = add_conv("conv_in", config.in_channels, config.base_channels, 3, LayerRole::input, -1);

  std::size_t ch = config.base_channels;
  for (std::size_t i = 0; i < n; ++i) {
    const Level lvl = m.levels_[i];
    if (lvl == Level::mid && (i == 0 || m.levels_[i - 1] == Level::down))
      m.down_ = add_conv("down.conv", ch, ch, 3, LayerRole::remaining, -1);
    if (lvl == Level::up && (i == 0 || m.levels_[i - 1] != Level::up))
      m.up_ = add_conv("up.conv", ch, ch, 3, LayerRole::remaining, -1);
    const std::size_t out = lvl == Level::mid ? config.mid_channels : config.base_channels;
    const std::string p = "blocks." + std::to_string(i) + ".";
    const int bi = static_cast<int>(i);
    Block b;
    b.in_ch = ch;
    b.out_ch = out;
    b.norm1 = make_norm(p + "norm1", ch);
    b.conv1 = add_conv(p + "conv1", ch, out, 3, LayerRole::block_conv, bi);
    if (config.time_conditioning) b.emb = add_linear(p + "emb", config.d_emb, out, LayerRole::embedding, bi);
    b.norm2 = make_norm(p + "norm2", out);
    b.conv2 = add_conv(p + "conv2", out, out, 3, LayerRole::block_conv, bi);
    if (ch != out) b.skip = add_conv(p + "skip", ch, out, 1, LayerRole::block_skip, bi);
    m.blocks_.push_back(std::move(b));
    ch = out;
  }
  m.norm_out_ = make_norm("norm_out", ch);
  m.conv_out_ = add_conv("conv_out", ch, config.in_channels, 3, LayerRole::output, -1);
  return m;
}

const Layer& ModelGraph::layer(std::string_view name) const {
  for (const auto& l : layers_)
    if (l.name == name) return l;
  throw RangeError("no layer named '" + std::string(name) + "'");
}

std::vector<std::string> ModelGraph::quantizable_layer_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers_)
    if (l.quantizable()) out.push_back(l.name);
  return out;
}

std::vector<std::string> ModelGraph::block_layer_names(std::size_t block) const {
  if (block >= blocks_.size()) throw RangeError("block index " + std::to_string(block) + " out of range");
  std::vector<std::string> out;
  for (const auto& l : layers_)
    if (l.block == static_cast<int>(block)) out.push_back(l.name);
  return out;
}

const std::string& ModelGraph::embedding_layer_name(std::size_t block) const {
  if (block >= blocks_.size()) throw RangeError("block index " + std::to_string(block) + " out of range");
  if (!config_.time_conditioning) throw std::logic_error("model has no embedding layers");
  return layers_[blocks_[block].emb].name;
}

std::vector<std::pair<std::string, Tensor*>> ModelGraph::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.name + ".weight", &l.weight);
    out.emplace_back(l.name + ".bias", &l.bias);
  }
  for (auto& b : blocks_)
    for (Norm* nrm : {&b.norm1, &b.norm2}) {
      out.emplace_back(nrm->name + ".gamma", &nrm->gamma);
      out.emplace_back(nrm->name + ".beta", &nrm->beta);
    }
  out.emplace_back(norm_out_.name + ".gamma", &norm_out_.gamma);
  out.emplace_back(norm_out_.name + ".beta", &norm_out_.beta);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelGraph::parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<ModelGraph*>(this)->parameters()) out.emplace_back(name, t);
  return out;
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t->size();
  return n;
}

Var ModelGraph::param(ForwardContext& ctx, const std::string& name, const Tensor& value) const {
  Var v = ctx.tape.leaf(value);
  if (ctx.params) ctx.params->emplace(name, v);
  return v;
}

Var ModelGraph::apply(ForwardContext& ctx, const Layer& layer, Var x, std::span<const int> t) const {
  if (ctx.hooks) x = ctx.hooks->activation(layer, x, t);
  Var w = param(ctx, layer.name + ".weight", layer.weight);
  if (ctx.hooks) w = ctx.hooks->weight(layer, w);
  Var b = param(ctx, layer.name + ".bias", layer.bias);
  return layer.kind == LayerKind::linear ? ops::linear(x, w, b) : ops::conv2d(x, w, b);
}

Var ModelGraph::norm(ForwardContext& ctx, const Norm& n, Var x) const {
  return ops::group_norm(x, param(ctx, n.name + ".gamma", n.gamma), param(ctx, n.name + ".beta", n.beta),
                         config_.groups);
}

ModelGraph::Level ModelGraph::level_of(std::size_t block) const { return levels_.at(block); }

Var ModelGraph::time_embed(ForwardContext& ctx, std::span<const int> t) const {
  if (!config_.time_conditioning) throw std::logic_error("model has no time embedding");
  Var code = ctx.tape.leaf(sinusoidal_encoding(t, config_.d_sin));
  ctx.time_inputs.push_back(code.id());
  Var h = apply(ctx, layers_[*time0_], code, t);
  return apply(ctx, layers_[*time1_], ops::silu(h), t);
}

Var ModelGraph::embedding(ForwardContext& ctx, std::size_t block, Var h, std::span<const int> t) const {
  if (block >= blocks_.size()) throw RangeError("block index " + std::to_string(block) + " out of range");
  return apply(ctx, layers_[blocks_[block].emb], ops::silu(h), t);
}

Var ModelGraph::res_block(ForwardContext& ctx, std::size_t block, Var x, std::optional<Var> h,
                          std::span<const int> t) const {
  if (block >= blocks_.size()) throw RangeError("block index " + std::to_string(block) + " out of range");
  const Block& b = blocks_[block];
  Var hid = apply(ctx, layers_[b.conv1], ops::silu(norm(ctx, b.norm1, x)), t);
  if (config_.time_conditioning) {
    if (!h) throw std::invalid_argument("res_block: time embedding required");
    hid = ops::broadcast_add_spatial(hid, embedding(ctx, block, *h, t));
  }
  hid = apply(ctx, layers_[b.conv2], ops::silu(norm(ctx, b.norm2, hid)), t);
  Var skip = b.skip ? apply(ctx, layers_[*b.skip], x, t) : x;
  return ops::add(skip, hid);
}

Var ModelGraph::forward(ForwardContext& ctx, Var x, std::span<const int> t) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != config_.in_channels || s[2] != config_.image_size || s[3] != config_.image_size)
    throw ShapeError("model input must be [N," + std::to_string(config_.in_channels) + "," +
                     std::to_string(config_.image_size) + "," + std::to_string(config_.image_size) + "], got " +
                     numerics::shape_string(s));
  if (t.size() != s[0]) throw ShapeError("model: need one timestep per batch row");
  std::optional<Var> h;
  if (config_.time_conditioning) h = time_embed(ctx, t);

  Var cur = apply(ctx, layers_[conv_in_], x, t);
  std::optional<Var> skip;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Level lvl = levels_[i];
    if (lvl == Level::mid && (i == 0 || levels_[i - 1] == Level::down)) {
      skip = cur;
      cur = apply(ctx, layers_[down_], ops::avg_pool2(cur), t);
    }
    if (lvl == Level::up && (i == 0 || levels_[i - 1] != Level::up)) {
      if (!skip) skip = cur;
      cur = ops::upsample2(apply(ctx, layers_[up_], cur, t));
    }
    Var in = cur;
    cur = res_block(ctx, i, cur, h, t);
    if (ctx.block_probe) ctx.block_probe(i, in, cur);
    if (lvl == Level::up && (i == 0 || levels_[i - 1] != Level::up)) cur = ops::add(cur, *skip);
  }
  return apply(ctx, layers_[conv_out_], ops::silu(norm(ctx, norm_out_, cur)), t);
}

std::vector<Var> ModelGraph::temporal_features(ForwardContext& ctx, std::span<const int> t) const {
  Var h = time_embed(ctx, t);
  std::vector<Var> out{h};
  for (std::size_t i = 0; i < blocks_.size(); ++i) out.push_back(embedding(ctx, i, h, t));
  return out;
}

Tensor ModelGraph::predict(const Tensor& x, std::span<const int> t) const {
  Tape tape(false);
  ForwardContext ctx(tape);
  return forward(ctx, tape.leaf(x), t).value();
}

}  // namespace diffq::diffusion
