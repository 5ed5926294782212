// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "diffq/numerics/tape.hpp"

namespace diffq::diffusion {

using numerics::NodeId;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct ModelConfig {
  std::size_t image_size = 8;
  std::size_t in_channels = 1;
  std::size_t base_channels = 16;  // 8x8 level
  std::size_t mid_channels = 64;   // 4x4 level
  std::size_t n_blocks = 6;
  std::size_t d_sin = 32;
  std::size_t d_emb = 64;
  std::size_t groups = 4;
  bool time_conditioning = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class LayerKind { linear, conv };

// Structural role of a weight layer. Input and output layers stay in full
// precision and receive no quantizers.
enum class LayerRole { time_embed, embedding, block_conv, block_skip, remaining, input, output };

std::string_view to_string(LayerRole role);

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::linear;
  LayerRole role = LayerRole::remaining;
  int block = -1;  // owning residual block, -1 if none
  Tensor weight;   // linear [out,in]; conv [out,in,k,k]
  Tensor bias;     // [out]

  std::size_t out_channels() const { return weight.dim(0); }
  bool quantizable() const { return role != LayerRole::input && role != LayerRole::output; }
};

struct Norm {
  std::string name;
  Tensor gamma;
  Tensor beta;
};

// Hooks let a caller intercept every weight-layer application: substitute the
// weight (quantization, rounding variables) or transform the layer's input
// activation. The default hooks are the identity.
class LayerHooks {
 public:
  virtual ~LayerHooks() = default;
  // `w` is the leaf carrying the full-precision weight.
  virtual Var weight(const Layer& layer, Var w) { (void)layer; return w; }
  // `t` holds one timestep per batch row.
  virtual Var activation(const Layer& layer, Var x, std::span<const int> t) {
    (void)layer;
    (void)t;
    return x;
  }
};

struct ForwardContext {
  explicit ForwardContext(Tape& tape, LayerHooks* hooks = nullptr) : tape(tape), hooks(hooks) {}

  Tape& tape;
  LayerHooks* hooks;
  // When set, every parameter leaf is recorded here by name.
  std::unordered_map<std::string, Var>* params = nullptr;
  // Called with the input and output of each residual block.
  std::function<void(std::size_t block, Var input, Var output)> block_probe;
  // Leaves holding the sinusoidal timestep code, appended by time_embed().
  std::vector<NodeId> time_inputs;
};

// Sinusoidal timestep code [N, dim]: cos(t f_k) in the first half, sin(t f_k)
// in the second, f_k = exp(-ln(10000) k / (dim/2)).
Tensor sinusoidal_encoding(std::span<const int> t, std::size_t dim);

// Toy noise-prediction UNet: time embed h = Linear-SiLU-Linear on the
// sinusoidal code; residual blocks at 8x8 and 4x4 each inject
// g_i(h) = Linear(SiLU(h)) by broadcast-add onto their hidden map.
class ModelGraph {
 public:
  static ModelGraph build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t n_blocks() const noexcept { return blocks_.size(); }

  std::span<const Layer> layers() const noexcept { return layers_; }
  const Layer& layer(std::string_view name) const;
  std::vector<std::string> quantizable_layer_names() const;
  // Layers owned by residual block i (conv1, conv2, skip, emb).
  std::vector<std::string> block_layer_names(std::size_t block) const;
  const std::string& embedding_layer_name(std::size_t block) const;

  // Every trainable tensor by name, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  std::size_t parameter_count() const;

  // eps_theta(x_t, t): x [N,C,H,W], one timestep per row.
  Var forward(ForwardContext& ctx, Var x, std::span<const int> t) const;
  // h(t) [N, d_emb].
  Var time_embed(ForwardContext& ctx, std::span<const int> t) const;
  // g_i(h) [N, C_i].
  Var embedding(ForwardContext& ctx, std::size_t block, Var h, std::span<const int> t) const;
  // f_i: full residual block including its embedding layer. `h` may be
  // unbound when the model has no time conditioning.
  Var res_block(ForwardContext& ctx, std::size_t block, Var x, std::optional<Var> h, std::span<const int> t) const;
  // {h(t), g_1(h(t)), ..., g_n(h(t))}: n+1 features, each [N, dim].
  std::vector<Var> temporal_features(ForwardContext& ctx, std::span<const int> t) const;

  // Convenience: untraced full-precision forward.
  Tensor predict(const Tensor& x, std::span<const int> t) const;

 private:
  struct Block {
    std::size_t in_ch = 0, out_ch = 0;
    Norm norm1, norm2;
    std::size_t conv1 = 0, conv2 = 0, emb = 0;
    std::optional<std::size_t> skip;
  };
  enum class Level { down, mid, up };

  Var apply(ForwardContext& ctx, const Layer& layer, Var x, std::span<const int> t) const;
  Var param(ForwardContext& ctx, const std::string& name, const Tensor& value) const;
  Var norm(ForwardContext& ctx, const Norm& n, Var x) const;
  Level level_of(std::size_t block) const;

  ModelConfig config_;
  std::vector<Layer> layers_;
  std::vector<Block> blocks_;
  std::vector<Level> levels_;
  std::optional<std::size_t> time0_, time1_;
  std::size_t conv_in_ = 0, down_ = 0, up_ = 0, conv_out_ = 0;
  Norm norm_out_;
};

}  // namespace diffq::diffusion
