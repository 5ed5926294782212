// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/recon/partition.hpp"

#include <algorithm>
#include <unordered_map>

#include "diffq/errors.hpp"

namespace diffq::recon {

using diffusion::Layer;
using diffusion::LayerRole;
using numerics::NodeId;

bool BlockPartition::in_tib(const std::string& layer) const {
  return std::find(tib.begin(), tib.end(), layer) != tib.end();
}

std::vector<std::string> BlockPartition::all_layers() const {
  std::vector<std::string> out = tib;
  for (const auto& b : res_blocks) out.insert(out.end(), b.begin(), b.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

namespace {

// Records the tape node feeding each weight layer.
class InputProbe : public diffusion::LayerHooks {
 public:
  numerics::Var activation(const Layer& layer, numerics::Var x, std::span<const int>) override {
    inputs[layer.name] = x.id();
    return x;
  }
  std::unordered_map<std::string, NodeId> inputs;
};

}  // namespace

BlockPartition partition_blocks(const diffusion::ModelGraph& model) {
  const auto& cfg = model.config();
  numerics::Tape tape;
  InputProbe probe;
  diffusion::ForwardContext ctx(tape, &probe);
  const numerics::Var x = tape.leaf(numerics::Tensor({1, cfg.in_channels, cfg.image_size, cfg.image_size}));
  const int t[] = {1};
  model.forward(ctx, x, t);

  const auto from_x = tape.reachable_from(x.id());
  std::vector<bool> from_t(tape.size(), false);
  for (NodeId src : ctx.time_inputs) {
    const auto r = tape.reachable_from(src);
    for (std::size_t i = 0; i < r.size(); ++i) from_t[i] = from_t[i] || r[i];
  }

  BlockPartition p;
  p.res_blocks.resize(model.n_blocks());
  p.tib_empty = ctx.time_inputs.empty();
  for (const Layer& l : model.layers()) {
    if (!l.quantizable()) continue;
    const NodeId in = probe.inputs.at(l.name);
    const bool t_only = from_t[in] && !from_x[in];
    const bool temporal_role = l.role == LayerRole::time_embed || l.role == LayerRole::embedding;
    if (temporal_role && !t_only)
      throw ArchitectureMismatch("layer '" + l.name + "' should depend on the timestep only but is reachable from x");
    if (t_only)
      p.tib.push_back(l.name);
    else if (l.block >= 0)
      p.res_blocks[static_cast<std::size_t>(l.block)].push_back(l.name);
    else
      p.rest.push_back(l.name);
  }
  return p;
}

}  // namespace diffq::recon
