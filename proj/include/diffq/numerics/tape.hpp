// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "diffq/numerics/tensor.hpp"

namespace diffq::numerics {

using NodeId = std::size_t;
using TensorRefs = std::span<const Tensor* const>;

// Everything a tape needs to evaluate, replay and differentiate one op.
struct OpSpec {
  std::string name;
  std::function<Tensor(TensorRefs)> forward;
  // Returns one gradient per input; entries whose `needs` flag is false may be
  // left undefined.
  std::function<std::vector<Tensor>(const Tensor& grad, TensorRefs inputs, const Tensor& output,
                                    const std::vector<bool>& needs)>
      backward;
  // Quantizer nodes only. `surrogate` is a continuous stand-in for forward
  // whose derivative is the straight-through rule. Surrogate replay shifts it
  // to agree with forward at the anchored point, so finite differences see
  // the exact values with straight-through slopes. `near_breakpoint` reports inputs within `step` of a
  // rounding or clamping discontinuity.
  std::function<Tensor(TensorRefs)> surrogate;
  std::function<bool(TensorRefs, double step)> near_breakpoint;

  bool is_quantizer() const noexcept { return static_cast<bool>(surrogate); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  NodeId id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

// Append-only record of a computation. Nodes are stored in creation order,
// which is a topological order since an op can only consume existing nodes.
// With tracing off only values are kept; replay and gradients are then
// unavailable.
class Tape {
 public:
  enum class Replay { exact, surrogate };

  explicit Tape(bool tracing = true) : tracing_(tracing) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool tracing() const noexcept { return tracing_; }

  Var leaf(Tensor value);
  Var record(OpSpec spec, std::vector<Var> inputs);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(NodeId id) const;
  bool is_leaf(NodeId id) const;
  bool is_quantizer(NodeId id) const;
  const std::vector<NodeId>& inputs(NodeId id) const;
  const OpSpec& spec(NodeId id) const;

  // Replaces a leaf value; call replay() to propagate.
  void set_leaf(NodeId id, Tensor value);
  // Records, for every quantizer node, the offset forward - surrogate at the
  // current values. Surrogate replay adds it back.
  void anchor_surrogates();
  // Re-evaluates every op node from the current leaf values.
  void replay(Replay mode = Replay::exact);

  // reachable[i] is true when node i depends on `source` (inclusive).
  std::vector<bool> reachable_from(NodeId source) const;

 private:
  struct Node {
    OpSpec spec;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor anchor;  // forward - surrogate at the anchored point
    bool leaf = false;
  };

  const Node& node(NodeId id) const;
  Tensor evaluate(const Node& n, Replay mode) const;

  bool tracing_;
  std::vector<Node> nodes_;
};

// Reverse-mode accumulation of d(loss)/d(w) for each w in `wrt`. The loss
// must be a single-element tensor. Quantizer nodes propagate gradients per
// their own backward rule (straight-through inside the clamp range).
std::unordered_map<NodeId, Tensor> gradients(const Tape& tape, Var loss, std::span<const Var> wrt);

}  // namespace diffq::numerics
