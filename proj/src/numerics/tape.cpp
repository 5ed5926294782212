// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/numerics/tape.hpp"

#include <optional>

#include "diffq/errors.hpp"
#include "diffq/numerics/kernels.hpp"
#include "diffq/numerics/precision.hpp"

namespace diffq::numerics {

namespace {

Tensor narrowed(Tensor t) {
  const Precision p = precision();
  if (p == Precision::f64 || !t.defined()) return t;
  for (double& v : t.mutable_data()) v = narrow(v, p);
  return t;
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on unbound Var");
  return tape_->value(id_);
}

Var Tape::leaf(Tensor value) {
  if (!value.defined()) throw ShapeError("leaf from undefined tensor");
  Node n;
  n.value = narrowed(std::move(value));
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(OpSpec spec, std::vector<Var> inputs) {
  Node n;
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw std::invalid_argument(spec.name + ": input from a different tape");
    n.inputs.push_back(v.id());
  }
  n.spec = std::move(spec);
  n.value = evaluate(n, Replay::exact);
  if (!tracing_) {
    std::string name = std::move(n.spec.name);
    n.spec = OpSpec{};
    n.spec.name = std::move(name);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor Tape::evaluate(const Node& n, Replay mode) const {
  std::vector<const Tensor*> in;
  in.reserve(n.inputs.size());
  for (NodeId id : n.inputs) in.push_back(&nodes_[id].value);
  const bool sur = mode == Replay::surrogate && n.spec.surrogate;
  Tensor out = sur ? n.spec.surrogate(in) : n.spec.forward(in);
  if (sur && n.anchor.defined()) out = kernels::add(out, n.anchor);
  out = narrowed(std::move(out));
  if (!out.all_finite()) throw NumericError(n.spec.name + ": non-finite output");
  return out;
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id >= nodes_.size()) throw std::invalid_argument("node " + std::to_string(id) + " not on tape");
  return nodes_[id];
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }
bool Tape::is_leaf(NodeId id) const { return node(id).leaf; }
bool Tape::is_quantizer(NodeId id) const { return node(id).spec.is_quantizer(); }
const std::vector<NodeId>& Tape::inputs(NodeId id) const { return node(id).inputs; }
const OpSpec& Tape::spec(NodeId id) const { return node(id).spec; }

void Tape::set_leaf(NodeId id, Tensor value) {
  Node& n = nodes_.at(id);
  if (!n.leaf) throw std::invalid_argument("set_leaf on op node");
  if (value.shape() != n.value.shape()) throw ShapeError("set_leaf shape mismatch");
  n.value = narrowed(std::move(value));
}

void Tape::anchor_surrogates() {
  if (!tracing_) throw std::logic_error("anchor_surrogates on a non-tracing tape");
  for (auto& n : nodes_) {
    if (!n.spec.surrogate) continue;
    std::vector<const Tensor*> in;
    for (NodeId id : n.inputs) in.push_back(&nodes_[id].value);
    n.anchor = kernels::sub(n.value, n.spec.surrogate(in));
  }
}

void Tape::replay(Replay mode) {
  if (!tracing_) throw std::logic_error("replay on a non-tracing tape");
  for (auto& n : nodes_)
    if (!n.leaf) n.value = evaluate(n, mode);
}

std::vector<bool> Tape::reachable_from(NodeId source) const {
  std::vector<bool> r(nodes_.size(), false);
  node(source);
  r[source] = true;
  for (NodeId i = source + 1; i < nodes_.size(); ++i)
    for (NodeId in : nodes_[i].inputs)
      if (r[in]) {
        r[i] = true;
        break;
      }
  return r;
}

std::unordered_map<NodeId, Tensor> gradients(const Tape& tape, Var loss, std::span<const Var> wrt) {
  if (!tape.tracing()) throw std::logic_error("gradients on a non-tracing tape");
  if (&loss.tape() != &tape) throw std::invalid_argument("loss is not on this tape");
  if (tape.value(loss.id()).size() != 1)
    throw ShapeError("gradients: loss must be scalar, got " + shape_string(loss.shape()));

  const std::size_t n = tape.size();
  std::vector<bool> depends(n, false);
  for (const Var& w : wrt) {
    if (&w.tape() != &tape || w.id() >= n) throw std::invalid_argument("gradients: wrt node not on tape");
    depends[w.id()] = true;
  }
  for (NodeId i = 0; i < n; ++i)
    if (!depends[i])
      for (NodeId in : tape.inputs(i))
        if (depends[in]) {
          depends[i] = true;
          break;
        }

  std::vector<std::optional<Tensor>> grads(n);
  if (depends[loss.id()]) grads[loss.id()] = Tensor(tape.value(loss.id()).shape(), 1.0);

  for (NodeId i = loss.id() + 1; i-- > 0;) {
    if (!grads[i] || tape.is_leaf(i)) continue;
    const auto& ins = tape.inputs(i);
    std::vector<bool> needs(ins.size());
    bool any = false;
    for (std::size_t k = 0; k < ins.size(); ++k) any |= (needs[k] = depends[ins[k]]);
    if (!any) continue;
    std::vector<const Tensor*> vals;
    vals.reserve(ins.size());
    for (NodeId in : ins) vals.push_back(&tape.value(in));
    const auto& spec = tape.spec(i);
    if (!spec.backward) throw std::logic_error(spec.name + ": op has no backward rule");
    auto in_grads = spec.backward(*grads[i], vals, tape.value(i), needs);
    for (std::size_t k = 0; k < ins.size(); ++k) {
      if (!needs[k]) continue;
      auto& slot = grads[ins[k]];
      if (!slot)
        slot = std::move(in_grads[k]);
      else
        slot = kernels::add(*slot, in_grads[k]);
    }
  }

  std::unordered_map<NodeId, Tensor> out;
  for (const Var& w : wrt)
    out[w.id()] = grads[w.id()] ? *grads[w.id()] : Tensor(tape.value(w.id()).shape(), 0.0);
  return out;
}

}  // namespace diffq::numerics
