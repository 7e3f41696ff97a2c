// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/autograd.hpp"

#include "muse/error.hpp"

namespace muse {

ParamId ParamStore::add(std::string name, Tensor value) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : values_) n += t.numel();
  return n;
}

const Tensor& Var::value() const { return graph->value(*this); }
bool Var::requires_grad() const { return graph->requires_grad(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::param(const ParamStore& store, ParamId id) {
  if (bound_store_ != nullptr && bound_store_ != &store) {
    throw ContractError("graph already bound to a different parameter store");
  }
  bound_store_ = &store;
  if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.value = store.value(id);
  n.requires_grad = mode_ == Mode::Training;
  n.param = id;
  Var v = push(std::move(n));
  param_nodes_.emplace(id, v.id);
  return v;
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph != this) throw ContractError("op mixes variables from different graphs");
    n.inputs.push_back(in.id);
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) {
    n.backward = std::move(backward);
  } else {
    n.inputs.clear();
  }
  return push(std::move(n));
}

Gradients Graph::backward(Var loss) {
  const Node& root = nodes_.at(loss.id);
  if (root.value.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(root.value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id] = Tensor(root.value.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (grads_[i].empty() || !node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads_[in].empty()) grads_[in] = Tensor(nodes_[in].value.shape(), 0.0);
      slots[k] = &grads_[in];
    }
    node.backward(grads_[i], slots);
    // Interior gradients are no longer needed once propagated.
    if (!node.param && i != loss.id) grads_[i] = Tensor();
  }

  Gradients out;
  for (const auto& [pid, nid] : param_nodes_) {
    if (nid > loss.id) continue;
    out.emplace(pid, grads_[nid].empty() ? Tensor(nodes_[nid].value.shape(), 0.0) : grads_[nid]);
  }
  return out;
}

Tensor Graph::grad(Var v) const {
  if (v.id < grads_.size() && !grads_[v.id].empty()) return grads_[v.id];
  return Tensor(nodes_.at(v.id).value.shape(), 0.0);
}

}  // namespace muse
