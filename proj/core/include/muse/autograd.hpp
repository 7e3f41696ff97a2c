// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "muse/tensor.hpp"

namespace muse {

using ParamId = std::size_t;

/// Named, ordered collection of learnable tensors.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const Tensor& value(ParamId id) const { return values_.at(id); }
  Tensor& value(ParamId id) { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  std::optional<ParamId> find(const std::string& name) const;

  /// Total scalar count over all parameters.
  std::size_t scalar_count() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

class Graph;

/// Handle to a node on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

using Gradients = std::map<ParamId, Tensor>;

/// Record-on-execute tape.
///
/// Nodes are appended in execution order; `backward` walks them in reverse
/// insertion order exactly once. A node records a backward closure only when
/// at least one input requires a gradient, so graphs built from constants
/// carry no saved state beyond their values.
class Graph {
 public:
  /// Receives the output gradient and one slot per input; a slot is null
  /// when that input does not require a gradient. Closures accumulate (+=).
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  enum class Mode { Training, Inference };

  Graph() = default;
  /// In inference mode parameters bind as constants and nothing is taped.
  explicit Graph(Mode mode) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf that requires a gradient but is not tied to a parameter.
  Var variable(Tensor value);
  /// Leaf bound to a stored parameter; repeated calls return the same node.
  Var param(const ParamStore& store, ParamId id);

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar loss. Returns gradients for every
  /// parameter leaf reached; other gradients are available through `grad`.
  Gradients backward(Var loss);

  /// Gradient of the last backward pass with respect to `v` (zeros if unreached).
  Tensor grad(Var v) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<ParamId> param;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<ParamId, std::size_t> param_nodes_;
  const ParamStore* bound_store_ = nullptr;
  std::vector<Tensor> grads_;
  Mode mode_ = Mode::Training;
};

}  // namespace muse
