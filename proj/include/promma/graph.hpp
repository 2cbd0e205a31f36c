// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "promma/tensor.hpp"

namespace promma {

// A trainable array plus its gradient accumulator. Frozen parameters enter
// graphs as constants and never receive gradient.
struct Parameter {
  Tensor value;
  Tensor grad;
  bool frozen = false;

  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad();
};

using ParamList = std::vector<std::pair<std::string, Parameter*>>;

// FNV-1a over the raw bits of every value, in list order.
std::uint64_t checksum(const ParamList& params);
void zero_grads(const ParamList& params);
void set_frozen(const ParamList& params, bool frozen);
std::size_t count_values(const ParamList& params);

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Tape of op records in creation order, which is a topological order.
// backward() walks the tape strictly in reverse. With recording off the
// graph only evaluates values; no backward closures are kept.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t out)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor t);
  // A leaf whose gradient is kept in the graph (read it with grad()).
  Var input(Tensor t, bool requires_grad = true);
  // The parameter's value enters once per graph; gradients flow into p.grad
  // unless p is frozen.
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const char* op_name(Var v) const { return nodes_[v.id].op; }
  const std::vector<std::uint32_t>& op_inputs(Var v) const { return nodes_[v.id].inputs; }

  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Gradient of a leaf input after backward(); zeros when none reached it.
  Tensor grad(Var v) const;

  // Seeds d(loss) = seed and accumulates into leaf inputs and parameters.
  // Calling twice without zero_grad() accumulates.
  void backward(Var loss, double seed = 1.0);
  // Zeroes leaf-input gradients held by this graph.
  void zero_grad();

  // Op plumbing.
  Var emit(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn fn, const char* op);
  const Tensor& out_grad(std::uint32_t id) const { return grads_[id]; }
  // Zero-initialised on first access.
  Tensor& grad_buffer(std::uint32_t id);

 private:
  struct Node {
    const char* op = "";
    std::vector<std::uint32_t> inputs;
    Tensor value;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
    bool leaf = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

}  // namespace promma
