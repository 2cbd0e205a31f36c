// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/graph.hpp"

#include <cstring>

#include "promma/errors.hpp"

namespace promma {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  grad.fill(0.0);
}

std::uint64_t checksum(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, p] : params) {
    for (double v : p->value.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

void zero_grads(const ParamList& params) {
  for (const auto& [name, p] : params) p->zero_grad();
}

void set_frozen(const ParamList& params, bool frozen) {
  for (const auto& [name, p] : params) p->frozen = frozen;
}

std::size_t count_values(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += p->value.size();
  return n;
}

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor t) {
  require_finite(t, "constant");
  Node n;
  n.op = "constant";
  n.value = std::move(t);
  n.leaf = true;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::input(Tensor t, bool requires_grad) {
  Var v = constant(std::move(t));
  nodes_[v.id].op = "input";
  nodes_[v.id].needs_grad = requires_grad && record_;
  return v;
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  require_finite(p.value, "parameter");
  Node n;
  n.op = "param";
  n.value = p.value;
  n.leaf = true;
  n.param = &p;
  n.needs_grad = !p.frozen && record_;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return {this, id};
}

Var Graph::emit(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn fn, const char* op) {
  require_finite(value, op);
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (record_) {
    for (auto id : inputs) n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
    if (n.needs_grad) n.backward = std::move(fn);
    n.inputs = std::move(inputs);
  }
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Graph::grad_buffer(std::uint32_t id) {
  Tensor& g = grads_[id];
  if (g.shape() != nodes_[id].value.shape()) g = Tensor(nodes_[id].value.shape());
  return g;
}

Tensor Graph::grad(Var v) const {
  const Tensor& g = grads_[v.id];
  if (g.shape() != nodes_[v.id].value.shape()) return Tensor(nodes_[v.id].value.shape());
  return g;
}

void Graph::backward(Var loss, double seed) {
  if (!record_) throw ContractError("backward() on a graph built without recording");
  if (value(loss).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(value(loss).shape()));
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].leaf) grads_[i] = Tensor();
  }
  if (!nodes_[loss.id].needs_grad) return;
  grad_buffer(loss.id)[0] += seed;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.leaf || !n.backward || grads_[i].empty()) continue;
    n.backward(*this, static_cast<std::uint32_t>(i));
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (!n.param || !n.needs_grad || grads_[i].empty()) continue;
    Tensor& pg = n.param->grad;
    if (pg.shape() != n.param->value.shape()) pg = Tensor(n.param->value.shape());
    const Tensor& g = grads_[i];
    for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
    require_finite(pg, "parameter gradient");
    grads_[i] = Tensor();
  }
}

void Graph::zero_grad() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].leaf) grads_[i] = Tensor();
  }
}

}  // namespace promma
