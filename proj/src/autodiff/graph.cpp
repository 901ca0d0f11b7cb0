#include "mmsurv/autodiff/graph.hpp"

#include <algorithm>

#include "mmsurv/errors.hpp"

namespace mmsurv::ad {

Parameter& ParameterStore::add(std::string name, Tensor init) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->grad = Tensor(init.shape());
  p->name = std::move(name);
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::at(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParameterStore::at(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const auto& p) { return p->name == name; });
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (std::string_view(p->name).starts_with(prefix)) out.push_back(p.get());
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

void ParameterStore::set_frozen(std::string_view prefix, bool frozen) {
  for (auto* p : with_prefix(prefix)) p->frozen = frozen;
}

std::vector<Tensor> ParameterStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw ContractError("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i]->value.shape()) {
      throw ShapeError("snapshot shape mismatch for '" + params_[i]->name + "'");
    }
    params_[i]->value = values[i];
  }
}

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Tensor value) {
  if (check_finite_ && !value.all_finite()) throw NumericError("non-finite constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value) {
  if (check_finite_ && !value.all_finite()) throw NumericError("non-finite variable");
  nodes_.push_back(Node{"variable", std::move(value), {}, {}, {}, nullptr, true});
  return {this, nodes_.size() - 1};
}

Var Graph::parameter(Parameter& p) {
  if (p.frozen) {
    nodes_.push_back(Node{"frozen:" + p.name, p.value, {}, {}, {}, nullptr, false});
  } else {
    nodes_.push_back(Node{"param:" + p.name, p.value, {}, {}, {}, &p, true});
  }
  return {this, nodes_.size() - 1};
}

Var Graph::record(std::string op, Tensor value, const std::vector<Var>& inputs,
                  BackwardFn backward) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericError("non-finite value produced by op '" + op + "' (node " +
                       std::to_string(nodes_.size()) + ")");
  }
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (&in.graph() != this) throw ContractError("op '" + node.op + "' mixes graphs");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

const Tensor& Graph::grad(Var v) const {
  const auto& node = nodes_[v.id()];
  if (node.grad.empty()) throw ContractError("no gradient recorded for node " + std::to_string(v.id()));
  return node.grad;
}

void Graph::backward(Var loss, bool accumulate) {
  if (&loss.graph() != this) throw ContractError("loss belongs to another graph");
  const auto& lv = nodes_[loss.id()].value;
  if (lv.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_to_string(lv.shape()));
  }

  for (auto& n : nodes_) n.grad = Tensor();
  std::vector<char> reachable(nodes_.size(), 0);
  reachable[loss.id()] = 1;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (!reachable[i]) continue;
    for (auto in : nodes_[i].inputs) reachable[in] = 1;
  }
  if (!accumulate) {
    for (std::size_t i = 0; i <= loss.id(); ++i) {
      if (reachable[i] && nodes_[i].param) nodes_[i].param->grad.fill(0.0);
    }
  }

  nodes_[loss.id()].grad = Tensor(lv.shape(), 1.0);
  std::vector<Tensor*> input_grads;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!reachable[i] || !node.requires_grad || node.grad.empty()) continue;
    if (node.param) {
      auto acc = node.param->grad.data();
      auto g = node.grad.data();
      for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
      continue;
    }
    if (!node.backward) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      Node& in = nodes_[node.inputs[k]];
      if (!in.requires_grad) continue;
      if (in.grad.empty()) in.grad = Tensor(in.value.shape());
      input_grads[k] = &in.grad;
    }
    node.backward(node.value, node.grad, input_grads);
  }
}

}  // namespace mmsurv::ad
