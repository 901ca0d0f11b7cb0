#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mmsurv/autodiff/tensor.hpp"

namespace mmsurv::ad {

// A named trainable tensor with its gradient accumulator. Frozen parameters
// enter graphs as constants, so no gradient ever reaches them.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;
};

// Owns parameters in insertion order. Addresses are stable for the lifetime
// of the store, so layers may hold Parameter pointers.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(std::string name, Tensor init);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  // Parameters whose name starts with `prefix`.
  std::vector<Parameter*> with_prefix(std::string_view prefix);

  void zero_grad();
  void set_frozen(std::string_view prefix, bool frozen);

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Graph;

// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Receives the output value and output gradient; adds into the input
// gradients. Entries of `input_grads` are null for inputs that do not need
// a gradient.
using BackwardFn = std::function<void(const Tensor& out_value, const Tensor& out_grad,
                                      std::vector<Tensor*>& input_grads)>;

// Append-only tape. Nodes are recorded in execution order, which is a
// topological order, so backward is a single reverse sweep.
class Graph {
 public:
  explicit Graph(bool check_finite = true) : check_finite_(check_finite) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is kept on the node (readable via grad()).
  Var variable(Tensor value);
  // Leaf bound to a parameter; frozen parameters become constants.
  Var parameter(Parameter& p);

  Var record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const std::string& op_name(Var v) const { return nodes_[v.id()].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse sweep from a single-element loss. Parameter accumulators reached
  // by this graph are zeroed first unless `accumulate` is set.
  void backward(Var loss, bool accumulate = false);

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // Var::value() references must survive push_back
  bool check_finite_;
};

}  // namespace mmsurv::ad
