#pragma once
// Tape-based reverse-mode differentiation over small dense tensors.
//
// A Graph is a single-use tape: build values with the ops below, call
// backward() once on a scalar loss, and gradients are added into every
// Parameter that was bound into the tape. A second backward() on the same
// tape is rejected.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "routing/tensor.hpp"

namespace routing::nn {

// Trainable tensor. Gradient accumulates additively across backward calls
// until an optimizer step (or zero_grad) clears it.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  std::vector<Tensor> state;  // optimizer-owned moments, same shape as value
  std::uint64_t steps = 0;

  void zero_grad() { grad.fill(0.0); }
  std::size_t size() const { return value.size(); }
};

class Graph;

// Handle to a node on a Graph. Cheap to copy; only valid while its Graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  double item() const { return value().item(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Binds a parameter; repeated binds of the same parameter share one node.
  Var param(Parameter& p);

  // Appends an op node. Throws NumericError if `value` is not finite.
  Var record(std::string_view op, Tensor value, std::vector<std::size_t> parents, BackwardFn fn);

  void backward(const Var& loss);
  bool backward_done() const { return backward_done_; }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  // Gradient slot of a node during backward; nullptr when no parameter
  // depends on that node.
  Tensor* grad_slot(std::size_t id);
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

// Primitive ops. Shape mismatches throw ShapeError naming the op and shapes.
Var matmul(const Var& a, const Var& b);  // [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m]
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var scale_by(const Var& a, const Var& s);  // a * s for a single-element s
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var softmax(const Var& a);      // rank-1
Var log_softmax(const Var& a);  // rank-1
Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);
Var pick(const Var& a, std::size_t index);
Var slice(const Var& a, std::size_t begin, std::size_t count);  // rank-1
Var concat(const Var& a, const Var& b);                          // rank-1
Var detach(const Var& a);
Var mse_loss(const Var& prediction, const Tensor& target);
Var cross_entropy(const Var& logits, std::size_t target_class);

}  // namespace routing::nn
