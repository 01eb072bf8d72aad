#include "routing/autodiff.hpp"

#include <stdexcept>

#include "routing/errors.hpp"

namespace routing::nn {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(Tensor::zeros_like(value)) {}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite input of shape " + shape_string(value.shape()));
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' holds non-finite values");
  Node node;
  node.value = p.value;
  node.param = &p;
  node.needs_grad = true;
  Var v = push(std::move(node));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Graph::record(std::string_view op, Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  if (!value.all_finite())
    throw NumericError(std::string(op) + ": produced non-finite values (shape " + shape_string(value.shape()) + ")");
  Node node;
  node.value = std::move(value);
  for (std::size_t p : parents) node.needs_grad = node.needs_grad || nodes_[p].needs_grad;
  node.parents = std::move(parents);
  if (node.needs_grad) node.backward = std::move(fn);
  return push(std::move(node));
}

Tensor* Graph::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  return n.needs_grad ? &n.grad : nullptr;
}

void Graph::backward(const Var& loss) {
  if (loss.graph_ != this) throw std::logic_error("backward: loss belongs to a different graph");
  if (backward_done_) throw std::logic_error("backward: tape already consumed; re-run forward first");
  if (nodes_[loss.id()].value.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(nodes_[loss.id()].value.shape()));
  backward_done_ = true;

  for (std::size_t i = 0; i <= loss.id(); ++i)
    if (nodes_[i].needs_grad) nodes_[i].grad = Tensor::zeros_like(nodes_[i].value);
  if (!nodes_[loss.id()].needs_grad) return;
  nodes_[loss.id()].grad[0] = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

}  // namespace routing::nn
