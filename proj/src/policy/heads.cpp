#include <algorithm>
#include <cmath>

#include "routing/errors.hpp"
#include "routing/policy.hpp"

namespace routing::policy {

TableKey table_key(const RoutingState& state) {
  if (!state.meta) throw ConfigError("tabular policy: state carries no meta label (depth " + std::to_string(state.depth) + ")");
  return {*state.meta, state.depth};
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

nn::Parameter& TableHead::row(const TableKey& key) {
  auto it = rows_.find(key);
  if (it == rows_.end()) {
    nn::Tensor init({width_});
    init.fill(init_);
    it = rows_
             .emplace(std::piecewise_construct, std::forward_as_tuple(key),
                      std::forward_as_tuple("table[" + std::to_string(key.first) + "," + std::to_string(key.second) + "]",
                                            std::move(init)))
             .first;
  }
  return it->second;
}

nn::Var TableHead::forward(nn::Graph& graph, const RoutingState& state) { return graph.param(row(table_key(state))); }

std::vector<double> TableHead::peek(const RoutingState& state) {
  auto it = rows_.find(table_key(state));
  if (it == rows_.end()) return std::vector<double>(width_, init_);
  return it->second.value.values();
}

std::vector<nn::Parameter*> TableHead::parameters() {
  std::vector<nn::Parameter*> out;
  out.reserve(rows_.size());
  for (auto& [key, p] : rows_) out.push_back(&p);
  return out;
}

NeuralHead::NeuralHead(std::size_t width, std::size_t state_width, std::size_t max_depth, std::size_t hidden, Rng& rng)
    : width_(width), state_width_(state_width), max_depth_(std::max<std::size_t>(max_depth, 1)) {
  const std::size_t in = state_width_ + max_depth_;
  auto uniform = [&rng](nn::Shape shape, double bound) {
    nn::Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
  };
  auto add = [this](std::string name, nn::Tensor t) {
    params_.push_back(std::make_unique<nn::Parameter>(std::move(name), std::move(t)));
  };
  if (hidden == 0) {
    add("router.W", uniform({width_, in}, 1.0 / std::sqrt(static_cast<double>(in))));
    add("router.b", nn::Tensor({width_}));
  } else {
    add("router.W1", uniform({hidden, in}, 1.0 / std::sqrt(static_cast<double>(in))));
    add("router.b1", nn::Tensor({hidden}));
    add("router.W2", uniform({width_, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden))));
    add("router.b2", nn::Tensor({width_}));
  }
}

nn::Tensor NeuralHead::encode(const RoutingState& state) const {
  if (!state.activation) throw ConfigError("neural policy: state carries no activation");
  const nn::Tensor& h = *state.activation;
  if (h.size() != state_width_)
    throw ShapeError("neural policy: expects activation width " + std::to_string(state_width_) + ", got " +
                     nn::shape_string(h.shape()));
  std::vector<double> features(state_width_ + max_depth_, 0.0);
  std::copy(h.values().begin(), h.values().end(), features.begin());
  features[state_width_ + std::min(state.depth, max_depth_ - 1)] = 1.0;
  return nn::Tensor::vector(std::move(features));
}

nn::Var NeuralHead::forward(nn::Graph& graph, const RoutingState& state) {
  nn::Var x = graph.constant(encode(state));
  if (params_.size() == 2) return nn::add(nn::matmul(graph.param(*params_[0]), x), graph.param(*params_[1]));
  nn::Var hidden = nn::tanh(nn::add(nn::matmul(graph.param(*params_[0]), x), graph.param(*params_[1])));
  return nn::add(nn::matmul(graph.param(*params_[2]), hidden), graph.param(*params_[3]));
}

std::vector<double> NeuralHead::peek(const RoutingState& state) {
  nn::Graph scratch;
  return forward(scratch, state).value().values();
}

std::vector<nn::Parameter*> NeuralHead::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

}  // namespace routing::policy
