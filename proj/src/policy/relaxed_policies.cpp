#include <cmath>
#include <stdexcept>

#include "routing/errors.hpp"
#include "routing/policy.hpp"

namespace routing::policy {
namespace {

nn::Var restricted_logits(Head& head, nn::Graph& graph, const RoutingState& state, std::size_t action_count) {
  if (action_count == 0 || action_count > head.width())
    throw std::out_of_range("policy: action count " + std::to_string(action_count) + " outside [1, " +
                            std::to_string(head.width()) + "]");
  nn::Var logits = head.forward(graph, state);
  return action_count == head.width() ? logits : nn::slice(logits, 0, action_count);
}

std::vector<double> softmax_values(const nn::Tensor& logits) {
  std::vector<double> p = logits.values();
  double peak = p[0];
  for (double v : p) peak = std::max(peak, v);
  double total = 0.0;
  for (double& v : p) total += (v = std::exp(v - peak));
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

RelaxedDraw draw_relaxed(nn::Graph& graph, const nn::Var& log_probs, double tau, Rng& rng, bool conditional) {
  if (!(tau > 0.0)) throw ConfigError("relaxed sample: temperature must be positive");
  const std::size_t n = log_probs.value().size();
  std::vector<double> noise(n);
  for (double& g : noise) g = rng.gumbel();

  RelaxedDraw draw;
  std::vector<double> perturbed(n);
  for (std::size_t i = 0; i < n; ++i) perturbed[i] = log_probs.value()[i] + noise[i];
  draw.action = argmax(perturbed);
  draw.relaxed = nn::softmax(nn::scale(nn::add(log_probs, graph.constant(nn::Tensor::vector(noise))), 1.0 / tau));
  if (!conditional) return draw;

  // Conditional Gumbel sample given argmax = b: the winner gets -log(-log v_b);
  // every other coordinate is -log(-log v_i / pi_i - log v_b), which stays below it.
  const std::size_t b = draw.action;
  std::vector<double> scaled_noise(n), offset(n), mask(n, 1.0), winner(n, 0.0);
  for (double& v : scaled_noise) v = -std::log(rng.uniform());
  const double top = scaled_noise[b];
  std::fill(offset.begin(), offset.end(), top);
  mask[b] = 0.0;
  winner[b] = -std::log(top);
  scaled_noise[b] = 1.0;  // masked out below; any positive value keeps log finite

  nn::Var inv_probs = nn::exp(nn::scale(log_probs, -1.0));
  nn::Var inner = nn::add(nn::mul(graph.constant(nn::Tensor::vector(scaled_noise)), inv_probs),
                          graph.constant(nn::Tensor::vector(offset)));
  nn::Var others = nn::scale(nn::log(inner), -1.0);
  nn::Var conditional_z = nn::add(nn::mul(others, graph.constant(nn::Tensor::vector(mask))),
                                  graph.constant(nn::Tensor::vector(winner)));
  draw.relaxed_conditional = nn::softmax(nn::scale(conditional_z, 1.0 / tau));
  return draw;
}

GumbelPolicy::GumbelPolicy(PolicyConfig config, std::unique_ptr<Head> head) : Policy(config), head_(std::move(head)) {}

Decision GumbelPolicy::select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                              bool explore) {
  Decision d;
  if (config_.approximator == Approximator::tabular) d.key = table_key(state);
  nn::Var logits = restricted_logits(*head_, graph, state, action_count);
  d.action_count = action_count;
  d.probs = softmax_values(logits.value());
  if (!explore) {
    d.action = argmax(logits.value().data());
    return d;
  }
  std::vector<double> noise(action_count);
  std::vector<double> perturbed(action_count);
  for (std::size_t i = 0; i < action_count; ++i) {
    noise[i] = rng.gumbel();
    perturbed[i] = logits.value()[i] + noise[i];
  }
  d.action = argmax(perturbed);
  d.relaxed =
      nn::softmax(nn::scale(nn::add(logits, graph.constant(nn::Tensor::vector(noise))), 1.0 / config_.tau));
  nn::Var chosen = nn::pick(d.relaxed, d.action);
  d.straight_through = nn::add_scalar(nn::sub(chosen, nn::detach(chosen)), 1.0);
  return d;
}

nn::Var GumbelPolicy::update_relaxed(nn::Graph& graph, const Episode& episode) {
  for (const StepFeedback& step : episode.steps)
    if (!step.decision->straight_through.valid()) throw std::logic_error("gumbel: decision was not a relaxed sample");
  // The gradient reaches the logits through the straight-through weights the
  // engine multiplied into the activations; nothing further to add here.
  return graph.constant(nn::Tensor::scalar(0.0));
}

ControlVariate::ControlVariate(std::size_t input_width, std::size_t hidden, Rng& rng) : input_width_(input_width) {
  auto uniform = [&rng](nn::Shape shape, double bound) {
    nn::Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
  };
  const double b1 = 1.0 / std::sqrt(static_cast<double>(input_width));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  params_.push_back(std::make_unique<nn::Parameter>("control.W1", uniform({hidden, input_width}, b1)));
  params_.push_back(std::make_unique<nn::Parameter>("control.b1", nn::Tensor({hidden})));
  params_.push_back(std::make_unique<nn::Parameter>("control.W2", uniform({1, hidden}, b2)));
  params_.push_back(std::make_unique<nn::Parameter>("control.b2", nn::Tensor({1})));
}

nn::Var ControlVariate::evaluate(nn::Graph& graph, const nn::Var& relaxed, bool bind_params) const {
  const std::size_t n = relaxed.value().size();
  if (n > input_width_)
    throw ShapeError("control variate: input width " + std::to_string(n) + " exceeds " + std::to_string(input_width_));
  nn::Var x = n == input_width_ ? relaxed : nn::concat(relaxed, graph.constant(nn::Tensor({input_width_ - n})));
  auto bind = [&](nn::Parameter& p) { return bind_params ? graph.param(p) : graph.constant(p.value); };
  nn::Var hidden = nn::tanh(nn::add(nn::matmul(bind(*params_[0]), x), bind(*params_[1])));
  return nn::pick(nn::add(nn::matmul(bind(*params_[2]), hidden), bind(*params_[3])), 0);
}

std::vector<nn::Parameter*> ControlVariate::parameters() const {
  std::vector<nn::Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

nn::Var relax_surrogate(nn::Graph& graph, const ControlVariate* control, const nn::Var& log_prob,
                        const nn::Var& relaxed, const nn::Var& relaxed_conditional, double f) {
  if (control == nullptr) return nn::scale(log_prob, -f);
  nn::Var c_z = control->evaluate(graph, relaxed, false);
  nn::Var c_cond = control->evaluate(graph, relaxed_conditional, false);
  const double coefficient = f - c_cond.item();
  nn::Var estimator = nn::sub(nn::add(nn::scale(log_prob, coefficient), c_z), c_cond);
  nn::Var fit = nn::add_scalar(control->evaluate(graph, nn::detach(relaxed_conditional), true), -f);
  return nn::add(nn::scale(estimator, -1.0), nn::scale(nn::mul(fit, fit), 0.5));
}

RelaxPolicy::RelaxPolicy(PolicyConfig config, std::unique_ptr<Head> head, std::size_t action_space, Rng& rng)
    : Policy(config), head_(std::move(head)), control_(action_space, config.control_variate_hidden, rng) {}

Decision RelaxPolicy::select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                             bool explore) {
  Decision d;
  if (config_.approximator == Approximator::tabular) d.key = table_key(state);
  nn::Var log_probs = nn::log_softmax(restricted_logits(*head_, graph, state, action_count));
  d.action_count = action_count;
  d.probs = softmax_values(log_probs.value());
  if (!explore) {
    d.action = argmax(d.probs);
    return d;
  }
  RelaxedDraw draw = draw_relaxed(graph, log_probs, config_.tau, rng, true);
  d.action = draw.action;
  d.relaxed = draw.relaxed;
  d.relaxed_conditional = draw.relaxed_conditional;
  d.log_prob = nn::pick(log_probs, d.action);
  return d;
}

nn::Var RelaxPolicy::update_relaxed(nn::Graph& graph, const Episode& episode) {
  nn::Var total = graph.constant(nn::Tensor::scalar(0.0));
  const ControlVariate* control = config_.freeze_control_variate ? nullptr : &control_;
  for (const StepFeedback& step : episode.steps) {
    const Decision& d = *step.decision;
    if (!d.relaxed_conditional.valid()) throw std::logic_error("relax: decision was not a relaxed sample");
    total = nn::add(total, relax_surrogate(graph, control, d.log_prob, d.relaxed, d.relaxed_conditional,
                                           episode.total_return));
  }
  return total;
}

std::vector<nn::Parameter*> RelaxPolicy::parameters() {
  auto out = head_->parameters();
  if (!config_.freeze_control_variate) {
    auto c = control_.parameters();
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

}  // namespace routing::policy
