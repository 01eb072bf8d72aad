#include <algorithm>
#include <stdexcept>

#include "routing/errors.hpp"
#include "routing/policy.hpp"

namespace routing::policy {
namespace {

void check_action_count(std::size_t count, std::size_t width) {
  if (count == 0 || count > width)
    throw std::out_of_range("policy: action count " + std::to_string(count) + " outside [1, " + std::to_string(width) + "]");
}

std::size_t epsilon_greedy(std::span<const double> values, double epsilon, bool explore, Rng& rng, bool& greedy) {
  greedy = true;
  if (explore && epsilon > 0.0 && rng.bernoulli(epsilon)) {
    greedy = false;
    return rng.uniform_index(values.size());
  }
  return argmax(values);
}

nn::Var half_square(const nn::Var& d) { return nn::scale(nn::mul(d, d), 0.5); }

double target_of(const StepFeedback& step, const Episode& episode) {
  return step.reward + (step.next_value ? *step.next_value : episode.final_reward);
}

std::optional<TableKey> key_if_tabular(const PolicyConfig& config, const RoutingState& state) {
  if (config.approximator == Approximator::tabular) return table_key(state);
  return std::nullopt;
}

}  // namespace

QLearningPolicy::QLearningPolicy(PolicyConfig config, std::unique_ptr<Head> head)
    : Policy(config), head_(std::move(head)) {}

Decision QLearningPolicy::select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                                 bool explore) {
  check_action_count(action_count, head_->width());
  Decision d;
  d.key = key_if_tabular(config_, state);
  nn::Var q = head_->forward(graph, state);
  std::span<const double> values = q.value().data().first(action_count);
  d.action_count = action_count;
  d.action = epsilon_greedy(values, config_.epsilon, explore, rng, d.greedy);
  d.chosen_value = nn::pick(q, d.action);
  return d;
}

nn::Var QLearningPolicy::update_value(nn::Graph& graph, const Episode& episode) {
  nn::Var total = graph.constant(nn::Tensor::scalar(0.0));
  for (const StepFeedback& step : episode.steps) {
    const double target = target_of(step, episode);
    total = nn::add(total, half_square(nn::add_scalar(step.decision->chosen_value, -target)));
  }
  return total;
}

double QLearningPolicy::bootstrap_value(const RoutingState& state, std::size_t action_count) {
  check_action_count(action_count, head_->width());
  const std::vector<double> q = head_->peek(state);
  return *std::max_element(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(action_count));
}

AdvantagePolicy::AdvantagePolicy(PolicyConfig config, std::unique_ptr<Head> advantage_head,
                                 std::unique_ptr<Head> value_head)
    : Policy(config), advantage_(std::move(advantage_head)), value_(std::move(value_head)) {
  if (value_->width() != 1) throw ConfigError("advantage policy: value head must have width 1");
}

Decision AdvantagePolicy::select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                                 bool explore) {
  check_action_count(action_count, advantage_->width());
  Decision d;
  d.key = key_if_tabular(config_, state);
  nn::Var a = advantage_->forward(graph, state);
  nn::Var v = value_->forward(graph, state);
  d.action_count = action_count;
  d.action = epsilon_greedy(a.value().data().first(action_count), config_.epsilon, explore, rng, d.greedy);
  d.chosen_value = nn::pick(a, d.action);
  d.state_value = nn::pick(v, 0);
  return d;
}

nn::Var AdvantagePolicy::update_value(nn::Graph& graph, const Episode& episode) {
  nn::Var total = graph.constant(nn::Tensor::scalar(0.0));
  for (const StepFeedback& step : episode.steps) {
    const double target = target_of(step, episode);
    const double baseline = step.decision->state_value.item();
    total = nn::add(total, half_square(nn::add_scalar(step.decision->state_value, -target)));
    total = nn::add(total, half_square(nn::add_scalar(step.decision->chosen_value, -(target - baseline))));
  }
  return total;
}

std::vector<nn::Parameter*> AdvantagePolicy::parameters() {
  auto out = advantage_->parameters();
  auto v = value_->parameters();
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<double> AdvantagePolicy::advantages(const RoutingState& state, std::size_t action_count) {
  check_action_count(action_count, advantage_->width());
  std::vector<double> a = advantage_->peek(state);
  a.resize(action_count);
  return a;
}

double AdvantagePolicy::bootstrap_value(const RoutingState& state, std::size_t action_count) {
  const std::vector<double> a = advantages(state, action_count);
  return value_->peek(state)[0] + *std::max_element(a.begin(), a.end());
}

}  // namespace routing::policy
