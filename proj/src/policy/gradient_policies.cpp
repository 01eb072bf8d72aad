#include <algorithm>
#include <cmath>
#include <numeric>
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

std::vector<double> exp_values(const nn::Tensor& log_probs) {
  std::vector<double> out(log_probs.size());
  std::transform(log_probs.values().begin(), log_probs.values().end(), out.begin(), [](double v) { return std::exp(v); });
  return out;
}

}  // namespace

ReinforcePolicy::ReinforcePolicy(PolicyConfig config, std::unique_ptr<Head> head)
    : Policy(config), head_(std::move(head)) {
  if (config_.strategy != Strategy::reinforce && config_.strategy != Strategy::egreedy_reinforce)
    throw ConfigError("reinforce policy: strategy must be reinforce or egreedy-reinforce");
}

Decision ReinforcePolicy::select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                                 bool explore) {
  Decision d;
  if (config_.approximator == Approximator::tabular) d.key = table_key(state);
  nn::Var log_probs = nn::log_softmax(restricted_logits(*head_, graph, state, action_count));
  d.action_count = action_count;
  d.probs = exp_values(log_probs.value());
  const std::size_t best = argmax(d.probs);

  if (!explore) {
    d.action = best;
  } else if (config_.strategy == Strategy::reinforce) {
    d.action = rng.categorical(d.probs);
  } else {
    const double eps = config_.epsilon;
    if (rng.bernoulli(eps)) {
      d.action = best;
    } else {
      d.action = rng.categorical(d.probs);
      d.greedy = d.action == best;
    }
    d.behavior_prob = eps * (d.action == best ? 1.0 : 0.0) + (1.0 - eps) * d.probs[d.action];
    if (!(d.behavior_prob > 0.0)) throw NumericError("egreedy-reinforce: behaviour probability of the taken action is 0");
    d.importance_weight = d.probs[d.action] / d.behavior_prob;
  }
  d.log_prob = nn::pick(log_probs, d.action);
  return d;
}

nn::Var ReinforcePolicy::update_pg(nn::Graph& graph, const Episode& episode) {
  nn::Var weighted = graph.constant(nn::Tensor::scalar(0.0));
  for (const StepFeedback& step : episode.steps) {
    const Decision& d = *step.decision;
    if (!d.log_prob.valid()) throw std::logic_error("reinforce: decision was not recorded on a tape");
    weighted = nn::add(weighted, nn::scale(d.log_prob, d.importance_weight));
  }
  const double advantage = episode.total_return - baseline_;
  nn::Var loss = nn::scale(weighted, -advantage);
  baseline_ = (1.0 - config_.baseline_decay) * baseline_ + config_.baseline_decay * episode.total_return;
  return loss;
}

std::vector<double> project_to_simplex(std::span<const double> v, double floor) {
  const std::size_t n = v.size();
  if (n == 0) throw std::invalid_argument("project_to_simplex: empty vector");
  const double mass = 1.0 - static_cast<double>(n) * floor;
  if (mass < 0.0) throw ConfigError("project_to_simplex: floor too large for " + std::to_string(n) + " entries");

  std::vector<double> shifted(n);
  for (std::size_t i = 0; i < n; ++i) shifted[i] = v[i] - floor;
  std::vector<double> sorted = shifted;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double threshold = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    running += sorted[j];
    const double candidate = (running - mass) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) threshold = candidate;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(shifted[i] - threshold, 0.0) + floor;
  return out;
}

WplPolicy::WplPolicy(PolicyConfig config, std::size_t action_space) : Policy(config), action_space_(action_space) {
  if (config_.strategy != Strategy::wpl) throw ConfigError("wpl policy: strategy must be wpl");
}

WplPolicy::Row& WplPolicy::row(const TableKey& key, std::size_t action_count) {
  if (action_count == 0 || action_count > action_space_)
    throw std::out_of_range("wpl: action count " + std::to_string(action_count) + " outside [1, " +
                            std::to_string(action_space_) + "]");
  auto it = rows_.find(key);
  if (it == rows_.end()) {
    Row fresh;
    fresh.probs.assign(action_space_, 0.0);
    std::fill_n(fresh.probs.begin(), action_count, 1.0 / static_cast<double>(action_count));
    fresh.values.assign(action_space_, 0.0);
    it = rows_.emplace(key, std::move(fresh)).first;
  }
  return it->second;
}

std::vector<double> WplPolicy::probabilities(const TableKey& key, std::size_t action_count) {
  const Row& r = row(key, action_count);
  std::vector<double> p(r.probs.begin(), r.probs.begin() + static_cast<std::ptrdiff_t>(action_count));
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

void WplPolicy::set_values(const TableKey& key, std::vector<double> values) {
  Row& r = row(key, std::min(values.size(), action_space_));
  std::copy(values.begin(), values.end(), r.values.begin());
}

Decision WplPolicy::select(nn::Graph&, const RoutingState& state, std::size_t action_count, Rng& rng, bool explore) {
  Decision d;
  d.key = table_key(state);
  d.action_count = action_count;
  d.probs = probabilities(*d.key, action_count);
  d.action = explore ? rng.categorical(d.probs) : argmax(d.probs);
  return d;
}

nn::Var WplPolicy::update_pg(nn::Graph& graph, const Episode& episode) {
  for (const StepFeedback& step : episode.steps) {
    const Decision& d = *step.decision;
    if (!d.key) throw std::logic_error("wpl: decision carries no table key");
    const std::size_t n = d.action_count;
    Row& r = row(*d.key, n);
    r.values[d.action] += config_.wpl_value_rate * (episode.total_return - r.values[d.action]);

    const std::vector<double> p = probabilities(*d.key, n);
    double mean_value = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_value += p[i] * r.values[i];
    std::vector<double> stepped(n);
    for (std::size_t i = 0; i < n; ++i) {
      double delta = r.values[i] - mean_value;
      delta *= delta < 0.0 ? p[i] : 1.0 - p[i];
      stepped[i] = p[i] + config_.lr * delta;
    }
    const std::vector<double> projected = project_to_simplex(stepped, config_.wpl_floor);
    std::copy(projected.begin(), projected.end(), r.probs.begin());
  }
  return graph.constant(nn::Tensor::scalar(0.0));
}

}  // namespace routing::policy
