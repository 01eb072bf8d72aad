#include <cmath>

#include "routing/errors.hpp"
#include "routing/policy.hpp"

namespace routing::policy {

Strategy parse_strategy(std::string_view name) {
  if (name == "q-learning" || name == "q") return Strategy::q_learning;
  if (name == "advantage") return Strategy::advantage;
  if (name == "reinforce") return Strategy::reinforce;
  if (name == "egreedy-reinforce") return Strategy::egreedy_reinforce;
  if (name == "wpl") return Strategy::wpl;
  if (name == "gumbel") return Strategy::gumbel;
  if (name == "relax") return Strategy::relax;
  throw ConfigError("unknown policy strategy '" + std::string(name) + "'");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::q_learning:
      return "q-learning";
    case Strategy::advantage:
      return "advantage";
    case Strategy::reinforce:
      return "reinforce";
    case Strategy::egreedy_reinforce:
      return "egreedy-reinforce";
    case Strategy::wpl:
      return "wpl";
    case Strategy::gumbel:
      return "gumbel";
    case Strategy::relax:
      return "relax";
  }
  return "unknown";
}

Approximator parse_approximator(std::string_view name) {
  if (name == "tabular") return Approximator::tabular;
  if (name == "neural") return Approximator::neural;
  throw ConfigError("unknown policy approximator '" + std::string(name) + "'");
}

std::string_view to_string(Approximator a) { return a == Approximator::tabular ? "tabular" : "neural"; }

bool is_value_based(Strategy s) { return s == Strategy::q_learning || s == Strategy::advantage; }

bool is_relaxed(Strategy s) { return s == Strategy::gumbel || s == Strategy::relax; }

void PolicyConfig::validate() const {
  if (!std::isfinite(table_init)) throw ConfigError("policy: table init must be finite");
  if (gamma != 1.0) throw ConfigError("policy: discount must be exactly 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("policy: learning rate must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("policy: epsilon must lie in [0, 1]");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("policy: temperature must be positive");
  if (!(baseline_decay >= 0.0 && baseline_decay <= 1.0)) throw ConfigError("policy: baseline decay must lie in [0, 1]");
  if (!(wpl_floor > 0.0 && wpl_floor < 1.0)) throw ConfigError("policy: wpl floor must lie in (0, 1)");
  if (!(wpl_value_rate > 0.0 && wpl_value_rate <= 1.0)) throw ConfigError("policy: wpl value rate must lie in (0, 1]");
  if (strategy == Strategy::wpl && approximator != Approximator::tabular)
    throw ConfigError("policy: wpl keeps a probability table and needs the tabular approximator");
  if (strategy == Strategy::relax && control_variate_hidden == 0)
    throw ConfigError("policy: relax control variate needs a positive hidden width");
}

Policy::Policy(PolicyConfig config) : config_(config) { config_.validate(); }

double Policy::bootstrap_value(const RoutingState&, std::size_t) { return 0.0; }

std::unique_ptr<Head> make_head(const PolicyConfig& config, const PolicyContext& context, std::size_t width, Rng& rng) {
  if (config.approximator == Approximator::tabular) return std::make_unique<TableHead>(width, config.table_init);
  return std::make_unique<NeuralHead>(width, context.state_width, context.max_depth, config.hidden, rng);
}

std::unique_ptr<Policy> make_policy(const PolicyConfig& config, const PolicyContext& context) {
  config.validate();
  if (context.action_space == 0) throw ConfigError("policy: empty action space");
  Rng rng(context.seed);
  switch (config.strategy) {
    case Strategy::q_learning:
      return std::make_unique<QLearningPolicy>(config, make_head(config, context, context.action_space, rng));
    case Strategy::advantage: {
      auto advantage = make_head(config, context, context.action_space, rng);
      auto value = make_head(config, context, 1, rng);
      return std::make_unique<AdvantagePolicy>(config, std::move(advantage), std::move(value));
    }
    case Strategy::reinforce:
    case Strategy::egreedy_reinforce:
      return std::make_unique<ReinforcePolicy>(config, make_head(config, context, context.action_space, rng));
    case Strategy::wpl:
      return std::make_unique<WplPolicy>(config, context.action_space);
    case Strategy::gumbel:
      return std::make_unique<GumbelPolicy>(config, make_head(config, context, context.action_space, rng));
    case Strategy::relax: {
      auto head = make_head(config, context, context.action_space, rng);
      return std::make_unique<RelaxPolicy>(config, std::move(head), context.action_space, rng);
    }
  }
  throw ConfigError("policy: unknown strategy");
}

}  // namespace routing::policy
