#include "routing/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "routing/errors.hpp"

namespace routing::train {

FinalRewardKind parse_final_reward(std::string_view name) {
  if (name == "plus-minus-one" || name == "pm1") return FinalRewardKind::plus_minus_one;
  if (name == "negative-loss") return FinalRewardKind::negative_loss;
  throw ConfigError("unknown final reward '" + std::string(name) + "'");
}

std::string_view to_string(FinalRewardKind kind) {
  return kind == FinalRewardKind::plus_minus_one ? "plus-minus-one" : "negative-loss";
}

void RewardConfig::validate(std::size_t action_space) const {
  if (!std::isfinite(alpha) || alpha < -1.0 || alpha > 1.0)
    throw ConfigError("reward: alpha must lie in [-1, 1], got " + std::to_string(alpha));
  if (!std::isfinite(kappa) || kappa < 0.0) throw ConfigError("reward: kappa must be >= 0");
  if (window_for(action_space) < action_space)
    throw ConfigError("reward: window " + std::to_string(window) + " is smaller than the action space " +
                      std::to_string(action_space));
}

UsageWindow::UsageWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("usage window: capacity must be positive");
}

void UsageWindow::record(std::size_t action) {
  if (action >= counts_.size()) counts_.resize(action + 1, 0);
  recent_.push_back(action);
  ++counts_[action];
  if (recent_.size() > capacity_) {
    --counts_[recent_.front()];
    recent_.pop_front();
  }
}

std::size_t UsageWindow::count(std::size_t action) const { return action < counts_.size() ? counts_[action] : 0; }

double UsageWindow::frequency(std::size_t action) const {
  if (recent_.empty()) return 0.0;
  return static_cast<double>(count(action)) / static_cast<double>(recent_.size());
}

double final_reward(const RewardConfig& config, const nn::Tensor& prediction, std::optional<std::size_t> target_class,
                    double model_loss) {
  if (config.final_kind == FinalRewardKind::negative_loss) return -model_loss;
  if (!target_class) throw ConfigError("reward: plus-minus-one needs a class target");
  const std::size_t predicted = policy::argmax(prediction.values());
  return predicted == *target_class ? 1.0 : -1.0;
}

double reg_reward(const RewardConfig& config, const UsageWindow& window, std::size_t action, std::size_t trajectory_length) {
  if (trajectory_length == 0) throw std::invalid_argument("reg_reward: empty trajectory");
  return config.alpha / static_cast<double>(trajectory_length) * window.frequency(action);
}

double squash_multiplier(const RewardConfig& config, std::size_t exploratory, std::size_t length) {
  if (length == 0 || exploratory > length) throw std::invalid_argument("squash_multiplier: bad counts");
  return std::pow(1.0 - static_cast<double>(exploratory) / static_cast<double>(length), config.kappa);
}

double squash_multiplier(const RewardConfig& config, const engine::Trajectory& trajectory) {
  return squash_multiplier(config, trajectory.exploratory_count(), trajectory.steps.size());
}

void SplitConfig::validate() const {
  if (!(module_fraction > 0.0 && module_fraction <= 1.0))
    throw ConfigError("split: module fraction must lie in (0, 1]");
}

std::vector<SampleRole> assign_roles(const SplitConfig& config, std::size_t n, std::uint64_t seed) {
  config.validate();
  if (!config.disjoint) return std::vector<SampleRole>(n, SampleRole::both);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, 0x5e1171);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto module_count = static_cast<std::size_t>(std::floor(config.module_fraction * static_cast<double>(n)));
  std::vector<SampleRole> roles(n, SampleRole::router_only);
  for (std::size_t i = 0; i < module_count; ++i) roles[order[i]] = SampleRole::module_only;
  return roles;
}

Trainer::Trainer(engine::RouterArchitecture& arch, engine::ModuleBanks& banks, TrainConfig config)
    : arch_(arch), banks_(banks), config_(std::move(config)) {
  action_space_ = banks_.bank_for(0).action_space_size();
  config_.reward.validate(action_space_);
  config_.module_optimizer.validate();
  config_.router_optimizer.validate();
}

const UsageWindow& Trainer::window(std::size_t subrouter, std::size_t depth) { return slot(subrouter, depth); }

UsageWindow& Trainer::slot(std::size_t subrouter, std::size_t depth) {
  auto key = std::make_pair(subrouter, depth);
  auto it = windows_.find(key);
  if (it == windows_.end()) it = windows_.emplace(key, UsageWindow(config_.reward.window_for(action_space_))).first;
  return it->second;
}

nn::Var Trainer::model_loss(const nn::Var& output, const Sample& sample) const {
  if (config_.loss == LossKind::cross_entropy) {
    if (!sample.label) throw ConfigError("train: cross-entropy loss needs a class label");
    return nn::cross_entropy(output, *sample.label);
  }
  return nn::mse_loss(output, sample.y);
}

namespace {

std::string path_string(const engine::Trajectory& traj) {
  std::ostringstream os;
  for (std::size_t i = 0; i < traj.steps.size(); ++i) os << (i ? " -> " : "") << to_string(traj.steps[i].action);
  return os.str();
}

}  // namespace

SampleReport Trainer::train_sample(const Sample& sample, Rng& rng) {
  const std::size_t index = samples_trained_++;
  nn::Graph graph;
  engine::Trajectory traj;
  try {
    traj = engine::route_forward(arch_, banks_, graph, sample.x, sample.meta, rng, true);
    nn::Var loss = model_loss(traj.output, sample);
    const double rf = final_reward(config_.reward, traj.output.value(), sample.label, loss.item());
    traj.final_reward = rf;

    const std::size_t t = traj.steps.size();
    const double bound = std::abs(config_.reward.alpha) / static_cast<double>(t);
    double total = rf;
    for (auto& step : traj.steps) {
      step.immediate_reward = 0.0;
      if (step.action.kind == RoutingAction::Kind::module)
        step.immediate_reward = reg_reward(config_.reward, window(traj.subrouter, step.state.depth), step.decision.action, t);
      if (std::abs(step.immediate_reward) > bound + 1e-15) throw std::logic_error("reg reward exceeds |alpha| / t");
      total += step.immediate_reward;
    }
    for (const auto& step : traj.steps) slot(traj.subrouter, step.state.depth).record(step.decision.action);

    nn::Var objective = loss;
    if (trains_router(sample.role)) {
      // Successor values come from the router that made the next decision,
      // read before any parameter moves.
      std::vector<std::pair<policy::Policy*, policy::Episode>> episodes;
      for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& step = traj.steps[k];
        policy::StepFeedback fb{&step.decision, step.immediate_reward, std::nullopt};
        if (k + 1 < traj.steps.size()) {
          const auto& next = traj.steps[k + 1];
          fb.next_value = next.router->bootstrap_value(next.state, next.decision.action_count);
        }
        auto it = std::find_if(episodes.begin(), episodes.end(), [&](const auto& e) { return e.first == step.router; });
        if (it == episodes.end()) {
          episodes.emplace_back(step.router, policy::Episode{{}, rf, total});
          it = std::prev(episodes.end());
        }
        it->second.steps.push_back(fb);
      }
      if (traj.dispatch_decision) {
        policy::Episode ep{{policy::StepFeedback{&*traj.dispatch_decision, 0.0, std::nullopt}}, rf, total};
        episodes.emplace_back(arch_.dispatcher(), std::move(ep));
      }
      for (auto& [router, ep] : episodes) {
        nn::Var rl = router->update(graph, ep);
        if (rl.valid()) objective = nn::add(objective, rl);
      }
    }

    graph.backward(objective);

    auto module_params = banks_.parameters();
    auto router_params = arch_.parameters();
    const double squash = squash_multiplier(config_.reward, traj);
    nn::optimizer_step(module_params, config_.module_optimizer, trains_modules(sample.role) ? squash : 0.0);
    nn::optimizer_step(router_params, config_.router_optimizer, trains_router(sample.role) ? 1.0 : 0.0);

    SampleReport report;
    report.loss = loss.item();
    report.final_reward = rf;
    report.total_return = total;
    report.squash = squash;
    report.exploratory = traj.exploratory_count();
    report.path = traj.actions();
    return report;
  } catch (const NumericError& e) {
    throw NumericError("sample " + std::to_string(index) + " path [" + path_string(traj) + "]: " + e.what());
  }
}

StepMetrics Trainer::train_step(std::span<const Sample> batch, Rng& rng) {
  StepMetrics m;
  std::size_t explored = 0, decisions = 0;
  for (const auto& s : batch) {
    SampleReport r = train_sample(s, rng);
    m.mean_loss += r.loss;
    m.mean_return += r.total_return;
    explored += r.exploratory;
    decisions += r.path.size();
    ++m.samples;
  }
  if (m.samples > 0) {
    m.mean_loss /= static_cast<double>(m.samples);
    m.mean_return /= static_cast<double>(m.samples);
  }
  if (decisions > 0) m.exploratory_fraction = static_cast<double>(explored) / static_cast<double>(decisions);
  return m;
}

EvalResult Trainer::evaluate(std::span<const Sample> samples) {
  EvalResult out;
  if (samples.empty()) return out;
  Rng unused(0);
  double metric = 0.0;
  for (const auto& s : samples) {
    nn::Graph graph;
    engine::Trajectory traj = engine::route_forward(arch_, banks_, graph, s.x, s.meta, unused, false);
    nn::Var loss = model_loss(traj.output, s);
    out.mean_loss += loss.item();
    if (config_.loss == LossKind::cross_entropy)
      metric += policy::argmax(traj.output.value().values()) == *s.label ? 1.0 : 0.0;
    else
      metric += loss.item();
    for (const auto& step : traj.steps) {
      auto& counts = out.usage["d" + std::to_string(step.state.depth)];
      const std::size_t width = banks_.bank_for(step.state.depth).action_space_size();
      if (counts.size() < width) counts.resize(width, 0);
      ++counts[step.decision.action];
    }
    if (arch_.kind() == engine::ArchitectureKind::dispatched) {
      auto& counts = out.usage["dispatch"];
      if (counts.size() < arch_.subrouter_count()) counts.resize(arch_.subrouter_count(), 0);
      ++counts[traj.subrouter];
    }
  }
  const double n = static_cast<double>(samples.size());
  out.mean_loss /= n;
  out.metric = metric / n;
  return out;
}

}  // namespace routing::train
