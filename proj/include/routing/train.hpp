#pragma once
// Reward assembly and the joint router/module update for one sample.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "routing/engine.hpp"
#include "routing/optimizer.hpp"

namespace routing::train {

enum class FinalRewardKind { plus_minus_one, negative_loss };

FinalRewardKind parse_final_reward(std::string_view name);
std::string_view to_string(FinalRewardKind kind);

struct RewardConfig {
  FinalRewardKind final_kind = FinalRewardKind::negative_loss;
  double alpha = 0.0;      // regularization ratio in [-1, 1]
  std::size_t window = 0;  // 0 selects 50 * action space size
  double kappa = 0.0;      // exploratory squash exponent

  void validate(std::size_t action_space) const;
  std::size_t window_for(std::size_t action_space) const { return window == 0 ? 50 * action_space : window; }
};

// Last `capacity` actions chosen at one decision slot.
class UsageWindow {
 public:
  explicit UsageWindow(std::size_t capacity);

  void record(std::size_t action);
  std::size_t count(std::size_t action) const;
  std::size_t observed() const { return recent_.size(); }
  std::size_t capacity() const { return capacity_; }
  // count(a) / observed(), or 0 for an empty window.
  double frequency(std::size_t action) const;

 private:
  std::size_t capacity_;
  std::deque<std::size_t> recent_;
  std::vector<std::size_t> counts_;
};

// +1 / -1 on classification agreement, or the negated model loss.
// plus_minus_one without a class target throws ConfigError.
double final_reward(const RewardConfig& config, const nn::Tensor& prediction, std::optional<std::size_t> target_class,
                    double model_loss);

// (alpha / t) * C(a) with C the windowed selection frequency.
double reg_reward(const RewardConfig& config, const UsageWindow& window, std::size_t action, std::size_t trajectory_length);

// (1 - exploratory / length)^kappa, the factor on the module learning rate.
double squash_multiplier(const RewardConfig& config, std::size_t exploratory, std::size_t length);
double squash_multiplier(const RewardConfig& config, const engine::Trajectory& trajectory);

enum class SampleRole { module_only, router_only, both };

inline bool trains_modules(SampleRole r) { return r != SampleRole::router_only; }
inline bool trains_router(SampleRole r) { return r != SampleRole::module_only; }

struct SplitConfig {
  double module_fraction = 1.0;  // (0, 1]
  bool disjoint = false;         // false: every sample trains both

  void validate() const;
};

// Fixed seeded partition: floor(fraction * n) samples train modules only,
// the rest the router only; or every sample both when not disjoint.
std::vector<SampleRole> assign_roles(const SplitConfig& config, std::size_t n, std::uint64_t seed);

enum class LossKind { mse, cross_entropy };

struct Sample {
  nn::Tensor x;
  nn::Tensor y;                      // regression target (mse)
  std::optional<std::size_t> label;  // class target (cross_entropy)
  std::optional<MetaLabel> meta;
  SampleRole role = SampleRole::both;
};

struct TrainConfig {
  RewardConfig reward;
  nn::OptimizerConfig module_optimizer;
  nn::OptimizerConfig router_optimizer;  // lr is the router's own rate
  LossKind loss = LossKind::mse;
};

// Per-slot action counts; slot "d<depth>" for routing decisions and
// "dispatch" for the dispatcher.
using UsageCounts = std::map<std::string, std::vector<std::size_t>>;

struct SampleReport {
  double loss = 0.0;
  double final_reward = 0.0;
  double total_return = 0.0;
  double squash = 1.0;
  std::size_t exploratory = 0;
  std::vector<RoutingAction> path;
};

struct StepMetrics {
  std::size_t samples = 0;
  double mean_loss = 0.0;
  double mean_return = 0.0;
  double exploratory_fraction = 0.0;
};

struct EvalResult {
  double mean_loss = 0.0;
  double metric = 0.0;  // accuracy for classification, mse for regression
  UsageCounts usage;
};

class Trainer {
 public:
  Trainer(engine::RouterArchitecture& arch, engine::ModuleBanks& banks, TrainConfig config);

  // Forward, rewards, one backward on L + L_RL, then the module step (squashed)
  // and the router step, each gated by the sample's role.
  SampleReport train_sample(const Sample& sample, Rng& rng);
  StepMetrics train_step(std::span<const Sample> batch, Rng& rng);

  // Greedy pass without updates.
  EvalResult evaluate(std::span<const Sample> samples);

  const UsageWindow& window(std::size_t subrouter, std::size_t depth);
  std::size_t samples_trained() const { return samples_trained_; }
  const TrainConfig& config() const { return config_; }

 private:
  UsageWindow& slot(std::size_t subrouter, std::size_t depth);
  nn::Var model_loss(const nn::Var& output, const Sample& sample) const;

  engine::RouterArchitecture& arch_;
  engine::ModuleBanks& banks_;
  TrainConfig config_;
  std::map<std::pair<std::size_t, std::size_t>, UsageWindow> windows_;
  std::size_t samples_trained_ = 0;
  std::size_t action_space_ = 0;
};

}  // namespace routing::train
