#pragma once
// Router decision strategies behind one select/update contract.
//
// A policy's select() runs during the forward pass and records on the tape
// whatever its update needs (log-probabilities, chosen values, relaxed
// samples). After the trajectory's rewards are known, update() returns the
// policy's scalar loss contribution L_RL; strategies that learn outside the
// tape (WPL) apply their update directly and return a zero constant.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "routing/autodiff.hpp"
#include "routing/rng.hpp"
#include "routing/types.hpp"

namespace routing::policy {

enum class Strategy { q_learning, advantage, reinforce, egreedy_reinforce, wpl, gumbel, relax };
enum class Approximator { tabular, neural };

Strategy parse_strategy(std::string_view name);
std::string_view to_string(Strategy s);
Approximator parse_approximator(std::string_view name);
std::string_view to_string(Approximator a);

bool is_value_based(Strategy s);
bool is_relaxed(Strategy s);

struct PolicyConfig {
  Strategy strategy = Strategy::q_learning;
  Approximator approximator = Approximator::tabular;
  double lr = 0.005;
  // Value-based: probability of a uniformly random exploratory action.
  // egreedy_reinforce: probability of taking the argmax of the policy.
  double epsilon = 0.05;
  double tau = 0.5;             // gumbel, relax
  double baseline_decay = 0.1;  // reinforce, egreedy_reinforce
  double gamma = 1.0;           // fixed; anything else is rejected
  std::size_t hidden = 0;       // neural heads: 0 means a linear head
  double table_init = 0.0;      // initial entry of every new table row
  std::size_t control_variate_hidden = 16;
  bool freeze_control_variate = false;  // relax: c == 0, reduces to REINFORCE
  double wpl_floor = 1e-3;
  double wpl_value_rate = 0.1;

  void validate() const;
};

// Sizes a policy needs at construction.
struct PolicyContext {
  std::size_t action_space = 1;  // full action space of the bank it routes
  std::size_t state_width = 1;   // activation width seen by neural heads
  std::size_t max_depth = 1;     // one-hot depth slots for neural heads
  std::uint64_t seed = 0;
};

using TableKey = std::pair<MetaLabel, std::size_t>;  // (meta, depth)

struct Decision {
  std::size_t action = 0;        // index in the bank's action space
  std::size_t action_count = 0;  // leading actions available at this decision
  // False exactly when the action was exploratory (see the strategies).
  bool greedy = true;
  std::vector<double> probs;  // pi over the available actions, when defined
  double importance_weight = 1.0;
  double behavior_prob = 1.0;  // mu(a) for egreedy_reinforce
  std::optional<TableKey> key;

  nn::Var log_prob;             // log pi(a)
  nn::Var chosen_value;         // Q(s, a) or A(s, a)
  nn::Var state_value;          // V(s) for advantage learning
  nn::Var relaxed;              // softmax((logits + g) / tau)
  nn::Var relaxed_conditional;  // relax: conditional sample given the action
  nn::Var straight_through;     // gumbel: value 1, gradient of z[a]
};

struct StepFeedback {
  const Decision* decision = nullptr;
  double reward = 0.0;                // immediate reward of this step
  std::optional<double> next_value;   // bootstrap of the successor; nullopt = terminal
};

// The slice of one trajectory that a single policy made.
struct Episode {
  std::vector<StepFeedback> steps;
  double final_reward = 0.0;
  double total_return = 0.0;  // final reward plus every immediate reward (gamma = 1)
};

// State -> vector of outputs, recorded on a tape.
class Head {
 public:
  virtual ~Head() = default;
  virtual nn::Var forward(nn::Graph& graph, const RoutingState& state) = 0;
  // Current outputs without touching any tape or creating table rows.
  virtual std::vector<double> peek(const RoutingState& state) = 0;
  virtual std::vector<nn::Parameter*> parameters() = 0;
  virtual std::size_t width() const = 0;
};

// Lookup table keyed by (meta, depth); rows are created on first use.
class TableHead final : public Head {
 public:
  TableHead(std::size_t width, double init = 0.0) : width_(width), init_(init) {}

  nn::Var forward(nn::Graph& graph, const RoutingState& state) override;
  std::vector<double> peek(const RoutingState& state) override;
  std::vector<nn::Parameter*> parameters() override;
  std::size_t width() const override { return width_; }

  nn::Parameter& row(const TableKey& key);

 private:
  std::size_t width_;
  double init_;
  std::map<TableKey, nn::Parameter> rows_;
};

// Linear (or one tanh hidden layer) map of activation ++ one_hot(depth).
class NeuralHead final : public Head {
 public:
  NeuralHead(std::size_t width, std::size_t state_width, std::size_t max_depth, std::size_t hidden, Rng& rng);

  nn::Var forward(nn::Graph& graph, const RoutingState& state) override;
  std::vector<double> peek(const RoutingState& state) override;
  std::vector<nn::Parameter*> parameters() override;
  std::size_t width() const override { return width_; }

  nn::Tensor encode(const RoutingState& state) const;

 private:
  std::size_t width_;
  std::size_t state_width_;
  std::size_t max_depth_;
  std::vector<std::unique_ptr<nn::Parameter>> params_;
};

TableKey table_key(const RoutingState& state);  // throws if meta is absent

// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

class Policy {
 public:
  explicit Policy(PolicyConfig config);
  virtual ~Policy() = default;
  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  // explore = false gives the deterministic evaluation choice and draws no randomness.
  virtual Decision select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                          bool explore = true) = 0;
  virtual nn::Var update(nn::Graph& graph, const Episode& episode) = 0;
  virtual std::vector<nn::Parameter*> parameters() = 0;

  // Successor value for bootstrapped targets; 0 for strategies without values.
  virtual double bootstrap_value(const RoutingState& state, std::size_t action_count);

  const PolicyConfig& config() const { return config_; }

 protected:
  PolicyConfig config_;
};

std::unique_ptr<Head> make_head(const PolicyConfig& config, const PolicyContext& context, std::size_t width, Rng& rng);
std::unique_ptr<Policy> make_policy(const PolicyConfig& config, const PolicyContext& context);

// Q-learning with epsilon-greedy exploration. Loss per step is
// 0.5 * (Q(s,a) - y)^2 with y = r + max Q(s',.) or r + r_f at the end, so a
// plain-SGD step of rate lr moves a table entry by lr * (y - Q).
class QLearningPolicy final : public Policy {
 public:
  QLearningPolicy(PolicyConfig config, std::unique_ptr<Head> head);

  Decision select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                  bool explore = true) override;
  nn::Var update(nn::Graph& graph, const Episode& episode) override { return update_value(graph, episode); }
  nn::Var update_value(nn::Graph& graph, const Episode& episode);
  std::vector<nn::Parameter*> parameters() override { return head_->parameters(); }
  double bootstrap_value(const RoutingState& state, std::size_t action_count) override;

  Head& head() { return *head_; }

 private:
  std::unique_ptr<Head> head_;
};

// Q(s,a) = V(s) + A(s,a). V regresses the Bellman target of the taken action,
// A regresses the residual target - V(s); selection is greedy in A.
class AdvantagePolicy final : public Policy {
 public:
  AdvantagePolicy(PolicyConfig config, std::unique_ptr<Head> advantage_head, std::unique_ptr<Head> value_head);

  Decision select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                  bool explore = true) override;
  nn::Var update(nn::Graph& graph, const Episode& episode) override { return update_value(graph, episode); }
  nn::Var update_value(nn::Graph& graph, const Episode& episode);
  std::vector<nn::Parameter*> parameters() override;
  double bootstrap_value(const RoutingState& state, std::size_t action_count) override;

  std::vector<double> advantages(const RoutingState& state, std::size_t action_count);
  Head& advantage_head() { return *advantage_; }
  Head& value_head() { return *value_; }

 private:
  std::unique_ptr<Head> advantage_;
  std::unique_ptr<Head> value_;
};

// REINFORCE with a running baseline b <- (1 - a_b) b + a_b G, and the
// epsilon-greedy behaviour variant that corrects with w = pi(a) / mu(a).
class ReinforcePolicy final : public Policy {
 public:
  ReinforcePolicy(PolicyConfig config, std::unique_ptr<Head> head);

  Decision select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                  bool explore = true) override;
  nn::Var update(nn::Graph& graph, const Episode& episode) override { return update_pg(graph, episode); }
  // loss = -(G - b) * sum_t w_t log pi(a_t); then the baseline moves toward G.
  nn::Var update_pg(nn::Graph& graph, const Episode& episode);
  std::vector<nn::Parameter*> parameters() override { return head_->parameters(); }

  double baseline() const { return baseline_; }
  void set_baseline(double b) { baseline_ = b; }
  Head& head() { return *head_; }

 private:
  std::unique_ptr<Head> head_;
  double baseline_ = 0.0;
};

// Weighted Policy Learner over a probability table keyed by (meta, depth).
// Each action's value gradient Q(a) - sum_i pi(i) Q(i) is damped by pi(a)
// when negative and by 1 - pi(a) when positive, then the row is projected
// back onto the simplex with a probability floor.
class WplPolicy final : public Policy {
 public:
  WplPolicy(PolicyConfig config, std::size_t action_space);

  Decision select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                  bool explore = true) override;
  nn::Var update(nn::Graph& graph, const Episode& episode) override { return update_pg(graph, episode); }
  nn::Var update_pg(nn::Graph& graph, const Episode& episode);
  std::vector<nn::Parameter*> parameters() override { return {}; }

  std::vector<double> probabilities(const TableKey& key, std::size_t action_count);
  void set_values(const TableKey& key, std::vector<double> values);

 private:
  struct Row {
    std::vector<double> probs;
    std::vector<double> values;
  };
  Row& row(const TableKey& key, std::size_t action_count);

  std::size_t action_space_;
  std::map<TableKey, Row> rows_;
};

// Projects v onto { p : p_i >= floor, sum p = 1 } in Euclidean norm.
std::vector<double> project_to_simplex(std::span<const double> v, double floor);

// One-hidden-layer control variate c(z) for RELAX, input width fixed at
// construction (shorter relaxed samples are zero-padded).
class ControlVariate {
 public:
  ControlVariate(std::size_t input_width, std::size_t hidden, Rng& rng);

  // bind_params = false treats the control-variate weights as constants so
  // only the relaxed sample carries gradient.
  nn::Var evaluate(nn::Graph& graph, const nn::Var& relaxed, bool bind_params) const;
  std::vector<nn::Parameter*> parameters() const;
  std::size_t input_width() const { return input_width_; }

 private:
  std::size_t input_width_;
  std::vector<std::unique_ptr<nn::Parameter>> params_;
};

// Gumbel-perturbed sample of a categorical given normalized log-probs on the tape.
struct RelaxedDraw {
  std::size_t action = 0;
  nn::Var relaxed;              // softmax((log pi + g) / tau)
  nn::Var relaxed_conditional;  // same, from the conditional Gumbel sample given action
};

RelaxedDraw draw_relaxed(nn::Graph& graph, const nn::Var& log_probs, double tau, Rng& rng, bool conditional);

// Straight-through Gumbel-softmax: the hard action takes argmax of
// logits + g, and the module output is scaled by a weight of value exactly 1
// whose gradient is that of z[a]. The model loss itself is the surrogate.
class GumbelPolicy final : public Policy {
 public:
  GumbelPolicy(PolicyConfig config, std::unique_ptr<Head> head);

  Decision select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                  bool explore = true) override;
  nn::Var update(nn::Graph& graph, const Episode& episode) override { return update_relaxed(graph, episode); }
  nn::Var update_relaxed(nn::Graph& graph, const Episode& episode);
  std::vector<nn::Parameter*> parameters() override { return head_->parameters(); }

  Head& head() { return *head_; }

 private:
  std::unique_ptr<Head> head_;
};

// RELAX: (f - c(z~)) grad log pi(a) + grad c(z) - grad c(z~) with f the
// trajectory return. The control variate is fitted by regressing c(z~) on f.
class RelaxPolicy final : public Policy {
 public:
  RelaxPolicy(PolicyConfig config, std::unique_ptr<Head> head, std::size_t action_space, Rng& rng);

  Decision select(nn::Graph& graph, const RoutingState& state, std::size_t action_count, Rng& rng,
                  bool explore = true) override;
  nn::Var update(nn::Graph& graph, const Episode& episode) override { return update_relaxed(graph, episode); }
  nn::Var update_relaxed(nn::Graph& graph, const Episode& episode);
  std::vector<nn::Parameter*> parameters() override;

  Head& head() { return *head_; }
  ControlVariate& control_variate() { return control_; }

 private:
  std::unique_ptr<Head> head_;
  ControlVariate control_;
};

// Surrogate loss whose gradient w.r.t. the policy parameters is minus the
// RELAX estimate, plus (when the variate is trainable) the regression loss
// 0.5 (f - c(z~))^2 on the variate's own weights.
nn::Var relax_surrogate(nn::Graph& graph, const ControlVariate* control, const nn::Var& log_prob,
                        const nn::Var& relaxed, const nn::Var& relaxed_conditional, double f);

}  // namespace routing::policy
