#pragma once
// Forward routing: repeated select/apply with termination, under the single,
// per-decision, and dispatched router architectures.

#include <cstddef>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "routing/autodiff.hpp"
#include "routing/module_bank.hpp"
#include "routing/policy.hpp"
#include "routing/rng.hpp"
#include "routing/types.hpp"

namespace routing::engine {

enum class ArchitectureKind { single, per_decision, dispatched };
enum class DispatchMode { by_meta, by_input };

ArchitectureKind parse_architecture(std::string_view name);
std::string_view to_string(ArchitectureKind kind);
DispatchMode parse_dispatch_mode(std::string_view name);

// Either one bank shared by every depth, or one bank per depth.
class ModuleBanks {
 public:
  ModuleBanks() = default;
  explicit ModuleBanks(std::vector<modules::ModuleBank> banks) : banks_(std::move(banks)) {}

  // Throws std::out_of_range when no bank covers `depth`.
  const modules::ModuleBank& bank_for(std::size_t depth) const;
  std::size_t size() const { return banks_.size(); }
  std::vector<nn::Parameter*> parameters() const;

 private:
  std::vector<modules::ModuleBank> banks_;
};

class RouterArchitecture {
 public:
  static RouterArchitecture single(std::unique_ptr<policy::Policy> router, std::size_t max_depth);
  // One subrouter per depth; max depth equals the number of subrouters.
  static RouterArchitecture per_decision(std::vector<std::unique_ptr<policy::Policy>> subrouters);
  // Label i maps to subrouter i.
  static RouterArchitecture dispatched_by_meta(std::vector<MetaLabel> labels,
                                               std::vector<std::unique_ptr<policy::Policy>> subrouters,
                                               std::size_t max_depth);
  static RouterArchitecture dispatched_by_input(std::unique_ptr<policy::Policy> dispatcher,
                                                std::vector<std::unique_ptr<policy::Policy>> subrouters,
                                                std::size_t max_depth);

  ArchitectureKind kind() const { return kind_; }
  std::size_t max_depth() const { return max_depth_; }
  std::size_t subrouter_count() const { return routers_.size(); }
  std::optional<DispatchMode> dispatch_mode() const { return dispatch_mode_; }

  // The policy deciding at `depth` inside subrouter `subrouter` (dispatched)
  // or for the whole architecture otherwise.
  policy::Policy& router_for(std::size_t depth, std::size_t subrouter = 0);
  policy::Policy* dispatcher() { return dispatcher_.get(); }

  // Subrouter index in [0, k). By-input mode records the dispatcher's decision.
  std::size_t dispatch(nn::Graph& graph, const RoutingState& input_state, Rng& rng, bool explore,
                       std::optional<policy::Decision>* decision = nullptr);

  std::vector<nn::Parameter*> parameters();

 private:
  RouterArchitecture(ArchitectureKind kind, std::size_t max_depth) : kind_(kind), max_depth_(max_depth) {}

  ArchitectureKind kind_;
  std::size_t max_depth_;
  std::vector<std::unique_ptr<policy::Policy>> routers_;
  std::optional<DispatchMode> dispatch_mode_;
  std::vector<MetaLabel> labels_;
  std::unique_ptr<policy::Policy> dispatcher_;
};

struct TrajectoryStep {
  RoutingState state;
  policy::Decision decision;
  RoutingAction action;
  double immediate_reward = 0.0;
  RoutingState resulting_state;
  bool forced = false;  // routing stopped here because max depth was reached
  policy::Policy* router = nullptr;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  nn::Var output;
  double final_reward = 0.0;
  bool forced_stop = false;
  std::size_t subrouter = 0;
  std::optional<policy::Decision> dispatch_decision;

  // Number of module or skip steps (the terminate step is not counted).
  std::size_t depth_reached() const;
  std::vector<RoutingAction> actions() const;
  std::size_t exploratory_count() const;
};

// Deterministic successor state; never called for terminate.
RoutingState transition(const RoutingState& state, const RoutingAction& action, const ModuleBanks& banks);

// Runs the forward pass on `graph`. The output is tape-connected to every
// module parameter used. explore = false evaluates greedily.
Trajectory route_forward(RouterArchitecture& arch, const ModuleBanks& banks, nn::Graph& graph, const nn::Tensor& x,
                         std::optional<MetaLabel> meta, Rng& rng, bool explore = true);

}  // namespace routing::engine
