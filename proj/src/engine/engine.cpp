#include "routing/engine.hpp"

#include <algorithm>
#include <stdexcept>

#include "routing/errors.hpp"

namespace routing::engine {

ArchitectureKind parse_architecture(std::string_view name) {
  if (name == "single") return ArchitectureKind::single;
  if (name == "per-decision") return ArchitectureKind::per_decision;
  if (name == "dispatched") return ArchitectureKind::dispatched;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

std::string_view to_string(ArchitectureKind kind) {
  switch (kind) {
    case ArchitectureKind::single:
      return "single";
    case ArchitectureKind::per_decision:
      return "per-decision";
    case ArchitectureKind::dispatched:
      return "dispatched";
  }
  return "unknown";
}

DispatchMode parse_dispatch_mode(std::string_view name) {
  if (name == "meta") return DispatchMode::by_meta;
  if (name == "input") return DispatchMode::by_input;
  throw ConfigError("unknown dispatch mode '" + std::string(name) + "'");
}

const modules::ModuleBank& ModuleBanks::bank_for(std::size_t depth) const {
  if (banks_.empty()) throw std::out_of_range("routing: no module bank configured");
  if (banks_.size() == 1) return banks_.front();
  if (depth >= banks_.size()) throw std::out_of_range("routing: no module bank at depth " + std::to_string(depth));
  return banks_[depth];
}

std::vector<nn::Parameter*> ModuleBanks::parameters() const {
  std::vector<nn::Parameter*> out;
  for (const auto& bank : banks_) {
    auto ps = bank.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

RouterArchitecture RouterArchitecture::single(std::unique_ptr<policy::Policy> router, std::size_t max_depth) {
  if (!router) throw ConfigError("single architecture: router is null");
  if (max_depth == 0) throw ConfigError("architecture: max depth must be positive");
  RouterArchitecture arch(ArchitectureKind::single, max_depth);
  arch.routers_.push_back(std::move(router));
  return arch;
}

RouterArchitecture RouterArchitecture::per_decision(std::vector<std::unique_ptr<policy::Policy>> subrouters) {
  if (subrouters.empty()) throw ConfigError("per-decision architecture: needs at least one subrouter");
  RouterArchitecture arch(ArchitectureKind::per_decision, subrouters.size());
  arch.routers_ = std::move(subrouters);
  return arch;
}

RouterArchitecture RouterArchitecture::dispatched_by_meta(std::vector<MetaLabel> labels,
                                                          std::vector<std::unique_ptr<policy::Policy>> subrouters,
                                                          std::size_t max_depth) {
  if (subrouters.empty()) throw ConfigError("dispatched architecture: needs at least one subrouter");
  if (labels.size() != subrouters.size())
    throw ConfigError("dispatched architecture: by-meta needs exactly one label per subrouter");
  std::vector<MetaLabel> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("dispatched architecture: duplicate meta label");
  if (max_depth == 0) throw ConfigError("architecture: max depth must be positive");
  RouterArchitecture arch(ArchitectureKind::dispatched, max_depth);
  arch.routers_ = std::move(subrouters);
  arch.labels_ = std::move(labels);
  arch.dispatch_mode_ = DispatchMode::by_meta;
  return arch;
}

RouterArchitecture RouterArchitecture::dispatched_by_input(std::unique_ptr<policy::Policy> dispatcher,
                                                           std::vector<std::unique_ptr<policy::Policy>> subrouters,
                                                           std::size_t max_depth) {
  if (!dispatcher) throw ConfigError("dispatched architecture: dispatcher is null");
  if (subrouters.empty()) throw ConfigError("dispatched architecture: needs at least one subrouter");
  if (max_depth == 0) throw ConfigError("architecture: max depth must be positive");
  RouterArchitecture arch(ArchitectureKind::dispatched, max_depth);
  arch.routers_ = std::move(subrouters);
  arch.dispatcher_ = std::move(dispatcher);
  arch.dispatch_mode_ = DispatchMode::by_input;
  return arch;
}

policy::Policy& RouterArchitecture::router_for(std::size_t depth, std::size_t subrouter) {
  switch (kind_) {
    case ArchitectureKind::single:
      return *routers_.front();
    case ArchitectureKind::per_decision:
      if (depth >= routers_.size()) throw std::out_of_range("per-decision: no subrouter for depth " + std::to_string(depth));
      return *routers_[depth];
    case ArchitectureKind::dispatched:
      if (subrouter >= routers_.size()) throw std::out_of_range("dispatched: subrouter " + std::to_string(subrouter) + " does not exist");
      return *routers_[subrouter];
  }
  throw std::logic_error("router_for: unknown architecture");
}

std::size_t RouterArchitecture::dispatch(nn::Graph& graph, const RoutingState& input_state, Rng& rng, bool explore,
                                         std::optional<policy::Decision>* decision) {
  if (kind_ != ArchitectureKind::dispatched) throw std::logic_error("dispatch: architecture is not dispatched");
  if (*dispatch_mode_ == DispatchMode::by_meta) {
    if (!input_state.meta) throw ConfigError("dispatch: by-meta mode needs a meta label");
    auto it = std::find(labels_.begin(), labels_.end(), *input_state.meta);
    if (it == labels_.end()) throw ConfigError("dispatch: unknown meta label " + std::to_string(*input_state.meta));
    return static_cast<std::size_t>(it - labels_.begin());
  }
  RoutingState view{input_state.activation, std::nullopt, 0};
  policy::Decision d = dispatcher_->select(graph, view, routers_.size(), rng, explore);
  const std::size_t index = d.action;
  if (decision != nullptr) *decision = std::move(d);
  return index;
}

std::vector<nn::Parameter*> RouterArchitecture::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& r : routers_) {
    auto ps = r->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  if (dispatcher_) {
    auto ps = dispatcher_->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::size_t Trajectory::depth_reached() const {
  if (steps.empty()) return 0;
  return steps.back().action.kind == RoutingAction::Kind::terminate ? steps.size() - 1 : steps.size();
}

std::vector<RoutingAction> Trajectory::actions() const {
  std::vector<RoutingAction> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.action);
  return out;
}

std::size_t Trajectory::exploratory_count() const {
  return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const TrajectoryStep& s) { return !s.decision.greedy; }));
}

namespace {

// Leading actions open at `depth`: terminate is last in the index space and
// is withheld at depth 0 so every output passes through at least one slot.
std::size_t available_actions(const modules::ModuleBank& bank, std::size_t depth) {
  std::size_t n = bank.action_space_size();
  if (depth == 0 && bank.allow_termination()) --n;
  return n;
}

nn::Var advance(const modules::ModuleBank& bank, const RoutingAction& action, nn::Graph& graph, const nn::Var& h) {
  if (action.kind == RoutingAction::Kind::skip) return h;
  return modules::apply_module(bank, action, graph, h);
}

}  // namespace

RoutingState transition(const RoutingState& state, const RoutingAction& action, const ModuleBanks& banks) {
  if (action.kind == RoutingAction::Kind::terminate) throw std::logic_error("transition: terminate ends routing");
  if (!state.activation) throw ConfigError("transition: state carries no activation");
  nn::Graph scratch;
  nn::Var h = advance(banks.bank_for(state.depth), action, scratch, scratch.constant(*state.activation));
  return RoutingState{h.value(), state.meta, state.depth + 1};
}

Trajectory route_forward(RouterArchitecture& arch, const ModuleBanks& banks, nn::Graph& graph, const nn::Tensor& x,
                         std::optional<MetaLabel> meta, Rng& rng, bool explore) {
  const modules::ModuleBank& first = banks.bank_for(0);
  if (x.rank() != 1 || x.size() != first.in_dim())
    throw ShapeError("route_forward: input shape " + nn::shape_string(x.shape()) + " does not match bank width " +
                     std::to_string(first.in_dim()));

  Trajectory traj;
  RoutingState state{x, meta, 0};
  nn::Var h = graph.constant(x);
  if (arch.kind() == ArchitectureKind::dispatched)
    traj.subrouter = arch.dispatch(graph, state, rng, explore, &traj.dispatch_decision);

  while (true) {
    const modules::ModuleBank& bank = banks.bank_for(state.depth);
    policy::Policy& router = arch.router_for(state.depth, traj.subrouter);
    if (arch.kind() == ArchitectureKind::per_decision && &router != &arch.router_for(state.depth))
      throw std::logic_error("per-decision: subrouter/depth mismatch");

    TrajectoryStep step;
    step.state = state;
    step.router = &router;
    step.decision = router.select(graph, state, available_actions(bank, state.depth), rng, explore);
    step.action = bank.action_at(step.decision.action);

    if (step.action.kind == RoutingAction::Kind::terminate) {
      step.resulting_state = state;
      traj.steps.push_back(std::move(step));
      break;
    }

    h = advance(bank, step.action, graph, h);
    if (step.decision.straight_through.valid()) h = nn::scale_by(h, step.decision.straight_through);
    state = RoutingState{h.value(), state.meta, state.depth + 1};
    step.resulting_state = state;
    if (state.depth >= arch.max_depth()) {
      step.forced = true;
      traj.forced_stop = true;
      traj.steps.push_back(std::move(step));
      break;
    }
    traj.steps.push_back(std::move(step));
  }
  traj.output = h;
  return traj;
}

}  // namespace routing::engine
