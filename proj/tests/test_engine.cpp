#include <doctest.h>

#include <cmath>

#include "routing/engine.hpp"
#include "routing/errors.hpp"
#include "test_support.hpp"

using namespace routing;
using namespace routing::engine;
using nn::Graph;
using nn::Tensor;
using testing_support::ScriptedPolicy;

namespace {

modules::ModuleBank slope_bank(std::vector<double> slopes, bool terminate = true, bool skip = false) {
  modules::BankSpec spec;
  spec.count = slopes.size();
  spec.slopes = std::move(slopes);
  spec.allow_termination = terminate;
  spec.allow_skip = skip;
  return modules::build_bank(spec, 0);
}

ModuleBanks one_bank(modules::ModuleBank bank) {
  std::vector<modules::ModuleBank> v;
  v.push_back(std::move(bank));
  return ModuleBanks(std::move(v));
}

struct Scripted {
  ScriptedPolicy* policy;
  RouterArchitecture arch;
};

Scripted scripted_single(std::vector<std::size_t> script, std::size_t max_depth) {
  auto p = std::make_unique<ScriptedPolicy>(std::move(script));
  ScriptedPolicy* raw = p.get();
  return {raw, RouterArchitecture::single(std::move(p), max_depth)};
}

// Output stays on g.
Trajectory run(Graph& g, RouterArchitecture& arch, const ModuleBanks& banks, double x,
               std::optional<MetaLabel> meta = 0) {
  Rng rng(0);
  return route_forward(arch, banks, g, Tensor::vector({x}), meta, rng);
}

}  // namespace

TEST_CASE("single module then terminate") {
  ModuleBanks banks = one_bank(slope_bank({3.0, 0.1, 0.8}));
  auto s = scripted_single({0, 3}, 3);
  Graph g;
  Trajectory t = run(g, s.arch, banks, 2.0);
  CHECK(t.output.value()[0] == 6.0);
  CHECK(t.steps.size() == 2);
  CHECK(t.depth_reached() == 1);
  CHECK_FALSE(t.forced_stop);
  CHECK(t.steps.back().action == RoutingAction::terminate());
}

TEST_CASE("two-module path composes slopes") {
  ModuleBanks banks = one_bank(slope_bank({3.0, 0.1, 0.8}));
  auto s = scripted_single({0, 2, 3}, 3);
  Graph g;
  Trajectory t = run(g, s.arch, banks, 1.0);
  CHECK(t.output.value()[0] == doctest::Approx(2.4).epsilon(1e-15));
  CHECK(t.steps.size() == 3);
}

TEST_CASE("all-skip path leaves the input unchanged") {
  ModuleBanks banks = one_bank(slope_bank({3.0, 0.1, 0.8}, true, true));
  auto s = scripted_single({3, 3, 3}, 3);
  Graph g;
  Trajectory t = run(g, s.arch, banks, 1.7);
  CHECK(t.output.value()[0] == 1.7);
  CHECK(t.steps.size() == 3);
  CHECK(t.forced_stop);
  CHECK(t.steps.back().forced);
  for (const auto& step : t.steps) CHECK(step.action == RoutingAction::skip());
}

TEST_CASE("terminate is withheld at depth zero") {
  ModuleBanks banks = one_bank(slope_bank({3.0, 0.1}));
  auto s = scripted_single({0, 2}, 3);
  Graph g;
  Trajectory t = run(g, s.arch, banks, 1.0);
  CHECK(t.steps[0].decision.action_count == 2);
  CHECK(t.steps[1].decision.action_count == 3);
}

TEST_CASE("routing matches a brute-force fold for every path of length up to three") {
  const std::vector<double> slopes{3.0, 0.1, 0.8};
  ModuleBanks banks = one_bank(slope_bank(slopes));
  Rng rng(13);
  std::size_t paths = 0;
  for (std::size_t len = 1; len <= 3; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<std::size_t> script;
      std::vector<double> chosen;
      for (std::size_t i = 0, c = code; i < len; ++i, c /= 3) {
        script.push_back(c % 3);
        chosen.push_back(slopes[c % 3]);
      }
      if (len < 3) script.push_back(3);
      for (int trial = 0; trial < 5; ++trial) {
        const double x = rng.uniform(-4, 4);
        auto s = scripted_single(script, 3);
        Graph g;
        Trajectory t = run(g, s.arch, banks, x);
        CHECK(t.output.value()[0] == testing_support::fold_slopes(x, chosen));
        CHECK(t.depth_reached() == len);
        CHECK(t.forced_stop == (len == 3));
      }
      ++paths;
    }
  }
  CHECK(paths == 39);
}

TEST_CASE("output is tape-connected to every module used") {
  ModuleBanks banks = one_bank(slope_bank({3.0, 0.1, 0.8}));
  auto s = scripted_single({0, 2, 3}, 3);
  Graph g;
  Rng rng(0);
  Trajectory t = route_forward(s.arch, banks, g, Tensor::vector({1.0}), 0, rng);
  g.backward(nn::sum(t.output));
  const auto& bank = banks.bank_for(0);
  CHECK(bank.module(0).parameter(0).grad[0] == doctest::Approx(0.8));
  CHECK(bank.module(1).parameter(0).grad[0] == 0.0);
  CHECK(bank.module(2).parameter(0).grad[0] == doctest::Approx(3.0));
}

TEST_CASE("transition examples") {
  ModuleBanks banks = one_bank(slope_bank({3.0, 0.1}, true, true));
  RoutingState s{Tensor::vector({2.0}), 1, 0};
  RoutingState next = transition(s, RoutingAction::module(0), banks);
  CHECK(next.activation->values()[0] == 6.0);
  CHECK(next.meta == 1);
  CHECK(next.depth == 1);
  RoutingState skipped = transition(s, RoutingAction::skip(), banks);
  CHECK(skipped.activation->values()[0] == 2.0);
  CHECK(skipped.depth == 1);
  CHECK_THROWS_AS(transition(s, RoutingAction::terminate(), banks), std::logic_error);
}

TEST_CASE("per-decision subrouters see only their own depth") {
  std::vector<modules::ModuleBank> per_depth;
  per_depth.push_back(slope_bank({2.0, 3.0}, false));
  per_depth.push_back(slope_bank({5.0, 7.0}, true));
  per_depth.push_back(slope_bank({11.0, 13.0}, true));
  ModuleBanks banks(std::move(per_depth));
  std::vector<ScriptedPolicy*> raw;
  std::vector<std::unique_ptr<policy::Policy>> subs;
  const std::vector<std::vector<std::size_t>> scripts{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (const auto& sc : scripts) {
    auto p = std::make_unique<ScriptedPolicy>(sc);
    raw.push_back(p.get());
    subs.push_back(std::move(p));
  }
  RouterArchitecture arch = RouterArchitecture::per_decision(std::move(subs));
  CHECK(arch.max_depth() == 3);
  for (int i = 0; i < 10; ++i) {
    Graph g;
    Trajectory t = run(g, arch, banks, 1.0);
    CHECK(t.output.value()[0] == 3.0 * 7.0 * 13.0);
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(raw[i]->seen_depths.size() == 10);
    for (std::size_t d : raw[i]->seen_depths) CHECK(d == i);
  }
}

TEST_CASE("dispatch by meta is a fixed enumeration") {
  std::vector<std::unique_ptr<policy::Policy>> subs;
  for (int i = 0; i < 3; ++i) subs.push_back(std::make_unique<ScriptedPolicy>(std::vector<std::size_t>{0, 3}));
  RouterArchitecture arch = RouterArchitecture::dispatched_by_meta({10, 20, 30}, std::move(subs), 2);
  ModuleBanks banks = one_bank(slope_bank({3.0, 0.1, 0.8}));
  Graph g;
  Rng rng(0);
  for (int i = 0; i < 5; ++i) {
    CHECK(arch.dispatch(g, RoutingState{Tensor::vector({1.0}), 20, 0}, rng, true) == 1);
    CHECK(run(g, arch, banks, 1.0, 30).subrouter == 2);
  }
  CHECK_THROWS_AS(arch.dispatch(g, RoutingState{Tensor::vector({1.0}), 99, 0}, rng, true), ConfigError);
  CHECK_THROWS_AS(run(g, arch, banks, 1.0, 99), ConfigError);
}

TEST_CASE("a single subrouter always dispatches to zero") {
  std::vector<std::unique_ptr<policy::Policy>> subs;
  subs.push_back(std::make_unique<ScriptedPolicy>(std::vector<std::size_t>{0, 1}));
  policy::PolicyConfig c;
  c.strategy = policy::Strategy::reinforce;
  c.approximator = policy::Approximator::neural;
  policy::PolicyContext ctx;
  ctx.action_space = 1;
  RouterArchitecture arch = RouterArchitecture::dispatched_by_input(policy::make_policy(c, ctx), std::move(subs), 2);
  ModuleBanks banks = one_bank(slope_bank({3.0}));
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    Graph g;
    CHECK(route_forward(arch, banks, g, Tensor::vector({rng.uniform(-1, 1)}), std::nullopt, rng).subrouter == 0);
  }
}

TEST_CASE("dispatch by input follows the dispatcher's policy") {
  policy::PolicyConfig c;
  c.strategy = policy::Strategy::reinforce;
  c.approximator = policy::Approximator::neural;
  policy::PolicyContext ctx;
  ctx.action_space = 3;
  ctx.state_width = 1;
  ctx.seed = 42;
  std::vector<std::unique_ptr<policy::Policy>> subs;
  for (int i = 0; i < 3; ++i) subs.push_back(std::make_unique<ScriptedPolicy>(std::vector<std::size_t>{0, 3}));
  RouterArchitecture arch = RouterArchitecture::dispatched_by_input(policy::make_policy(c, ctx), std::move(subs), 2);
  const RoutingState input{Tensor::vector({0.9}), std::nullopt, 0};
  Graph peek;
  Rng none(0);
  const std::vector<double> probs = arch.dispatcher()->select(peek, input, 3, none, false).probs;
  const std::size_t n = 10000;
  std::vector<std::size_t> counts(3, 0);
  Rng rng(6);
  for (std::size_t i = 0; i < n; ++i) {
    Graph g;
    std::optional<policy::Decision> d;
    const std::size_t k = arch.dispatch(g, input, rng, true, &d);
    REQUIRE(d.has_value());
    CHECK(d->action == k);
    ++counts[k];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const double sigma = std::sqrt(probs[i] * (1 - probs[i]) / n);
    CHECK(std::abs(static_cast<double>(counts[i]) / n - probs[i]) <= 3 * sigma);
  }
}

TEST_CASE("trajectory invariants under stochastic routers") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t max_depth = 1 + rng.uniform_index(4);
    const bool skip = rng.bernoulli(0.5);
    const std::vector<double> slopes{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    ModuleBanks banks = one_bank(slope_bank(slopes, true, skip));
    policy::PolicyConfig c;
    c.strategy = policy::Strategy::reinforce;
    policy::PolicyContext ctx;
    ctx.action_space = banks.bank_for(0).action_space_size();
    RouterArchitecture arch = RouterArchitecture::single(policy::make_policy(c, ctx), max_depth);
    const MetaLabel meta = static_cast<MetaLabel>(rng.uniform_index(3));
    const double x = rng.uniform(-1, 1);
    Graph g;
    Trajectory t = route_forward(arch, banks, g, Tensor::vector({x}), meta, rng);

    CHECK(!t.steps.empty());
    CHECK(t.steps.size() <= max_depth + 1);
    double expected = x;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      const TrajectoryStep& s = t.steps[i];
      CHECK(s.state.meta == meta);
      CHECK(s.resulting_state.meta == meta);
      CHECK(s.state.depth == i);
      if (s.action.kind == RoutingAction::Kind::terminate) {
        CHECK(i + 1 == t.steps.size());
        CHECK(s.resulting_state.depth == s.state.depth);
      } else {
        CHECK(s.resulting_state.depth == s.state.depth + 1);
        if (s.action.is_module()) expected = slopes[s.action.index] * expected;
      }
    }
    const bool terminated = t.steps.back().action.kind == RoutingAction::Kind::terminate;
    CHECK(terminated != t.forced_stop);
    if (t.forced_stop) CHECK(t.steps.size() == max_depth);
    CHECK(t.output.value()[0] == expected);
  }
}

TEST_CASE("engine errors") {
  ModuleBanks empty;
  auto s = scripted_single({0, 3}, 2);
  Graph g;
  Rng rng(0);
  CHECK_THROWS_AS(route_forward(s.arch, empty, g, Tensor::vector({1.0}), 0, rng), std::out_of_range);

  std::vector<modules::ModuleBank> two;
  two.push_back(slope_bank({2.0}, false));
  two.push_back(slope_bank({2.0}, false));
  ModuleBanks short_banks(std::move(two));
  auto deep = scripted_single({0, 0, 0}, 3);
  CHECK_THROWS_AS(route_forward(deep.arch, short_banks, g, Tensor::vector({1.0}), 0, rng), std::out_of_range);

  ModuleBanks banks = one_bank(slope_bank({2.0}));
  CHECK_THROWS_AS(route_forward(s.arch, banks, g, Tensor::vector({1.0, 2.0}), 0, rng), ShapeError);
  CHECK_THROWS_AS(RouterArchitecture::single(nullptr, 1), ConfigError);
  CHECK_THROWS_AS(parse_architecture("ring"), ConfigError);
}
