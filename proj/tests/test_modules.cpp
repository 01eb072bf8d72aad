#include <doctest.h>

#include <set>
#include <stdexcept>

#include "routing/errors.hpp"
#include "routing/module_bank.hpp"
#include "test_support.hpp"

using namespace routing;
using namespace routing::modules;
using nn::Graph;
using nn::Tensor;

namespace {

double apply_scalar(const ModuleBank& bank, std::size_t i, double x) {
  Graph g;
  return apply_module(bank, RoutingAction::module(i), g, g.constant(Tensor::vector({x}))).value()[0];
}

}  // namespace

TEST_CASE("scalar-linear modules multiply by their slope") {
  BankSpec spec;
  spec.slopes = {3.0, 0.1, 0.8};
  ModuleBank bank = build_bank(spec, 0);
  CHECK(apply_scalar(bank, 0, 2.0) == 6.0);
  CHECK(apply_scalar(bank, 1, 2.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(apply_scalar(bank, 2, 1.0) == 0.8);
}

TEST_CASE("identity-initialized linear module passes input through") {
  BankSpec spec;
  spec.kind = ModuleKind::linear;
  spec.count = 2;
  spec.in_dim = spec.out_dim = 5;
  spec.init = InitScheme::identity;
  ModuleBank bank = build_bank(spec, 9);
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = testing_support::random_tensor(rng, {5}, -3, 3);
    Graph g;
    CHECK(apply_module(bank, RoutingAction::module(1), g, g.constant(x)).value() == x);
  }
}

TEST_CASE("build_bank is deterministic and gives distinct slopes") {
  BankSpec spec;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ModuleBank a = build_bank(spec, seed), b = build_bank(spec, seed);
    std::set<double> slopes;
    for (std::size_t i = 0; i < 3; ++i) {
      const double s = a.module(i).parameter(0).value[0];
      CHECK(s == b.module(i).parameter(0).value[0]);
      CHECK(s >= -1.0);
      CHECK(s <= 1.0);
      slopes.insert(s);
    }
    CHECK(slopes.size() == 3);
  }
  CHECK(build_bank(spec, 1).module(0).parameter(0).value[0] != build_bank(spec, 2).module(0).parameter(0).value[0]);
}

TEST_CASE("action space layout") {
  BankSpec spec;
  spec.allow_termination = true;
  CHECK(build_bank(spec, 0).action_space_size() == 4);
  spec.allow_skip = true;
  ModuleBank bank = build_bank(spec, 0);
  CHECK(bank.action_space_size() == 5);
  CHECK(bank.action_at(0) == RoutingAction::module(0));
  CHECK(bank.action_at(3) == RoutingAction::skip());
  CHECK(bank.action_at(4) == RoutingAction::terminate());
  for (std::size_t i = 0; i < 5; ++i) CHECK(bank.index_of(bank.action_at(i)) == i);
  CHECK_THROWS_AS(bank.action_at(5), std::out_of_range);
  spec.allow_skip = spec.allow_termination = false;
  CHECK_THROWS_AS(build_bank(spec, 0).index_of(RoutingAction::terminate()), std::out_of_range);
}

TEST_CASE("mlp parameter count") {
  BankSpec spec;
  spec.kind = ModuleKind::mlp;
  spec.count = 2;
  spec.in_dim = spec.out_dim = 4;
  spec.hidden = 8;
  ModuleBank bank = build_bank(spec, 3);
  std::size_t total = 0;
  for (std::size_t i = 0; i < bank.module_count(); ++i) total += bank.module(i).parameter_count();
  CHECK(total == 152);
  std::size_t counted = 0;
  for (auto* p : bank.parameters()) counted += p->value.size();
  CHECK(counted == 152);
}

TEST_CASE("modules share no parameters and map widths") {
  for (auto kind : {ModuleKind::scalar_linear, ModuleKind::linear, ModuleKind::mlp}) {
    BankSpec spec;
    spec.kind = kind;
    spec.count = 4;
    spec.in_dim = 3;
    spec.out_dim = kind == ModuleKind::scalar_linear ? 3 : 2;
    ModuleBank bank = build_bank(spec, 5);
    std::set<const nn::Parameter*> seen;
    std::size_t n = 0;
    for (std::size_t i = 0; i < bank.module_count(); ++i)
      for (auto* p : bank.module(i).parameters()) {
        seen.insert(p);
        ++n;
      }
    CHECK(seen.size() == n);
    Rng rng(2);
    Tensor x = testing_support::random_tensor(rng, {3});
    for (std::size_t i = 0; i < bank.module_count(); ++i) {
      Graph g1, g2;
      Tensor y1 = apply_module(bank, RoutingAction::module(i), g1, g1.constant(x)).value();
      Tensor y2 = apply_module(bank, RoutingAction::module(i), g2, g2.constant(x)).value();
      CHECK(y1.size() == spec.out_dim);
      CHECK(y1 == y2);
    }
  }
}

TEST_CASE("module output is tape-connected") {
  BankSpec spec;
  spec.slopes = {3.0, 0.1, 0.8};
  ModuleBank bank = build_bank(spec, 0);
  Graph g;
  nn::Var y = apply_module(bank, RoutingAction::module(0), g, g.constant(Tensor::vector({2.0})));
  g.backward(nn::sum(y));
  CHECK(bank.module(0).parameter(0).grad[0] == 2.0);
  CHECK(bank.module(1).parameter(0).grad[0] == 0.0);
}

TEST_CASE("bank errors") {
  BankSpec spec;
  spec.count = 0;
  CHECK_THROWS_AS(build_bank(spec, 0), ConfigError);
  spec.count = 2;
  spec.slopes = {1.0};
  CHECK_THROWS_AS(build_bank(spec, 0), ConfigError);
  spec.slopes.clear();
  spec.kind = ModuleKind::linear;
  spec.in_dim = 2;
  spec.out_dim = 3;
  spec.allow_skip = true;
  CHECK_THROWS_AS(build_bank(spec, 0), ConfigError);

  BankSpec ok;
  ModuleBank bank = build_bank(ok, 0);
  Graph g;
  CHECK_THROWS_AS(apply_module(bank, RoutingAction::module(3), g, g.constant(Tensor::vector({1.0}))),
                  std::out_of_range);
  CHECK_THROWS_AS(apply_module(bank, RoutingAction::module(0), g, g.constant(Tensor::vector({1.0, 2.0}))),
                  ShapeError);
  CHECK_THROWS_AS(apply_module(bank, RoutingAction::skip(), g, g.constant(Tensor::vector({1.0}))),
                  std::invalid_argument);
  CHECK(parse_module_kind("mlp") == ModuleKind::mlp);
  CHECK_THROWS_AS(parse_module_kind("conv"), ConfigError);
}
