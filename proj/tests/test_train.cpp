#include <doctest.h>

#include <cmath>
#include <numeric>

#include "routing/errors.hpp"
#include "routing/train.hpp"
#include "test_support.hpp"

using namespace routing;
using namespace routing::train;
using nn::Tensor;

namespace {

double checksum(const std::vector<nn::Parameter*>& ps) {
  double total = 0.0;
  for (const auto* p : ps)
    for (std::size_t i = 0; i < p->value.size(); ++i) total += p->value[i] * static_cast<double>(i + 1);
  return total;
}

engine::ModuleBanks scalar_banks(std::vector<double> slopes, bool terminate) {
  modules::BankSpec spec;
  spec.count = slopes.size();
  spec.slopes = std::move(slopes);
  spec.allow_termination = terminate;
  std::vector<modules::ModuleBank> v;
  v.push_back(modules::build_bank(spec, 0));
  return engine::ModuleBanks(std::move(v));
}

std::unique_ptr<policy::Policy> neural_router(policy::Strategy s, std::size_t actions, std::size_t depth,
                                              double epsilon = 0.05) {
  policy::PolicyConfig c;
  c.strategy = s;
  c.approximator = policy::Approximator::neural;
  c.epsilon = epsilon;
  policy::PolicyContext ctx;
  ctx.action_space = actions;
  ctx.state_width = 1;
  ctx.max_depth = depth;
  ctx.seed = 3;
  return policy::make_policy(c, ctx);
}

TrainConfig sgd_config(double lr, double router_lr) {
  TrainConfig c;
  c.module_optimizer.lr = lr;
  c.router_optimizer.lr = router_lr;
  return c;
}

Sample regression(double x, double y, SampleRole role = SampleRole::both) {
  Sample s;
  s.x = Tensor::vector({x});
  s.y = Tensor::vector({y});
  s.role = role;
  return s;
}

}  // namespace

TEST_CASE("final reward examples") {
  RewardConfig pm;
  pm.final_kind = FinalRewardKind::plus_minus_one;
  CHECK(final_reward(pm, Tensor::vector({0.1, 2.0}), 1, 5.0) == 1.0);
  CHECK(final_reward(pm, Tensor::vector({0.1, 2.0}), 0, 5.0) == -1.0);
  CHECK_THROWS_AS(final_reward(pm, Tensor::vector({0.1}), std::nullopt, 0.0), ConfigError);
  RewardConfig nl;
  CHECK(final_reward(nl, Tensor::vector({1.0}), std::nullopt, 0.69) == -0.69);
  CHECK(final_reward(nl, Tensor::vector({1.0}), std::nullopt, 0.0) == 0.0);
}

TEST_CASE("plus-minus-one reward has image exactly plus and minus one") {
  RewardConfig pm;
  pm.final_kind = FinalRewardKind::plus_minus_one;
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 2 + rng.uniform_index(5);
    Tensor pred = testing_support::random_tensor(rng, {k}, -3, 3);
    const double r = final_reward(pm, pred, rng.uniform_index(k), rng.uniform(0, 10));
    CHECK((r == 1.0 || r == -1.0));
  }
}

TEST_CASE("regularization reward examples") {
  UsageWindow w(4);
  for (std::size_t a : {0u, 1u, 0u, 2u}) w.record(a);
  RewardConfig c;
  c.alpha = 0.5;
  CHECK(reg_reward(c, w, 0, 2) == 0.125);
  c.alpha = 0.0;
  CHECK(reg_reward(c, w, 0, 2) == 0.0);
  UsageWindow all(3);
  for (int i = 0; i < 3; ++i) all.record(1);
  c.alpha = -1.0;
  CHECK(reg_reward(c, all, 1, 1) == -1.0);
  CHECK(reg_reward(c, UsageWindow(5), 0, 1) == 0.0);
}

TEST_CASE("usage window counts the most recent choices") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cap = 1 + rng.uniform_index(20);
    UsageWindow w(cap);
    std::vector<std::size_t> history;
    const std::size_t n = rng.uniform_index(60);
    for (std::size_t i = 0; i < n; ++i) {
      history.push_back(rng.uniform_index(4));
      w.record(history.back());
      std::size_t total = 0;
      double freq = 0.0;
      for (std::size_t a = 0; a < 4; ++a) {
        total += w.count(a);
        freq += w.frequency(a);
      }
      CHECK(total == std::min(cap, history.size()));
      CHECK(w.observed() == total);
      CHECK(std::abs(freq - 1.0) < 1e-12);
    }
    for (std::size_t a = 0; a < 4; ++a) {
      const std::size_t from = history.size() > cap ? history.size() - cap : 0;
      CHECK(w.count(a) == static_cast<std::size_t>(std::count(history.begin() + from, history.end(), a)));
    }
  }
}

TEST_CASE("regularization reward is bounded by alpha over length") {
  Rng rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    RewardConfig c;
    c.alpha = rng.uniform(-1, 1);
    UsageWindow w(1 + rng.uniform_index(10));
    for (std::size_t i = 0, n = rng.uniform_index(30); i < n; ++i) w.record(rng.uniform_index(3));
    const std::size_t t = 1 + rng.uniform_index(5);
    const double r = reg_reward(c, w, rng.uniform_index(3), t);
    CHECK(std::abs(r) <= std::abs(c.alpha) / static_cast<double>(t));
  }
}

TEST_CASE("squash multiplier examples and range") {
  RewardConfig c;
  c.kappa = 0.0;
  CHECK(squash_multiplier(c, 3, 4) == 1.0);
  CHECK(squash_multiplier(c, 4, 4) == 1.0);
  c.kappa = 3.0;
  CHECK(squash_multiplier(c, 0, 5) == 1.0);
  c.kappa = 2.0;
  CHECK(squash_multiplier(c, 1, 2) == 0.25);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    c.kappa = rng.uniform(0, 5);
    const std::size_t len = 1 + rng.uniform_index(6);
    const double m = squash_multiplier(c, rng.uniform_index(len + 1), len);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
  CHECK_THROWS(squash_multiplier(c, 0, 0));
}

TEST_CASE("reward config validation") {
  RewardConfig c;
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(3), ConfigError);
  c.alpha = 0.0;
  c.window = 2;
  CHECK_THROWS_AS(c.validate(3), ConfigError);
  c.window = 0;
  CHECK(c.window_for(4) == 200);
  c.kappa = -1.0;
  CHECK_THROWS_AS(c.validate(3), ConfigError);
  CHECK(parse_final_reward("pm1") == FinalRewardKind::plus_minus_one);
  CHECK_THROWS_AS(parse_final_reward("hinge"), ConfigError);
}

TEST_CASE("role assignment") {
  SplitConfig both;
  for (SampleRole r : assign_roles(both, 50, 1)) CHECK(r == SampleRole::both);
  SplitConfig split{0.25, true};
  auto roles = assign_roles(split, 100, 7);
  CHECK(std::count(roles.begin(), roles.end(), SampleRole::module_only) == 25);
  CHECK(std::count(roles.begin(), roles.end(), SampleRole::router_only) == 75);
  CHECK(roles == assign_roles(split, 100, 7));
  CHECK(roles != assign_roles(split, 100, 8));
  SplitConfig bad{0.0, true};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sample roles gate which parameters move") {
  for (auto strategy : {policy::Strategy::reinforce, policy::Strategy::q_learning, policy::Strategy::relax}) {
    engine::ModuleBanks banks = scalar_banks({0.5, -0.3, 0.9}, true);
    auto arch = engine::RouterArchitecture::single(neural_router(strategy, 4, 2), 2);
    Trainer trainer(arch, banks, sgd_config(0.05, 0.05));
    Rng rng(1);
    for (int i = 0; i < 30; ++i) {
      const double x = rng.uniform(-1, 1);
      const SampleRole role = static_cast<SampleRole>(i % 3);
      const double modules_before = checksum(banks.parameters());
      const double router_before = checksum(arch.parameters());
      trainer.train_sample(regression(x, 2 * x, role), rng);
      CAPTURE(to_string(strategy));
      CAPTURE(i);
      if (!trains_modules(role)) CHECK(checksum(banks.parameters()) == modules_before);
      if (!trains_router(role)) CHECK(checksum(arch.parameters()) == router_before);
      if (role == SampleRole::both) CHECK(checksum(banks.parameters()) != modules_before);
    }
  }
}

TEST_CASE("loss decreases monotonically under a frozen router") {
  modules::BankSpec spec;
  spec.kind = modules::ModuleKind::linear;
  spec.count = 2;
  spec.in_dim = spec.out_dim = 2;
  spec.init = modules::InitScheme::identity;
  std::vector<modules::ModuleBank> v;
  v.push_back(modules::build_bank(spec, 0));
  engine::ModuleBanks banks(std::move(v));
  auto arch = engine::RouterArchitecture::single(std::make_unique<testing_support::ScriptedPolicy>(
                                                     std::vector<std::size_t>{1}),
                                                 1);
  Trainer trainer(arch, banks, sgd_config(0.01, 0.01));
  Rng data(5);
  std::vector<Sample> batch;
  for (int i = 0; i < 8; ++i) {
    Sample s;
    s.x = testing_support::random_tensor(data, {2});
    s.y = Tensor::vector({0.0, 0.0});
    batch.push_back(s);
  }
  Rng rng(0);
  double previous = trainer.evaluate(batch).mean_loss;
  for (int step = 0; step < 10; ++step) {
    trainer.train_step(batch, rng);
    const double now = trainer.evaluate(batch).mean_loss;
    CHECK(now < previous);
    previous = now;
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto run = [] {
    engine::ModuleBanks banks = scalar_banks({0.5, -0.3, 0.9}, true);
    auto arch = engine::RouterArchitecture::single(neural_router(policy::Strategy::q_learning, 4, 3, 0.0), 3);
    TrainConfig c = sgd_config(0.05, 0.01);
    c.reward.alpha = -0.3;
    Trainer trainer(arch, banks, c);
    Rng data(9), rng(4);
    std::vector<Sample> batch;
    for (int i = 0; i < 40; ++i) {
      const double x = data.uniform(-1, 1);
      batch.push_back(regression(x, -x));
    }
    std::vector<double> trace;
    for (int epoch = 0; epoch < 5; ++epoch) {
      StepMetrics m = trainer.train_step(batch, rng);
      trace.push_back(m.mean_loss);
      trace.push_back(m.mean_return);
      trace.push_back(trainer.evaluate(batch).mean_loss);
    }
    trace.push_back(checksum(banks.parameters()));
    trace.push_back(checksum(arch.parameters()));
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("usage windows follow module choices") {
  engine::ModuleBanks banks = scalar_banks({0.5, -0.3}, true);
  auto arch = engine::RouterArchitecture::single(
      std::make_unique<testing_support::ScriptedPolicy>(std::vector<std::size_t>{1, 2}), 3);
  TrainConfig c = sgd_config(0.01, 0.01);
  c.reward.window = 10;
  Trainer trainer(arch, banks, c);
  Rng rng(0);
  for (int i = 0; i < 4; ++i) trainer.train_sample(regression(0.5, 0.1), rng);
  CHECK(trainer.window(0, 0).count(1) == 4);
  CHECK(trainer.window(0, 0).observed() == 4);
  CHECK(trainer.samples_trained() == 4);
}

TEST_CASE("non-finite loss aborts with sample and path") {
  engine::ModuleBanks banks = scalar_banks({0.5}, false);
  auto arch = engine::RouterArchitecture::single(
      std::make_unique<testing_support::ScriptedPolicy>(std::vector<std::size_t>{0}), 1);
  Trainer trainer(arch, banks, sgd_config(0.01, 0.01));
  Rng rng(0);
  try {
    trainer.train_sample(regression(1e300, -1e300), rng);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("sample 0") != std::string::npos);
    CHECK(msg.find("path") != std::string::npos);
  }
}

TEST_CASE("cross-entropy training needs labels") {
  engine::ModuleBanks banks = scalar_banks({0.5}, false);
  auto arch = engine::RouterArchitecture::single(
      std::make_unique<testing_support::ScriptedPolicy>(std::vector<std::size_t>{0}), 1);
  TrainConfig c = sgd_config(0.01, 0.01);
  c.loss = LossKind::cross_entropy;
  Trainer trainer(arch, banks, c);
  Rng rng(0);
  CHECK_THROWS_AS(trainer.train_sample(regression(1.0, 1.0), rng), ConfigError);
}
