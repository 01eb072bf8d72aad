// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "routing/bench.hpp"
#include "routing/engine.hpp"
#include "routing/estimator_lab.hpp"
#include "routing/train.hpp"
#include "test_support.hpp"

using namespace routing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return (v[v.size() / 2] + v[(v.size() - 1) / 2]) / 2;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome gradient_oracle() {
  Rng rng(1001);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    lab::BanditInstance inst = lab::BanditInstance::random(1 + rng.uniform_index(32), rng);
    const auto g = lab::analytic_gradient(inst);
    const double h = 1e-5;
    for (std::size_t j = 0; j < inst.k(); ++j) {
      lab::BanditInstance up = inst, down = inst;
      up.theta[j] += h;
      down.theta[j] -= h;
      worst = std::max(worst, std::abs((lab::objective(up) - lab::objective(down)) / (2 * h) - g[j]));
    }
  }
  return {worst <= 1e-8, "max abs error " + fmt("%.3g", worst)};
}

Outcome reinforce_unbiased() {
  Rng rng(1002);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    lab::BanditInstance inst = lab::BanditInstance::random(1 + rng.uniform_index(6), rng);
    const auto truth = lab::analytic_gradient(inst);
    for (double b : {0.0, 0.5, 10.0}) {
      const auto e = lab::reinforce_expectation(inst, b);
      for (std::size_t j = 0; j < inst.k(); ++j) worst = std::max(worst, std::abs(e[j] - truth[j]));
    }
  }
  return {worst <= 1e-12, "max abs error " + fmt("%.3g", worst)};
}

Outcome estimator_protocol() {
  lab::ProtocolConfig c;
  c.ks = {4, 8, 16};
  c.estimators = {lab::Estimator::reinforce, lab::Estimator::reinforce_baseline, lab::Estimator::gumbel};
  c.seed = 2024;
  const lab::EstimatorReport r = lab::run_protocol(c);
  Outcome out;
  std::ostringstream d;
  for (std::size_t k : c.ks) {
    const auto& re = r.row(lab::Estimator::reinforce, k);
    const auto& rb = r.row(lab::Estimator::reinforce_baseline, k);
    const auto& gu = r.row(lab::Estimator::gumbel, k);
    const bool a = gu.variance < re.variance;
    const bool b = gu.biased_fraction >= 0.8;
    const bool cc = rb.variance <= re.variance;
    out.pass = out.pass && a && b && cc;
    d << "k=" << k << " (a) " << (a ? "ok" : "no") << " var gumbel " << fmt("%.3g", gu.variance) << " < reinforce "
      << fmt("%.3g", re.variance) << "; (b) " << (b ? "ok" : "no") << " gumbel biased on "
      << fmt("%.2f", gu.biased_fraction) << " of instances; (c) " << (cc ? "ok" : "no") << " baseline var "
      << fmt("%.3g", rb.variance) << ". ";
  }
  out.detail = d.str();
  return out;
}

Outcome forward_composition() {
  const std::vector<double> slopes{3.0, 0.1, 0.8};
  modules::BankSpec spec;
  spec.slopes = slopes;
  spec.allow_termination = true;
  std::vector<modules::ModuleBank> v;
  v.push_back(modules::build_bank(spec, 0));
  engine::ModuleBanks banks(std::move(v));
  Rng rng(1004);
  std::size_t checked = 0, mismatched = 0;
  for (std::size_t len = 1; len <= 3; ++len) {
    const std::size_t total = len == 1 ? 3 : len == 2 ? 9 : 27;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<std::size_t> script;
      std::vector<double> chosen;
      for (std::size_t i = 0, c = code; i < len; ++i, c /= 3) {
        script.push_back(c % 3);
        chosen.push_back(slopes[c % 3]);
      }
      if (len < 3) script.push_back(3);
      for (double x : {1.0, -2.5, rng.uniform(-5, 5)}) {
        auto arch = engine::RouterArchitecture::single(std::make_unique<testing_support::ScriptedPolicy>(script), 3);
        nn::Graph g;
        engine::Trajectory t = engine::route_forward(arch, banks, g, nn::Tensor::vector({x}), 0, rng);
        ++checked;
        mismatched += t.output.value()[0] != testing_support::fold_slopes(x, chosen);
      }
    }
  }
  auto arch = engine::RouterArchitecture::single(
      std::make_unique<testing_support::ScriptedPolicy>(std::vector<std::size_t>{0, 2, 3}), 3);
  nn::Graph g;
  const double path = engine::route_forward(arch, banks, g, nn::Tensor::vector({1.0}), 0, rng).output.value()[0];
  const bool example = path == 3.0 * 0.8;
  return {mismatched == 0 && example, std::to_string(checked) + " routed outputs, " + std::to_string(mismatched) +
                                          " mismatches; path <3, 0.8> on 1 gives " + fmt("%.17g", path)};
}

Outcome formulas() {
  using train::RewardConfig;
  std::vector<std::pair<std::string, bool>> checks;
  RewardConfig c;
  c.kappa = 0.0;
  checks.push_back({"squash k=0", train::squash_multiplier(c, 2, 3) == 1.0});
  c.kappa = 2.0;
  checks.push_back({"squash none explored", train::squash_multiplier(c, 0, 3) == 1.0});
  checks.push_back({"squash half k=2", train::squash_multiplier(c, 1, 2) == 0.25});

  train::UsageWindow w(4);
  for (std::size_t a : {0u, 1u, 0u, 2u}) w.record(a);
  c.alpha = 0.5;
  checks.push_back({"reg 0.125", train::reg_reward(c, w, 0, 2) == 0.125});
  c.alpha = 0.0;
  checks.push_back({"reg alpha 0", train::reg_reward(c, w, 0, 2) == 0.0});
  train::UsageWindow one(1);
  one.record(1);
  c.alpha = -1.0;
  checks.push_back({"reg -1", train::reg_reward(c, one, 1, 1) == -1.0});

  RewardConfig pm;
  pm.final_kind = train::FinalRewardKind::plus_minus_one;
  checks.push_back({"final +1", train::final_reward(pm, nn::Tensor::vector({0.0, 1.0}), 1, 0.3) == 1.0});
  RewardConfig nl;
  checks.push_back({"final -0.69", train::final_reward(nl, nn::Tensor::vector({0.0}), std::nullopt, 0.69) == -0.69});
  checks.push_back({"final 0", train::final_reward(nl, nn::Tensor::vector({0.0}), std::nullopt, 0.0) == 0.0});

  using Slots = std::vector<std::vector<std::size_t>>;
  checks.push_back({"entropy ln 3", bench::selection_entropy(Slots{{4, 4, 4}}) == std::log(3.0)});
  checks.push_back({"entropy 0", bench::selection_entropy(Slots{{7, 0, 0}}) == 0.0});
  checks.push_back({"entropy ln 2", bench::selection_entropy(Slots{{2, 2, 0}}) == std::log(2.0)});

  std::string failed;
  for (const auto& [name, ok] : checks)
    if (!ok) failed += (failed.empty() ? "" : ", ") + name;
  return {failed.empty(), failed.empty() ? std::to_string(checks.size()) + " examples exact" : "mismatch: " + failed};
}

std::vector<bench::ExperimentResult> seeds(const std::string& preset, std::size_t n = 20) {
  std::vector<bench::ExperimentResult> out;
  for (std::size_t s = 0; s < n; ++s) {
    bench::ExperimentConfig cfg = bench::parse_config(bench::preset_text(preset));
    cfg.seed = s;
    out.push_back(bench::run_experiment(cfg));
  }
  return out;
}

Outcome collapse() {
  std::vector<double> plain, diverse;
  std::size_t collapsed = 0;
  for (const auto& r : seeds("demo-collapse")) {
    plain.push_back(r.final_row("train").entropy);
    collapsed += r.final_row("train").entropy < 0.1;
  }
  for (const auto& r : seeds("demo-collapse-diverse")) diverse.push_back(r.final_row("train").entropy);
  const double mp = median(plain), md = median(diverse);
  return {collapsed >= 6 && md > mp, std::to_string(collapsed) + "/20 collapsed at alpha 0; median entropy " +
                                         fmt("%.3f", mp) + " vs " + fmt("%.3f", md) + " at alpha -0.5"};
}

Outcome overfit() {
  std::vector<double> rtr, rte, btr, bte;
  for (const auto& r : seeds("demo-overfit")) {
    rtr.push_back(r.final_row("train").metric);
    rte.push_back(r.final_row("test").metric);
  }
  for (const auto& r : seeds("demo-overfit-baseline")) {
    btr.push_back(r.final_row("train").metric);
    bte.push_back(r.final_row("test").metric);
  }
  const double a = median(rtr), b = median(btr), c = median(rte), d = median(bte);
  return {a <= b && c >= d, "median train mse routed " + fmt("%.4f", a) + " vs baseline " + fmt("%.4f", b) +
                                "; test " + fmt("%.4f", c) + " vs " + fmt("%.4f", d)};
}

Outcome meta_benefit() {
  std::vector<double> routed, baseline;
  for (const auto& r : seeds("demo-meta")) routed.push_back(r.final_row("test").metric);
  for (const auto& r : seeds("demo-meta-baseline")) baseline.push_back(r.final_row("test").metric);
  const double a = median(routed), b = median(baseline);
  return {a >= 0.9 && b < a, "median test accuracy dispatched " + fmt("%.3f", a) + " vs single no-meta " +
                                 fmt("%.3f", b)};
}

Outcome reduction_guard() {
  bench::ExperimentConfig cfg = bench::parse_config(
      "task = noisy-linear\nbank.count = 1\npolicy = q-learning\npolicy.approximator = neural\n"
      "optimizer = plain-sgd\noptimizer.lr = 0.05\nepochs = 50\nseed = 17\n");
  const bench::ExperimentResult result = bench::run_experiment(cfg);

  bench::TaskSpec spec = cfg.task;
  spec.seed = cfg.seed;
  const bench::SyntheticTask task = bench::gen_task(spec);
  modules::BankSpec bank = cfg.bank;
  double w = modules::build_bank(bank, mix_seed(cfg.seed * 131 + 11)).module(0).parameter(0).value[0];
  auto mean_loss = [&](const std::vector<train::Sample>& data) {
    double total = 0.0;
    for (const auto& s : data) {
      const double d = w * s.x.values()[0] - s.y.values()[0];
      total += d * d;
    }
    return total / static_cast<double>(data.size());
  };
  double worst = 0.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i : bench::epoch_order(task.train.size(), cfg.seed, epoch)) {
      const double x = task.train[i].x.values()[0], y = task.train[i].y.values()[0];
      w -= cfg.optimizer.lr * 2.0 * (w * x - y) * x;
    }
    const auto& tr = result.rows[2 * (epoch - 1)];
    const auto& te = result.rows[2 * (epoch - 1) + 1];
    worst = std::max({worst, std::abs(tr.loss - mean_loss(task.train)), std::abs(te.loss - mean_loss(task.test))});
  }
  return {worst <= 1e-9, "max per-epoch loss gap " + fmt("%.3g", worst) + " over 50 epochs"};
}

Outcome determinism() {
  std::vector<std::string> failed;
  for (const char* preset : {"demo-collapse", "demo-collapse-diverse", "demo-overfit", "demo-overfit-baseline", "demo-meta"}) {
    bench::ExperimentConfig cfg = bench::parse_config(bench::preset_text(preset));
    cfg.seed = 3;
    std::ostringstream a, b;
    bench::run_experiment(cfg, &a);
    bench::run_experiment(cfg, &b);
    if (a.str() != b.str()) failed.push_back(preset);
  }
  lab::ProtocolConfig c;
  c.ks = {2, 4};
  c.rewards = c.policies = 4;
  std::ostringstream a, b;
  lab::run_protocol(c).write_csv(a);
  lab::run_protocol(c).write_csv(b);
  if (a.str() != b.str()) failed.push_back("estimator-lab");
  std::string names;
  for (const auto& f : failed) names += " " + f;
  return {failed.empty(), failed.empty() ? "6 runs repeated bit-identically" : "differs:" + names};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0 means no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient oracle", 5, gradient_oracle},
      {2, "reinforce unbiasedness", 5, reinforce_unbiased},
      {3, "estimator protocol", 180, estimator_protocol},
      {4, "forward composition", 1, forward_composition},
      {5, "formula exactness", 0, formulas},
      {6, "collapse phenomenon", 120, collapse},
      {7, "overfitting phenomenon", 120, overfit},
      {8, "meta-information benefit", 180, meta_benefit},
      {9, "reduction guard", 0, reduction_guard},
      {10, "determinism", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      o.pass = false;
      o.detail += " [over time limit " + fmt("%.0f", c.limit_s) + " s]";
    }
    failures += !o.pass;
    std::printf("%s %d %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
