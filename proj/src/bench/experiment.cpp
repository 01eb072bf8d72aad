#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "routing/bench.hpp"
#include "routing/errors.hpp"

namespace routing::bench {

std::string csv_header() { return "epoch,split,loss,metric,entropy,usage_json,collapse"; }

std::string usage_json(const train::UsageCounts& usage) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [slot, counts] : usage) j[slot] = counts;
  return j.dump();
}

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string csv_line(const MetricsRow& row) {
  return std::to_string(row.epoch) + ',' + row.split + ',' + number(row.loss) + ',' + number(row.metric) + ',' +
         number(row.entropy) + ',' + quoted(usage_json(row.usage)) + ',' + (row.collapse ? "1" : "0");
}

const MetricsRow& ExperimentResult::final_row(std::string_view split) const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (it->split == split) return *it;
  throw std::out_of_range("experiment: no rows for split '" + std::string(split) + "'");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, 0xe90c0000ULL + epoch);
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

namespace {

struct Network {
  engine::ModuleBanks banks;
  std::optional<engine::RouterArchitecture> arch;
};

Network build_network(const ExperimentConfig& cfg, const SyntheticTask& task) {
  modules::BankSpec spec = cfg.bank;
  spec.in_dim = task.in_dim;
  spec.out_dim = task.out_dim;
  std::vector<modules::ModuleBank> banks;
  const std::size_t bank_count = cfg.bank_per_depth ? cfg.max_depth : 1;
  for (std::size_t d = 0; d < bank_count; ++d) banks.push_back(modules::build_bank(spec, mix_seed(cfg.seed * 131 + d + 11)));
  Network net{engine::ModuleBanks(std::move(banks)), std::nullopt};

  policy::PolicyContext ctx;
  ctx.action_space = net.banks.bank_for(0).action_space_size();
  ctx.state_width = task.in_dim;
  ctx.max_depth = cfg.max_depth;
  std::uint64_t next_seed = 0;
  auto make = [&](const policy::PolicyConfig& pc, const policy::PolicyContext& c) {
    policy::PolicyContext local = c;
    local.seed = mix_seed(cfg.seed * 977 + 5000 + next_seed++);
    return policy::make_policy(pc, local);
  };

  switch (cfg.architecture) {
    case engine::ArchitectureKind::single:
      net.arch.emplace(engine::RouterArchitecture::single(make(cfg.policy, ctx), cfg.max_depth));
      break;
    case engine::ArchitectureKind::per_decision: {
      std::vector<std::unique_ptr<policy::Policy>> subs;
      for (std::size_t d = 0; d < cfg.max_depth; ++d) subs.push_back(make(cfg.policy, ctx));
      net.arch.emplace(engine::RouterArchitecture::per_decision(std::move(subs)));
      break;
    }
    case engine::ArchitectureKind::dispatched: {
      std::vector<std::unique_ptr<policy::Policy>> subs;
      if (cfg.dispatch == engine::DispatchMode::by_meta) {
        std::vector<MetaLabel> labels(task.meta_count);
        std::iota(labels.begin(), labels.end(), 0);
        for (std::size_t i = 0; i < labels.size(); ++i) subs.push_back(make(cfg.policy, ctx));
        net.arch.emplace(engine::RouterArchitecture::dispatched_by_meta(std::move(labels), std::move(subs), cfg.max_depth));
      } else {
        for (std::size_t i = 0; i < cfg.dispatch_routers; ++i) subs.push_back(make(cfg.policy, ctx));
        policy::PolicyContext dctx = ctx;
        dctx.action_space = cfg.dispatch_routers;
        net.arch.emplace(engine::RouterArchitecture::dispatched_by_input(make(cfg.policy, dctx), std::move(subs),
                                                                         cfg.max_depth));
      }
      break;
    }
  }
  return net;
}

MetricsRow make_row(std::size_t epoch, const char* split, const train::EvalResult& eval, std::vector<double>& history,
                    double threshold) {
  MetricsRow row;
  row.epoch = epoch;
  row.split = split;
  row.loss = eval.mean_loss;
  row.metric = eval.metric;
  row.entropy = selection_entropy(eval.usage);
  row.usage = eval.usage;
  history.push_back(row.entropy);
  row.collapse = detect_collapse(history, threshold);
  return row;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* csv) {
  cfg.validate();
  TaskSpec spec = cfg.task;
  spec.seed = cfg.seed;
  SyntheticTask task = gen_task(spec);
  if (cfg.architecture == engine::ArchitectureKind::dispatched && cfg.dispatch == engine::DispatchMode::by_meta &&
      task.meta_count == 0)
    throw ConfigError("config: dispatch = meta but the task carries no meta labels");

  Network net = build_network(cfg, task);
  train::TrainConfig tc;
  tc.reward = cfg.reward;
  tc.module_optimizer = cfg.optimizer;
  tc.router_optimizer.kind = cfg.router_optimizer;
  tc.router_optimizer.lr = cfg.policy.lr;
  tc.loss = task.loss;
  train::Trainer trainer(*net.arch, net.banks, tc);

  const auto roles = train::assign_roles(cfg.split, task.train.size(), cfg.seed);
  for (std::size_t i = 0; i < task.train.size(); ++i) task.train[i].role = roles[i];

  ExperimentResult result;
  std::vector<double> train_history, test_history;
  if (csv) *csv << csv_header() << '\n' << std::flush;
  Rng rng = Rng::derive(cfg.seed, 0x7a11);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i : epoch_order(task.train.size(), cfg.seed, epoch)) trainer.train_sample(task.train[i], rng);
    result.rows.push_back(make_row(epoch, "train", trainer.evaluate(task.train), train_history, cfg.collapse_threshold));
    result.rows.push_back(make_row(epoch, "test", trainer.evaluate(task.test), test_history, cfg.collapse_threshold));
    if (csv) *csv << csv_line(result.rows[result.rows.size() - 2]) << '\n' << csv_line(result.rows.back()) << '\n' << std::flush;
  }
  return result;
}

}  // namespace routing::bench
