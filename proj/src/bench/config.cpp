#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "routing/bench.hpp"
#include "routing/errors.hpp"

namespace routing::bench {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config: '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config: '" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

modules::InitScheme to_init(std::string_view v) {
  if (v == "uniform") return modules::InitScheme::uniform;
  if (v == "identity") return modules::InitScheme::identity;
  throw ConfigError("config: unknown init scheme '" + std::string(v) + "'");
}

using Setter = std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)>;

struct Key {
  const char* name;
  const char* fallback;  // documented default
  Setter set;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"task", "two-mode-linear", [](auto& c, auto, auto v) { c.task.kind = parse_task(v); }},
      {"task.train_size", "0", [](auto& c, auto k, auto v) { c.task.train_size = to_uint(k, v); }},
      {"task.test_size", "0", [](auto& c, auto k, auto v) { c.task.test_size = to_uint(k, v); }},
      {"task.noise", "default", [](auto& c, auto k, auto v) {
         if (v == "default") c.task.noise.reset();
         else c.task.noise = to_double(k, v);
       }},
      {"task.tasks", "4", [](auto& c, auto k, auto v) { c.task.tasks = to_uint(k, v); }},
      {"task.separation", "4", [](auto& c, auto k, auto v) { c.task.separation = to_double(k, v); }},
      {"task.dim", "8", [](auto& c, auto k, auto v) { c.task.dim = to_uint(k, v); }},
      {"task.meta", "none", [](auto& c, auto, auto v) { c.task.meta = parse_meta_source(v); }},
      {"task.bins", "8", [](auto& c, auto k, auto v) { c.task.bins = to_uint(k, v); }},
      {"architecture", "single", [](auto& c, auto, auto v) { c.architecture = engine::parse_architecture(v); }},
      {"dispatch", "meta", [](auto& c, auto, auto v) { c.dispatch = engine::parse_dispatch_mode(v); }},
      {"dispatch.routers", "2", [](auto& c, auto k, auto v) { c.dispatch_routers = to_uint(k, v); }},
      {"max_depth", "1", [](auto& c, auto k, auto v) { c.max_depth = to_uint(k, v); }},
      {"bank.kind", "scalar-linear", [](auto& c, auto, auto v) { c.bank.kind = modules::parse_module_kind(v); }},
      {"bank.count", "3", [](auto& c, auto k, auto v) { c.bank.count = to_uint(k, v); }},
      {"bank.hidden", "8", [](auto& c, auto k, auto v) { c.bank.hidden = to_uint(k, v); }},
      {"bank.init", "uniform", [](auto& c, auto, auto v) { c.bank.init = to_init(v); }},
      {"bank.termination", "false", [](auto& c, auto k, auto v) { c.bank.allow_termination = to_bool(k, v); }},
      {"bank.skip", "false", [](auto& c, auto k, auto v) { c.bank.allow_skip = to_bool(k, v); }},
      {"bank.per_depth", "false", [](auto& c, auto k, auto v) { c.bank_per_depth = to_bool(k, v); }},
      {"policy", "q-learning", [](auto& c, auto, auto v) { c.policy.strategy = policy::parse_strategy(v); }},
      {"policy.approximator", "neural",
       [](auto& c, auto, auto v) { c.policy.approximator = policy::parse_approximator(v); }},
      {"policy.lr", "default", [](auto& c, auto k, auto v) {
         c.policy_lr_set = v != "default";
         if (c.policy_lr_set) c.policy.lr = to_double(k, v);
       }},
      {"policy.epsilon", "0.05", [](auto& c, auto k, auto v) { c.policy.epsilon = to_double(k, v); }},
      {"policy.tau", "0.5", [](auto& c, auto k, auto v) { c.policy.tau = to_double(k, v); }},
      {"policy.baseline_decay", "0.1", [](auto& c, auto k, auto v) { c.policy.baseline_decay = to_double(k, v); }},
      {"policy.hidden", "0", [](auto& c, auto k, auto v) { c.policy.hidden = to_uint(k, v); }},
      {"policy.table_init", "0", [](auto& c, auto k, auto v) { c.policy.table_init = to_double(k, v); }},
      {"policy.control_variate_hidden", "16",
       [](auto& c, auto k, auto v) { c.policy.control_variate_hidden = to_uint(k, v); }},
      {"policy.freeze_control_variate", "false",
       [](auto& c, auto k, auto v) { c.policy.freeze_control_variate = to_bool(k, v); }},
      {"policy.wpl_floor", "0.001", [](auto& c, auto k, auto v) { c.policy.wpl_floor = to_double(k, v); }},
      {"policy.wpl_value_rate", "0.1", [](auto& c, auto k, auto v) { c.policy.wpl_value_rate = to_double(k, v); }},
      {"reward.final", "negative-loss", [](auto& c, auto, auto v) { c.reward.final_kind = train::parse_final_reward(v); }},
      {"reward.alpha", "0", [](auto& c, auto k, auto v) { c.reward.alpha = to_double(k, v); }},
      {"reward.window", "0", [](auto& c, auto k, auto v) { c.reward.window = to_uint(k, v); }},
      {"reward.kappa", "0", [](auto& c, auto k, auto v) { c.reward.kappa = to_double(k, v); }},
      {"split.mode", "both", [](auto& c, auto, auto v) {
         if (v == "both") c.split.disjoint = false;
         else if (v == "disjoint") c.split.disjoint = true;
         else throw ConfigError("config: split.mode must be both or disjoint");
       }},
      {"split.module_fraction", "1", [](auto& c, auto k, auto v) { c.split.module_fraction = to_double(k, v); }},
      {"optimizer", "plain-sgd", [](auto& c, auto, auto v) { c.optimizer.kind = nn::parse_optimizer_kind(v); }},
      {"optimizer.lr", "0.05", [](auto& c, auto k, auto v) { c.optimizer.lr = to_double(k, v); }},
      {"optimizer.momentum", "0.9", [](auto& c, auto k, auto v) { c.optimizer.momentum = to_double(k, v); }},
      {"router_optimizer", "plain-sgd", [](auto& c, auto, auto v) { c.router_optimizer = nn::parse_optimizer_kind(v); }},
      {"epochs", "50", [](auto& c, auto k, auto v) { c.epochs = to_uint(k, v); }},
      {"collapse_threshold", "0.1", [](auto& c, auto k, auto v) { c.collapse_threshold = to_double(k, v); }},
      {"seed", "0", [](auto& c, auto k, auto v) { c.seed = to_uint(k, v); }},
      {"out", "", [](auto& c, auto, auto v) { c.out = std::string(v); }},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (epochs == 0) throw ConfigError("config: epochs must be positive");
  if (max_depth == 0) throw ConfigError("config: max_depth must be positive");
  if (bank.count == 0) throw ConfigError("config: bank.count must be positive");
  if (!(collapse_threshold >= 0.0)) throw ConfigError("config: collapse_threshold must be >= 0");
  policy.validate();
  split.validate();
  optimizer.validate();
  const std::size_t actions = bank.count + (bank.allow_termination ? 1 : 0) + (bank.allow_skip ? 1 : 0);
  reward.validate(actions);
  if (actions == 1 && bank.allow_termination)
    throw ConfigError("config: a bank holding only termination cannot route");

  const bool classification = task.kind == TaskKind::multitask_blobs;
  if (reward.final_kind == train::FinalRewardKind::plus_minus_one && !classification)
    throw ConfigError("config: reward.final = plus-minus-one needs a classification task");
  const bool has_meta = task.meta != MetaSource::none;
  if (architecture == engine::ArchitectureKind::dispatched && dispatch == engine::DispatchMode::by_meta && !has_meta)
    throw ConfigError("config: dispatch = meta needs task.meta");
  if (policy.approximator == policy::Approximator::tabular && !has_meta)
    throw ConfigError("config: the tabular approximator is keyed on meta labels; set task.meta");
  if (architecture == engine::ArchitectureKind::dispatched && dispatch == engine::DispatchMode::by_input &&
      dispatch_routers == 0)
    throw ConfigError("config: dispatch.routers must be positive");
  const std::size_t width = classification ? task.dim : 1;
  const std::size_t out_width = classification ? 2 : 1;
  const bool multi_step = max_depth > 1 || bank.allow_skip;
  if (multi_step && width != out_width)
    throw ConfigError("config: routing deeper than one step needs modules with equal input and output width");
  if (bank.kind == modules::ModuleKind::scalar_linear && width != out_width)
    throw ConfigError("config: scalar-linear modules need equal input and output width");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = keys();
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return key == k.name; });
    if (it == table.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    try {
      it->set(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!cfg.policy_lr_set) cfg.policy.lr = 0.1 * cfg.optimizer.lr;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string default_config_text() {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.fallback + "\n";
  return out;
}

std::string preset_text(std::string_view name) {
  // Single decision over three scalar slopes on two-mode data without meta.
  static const std::string collapse =
      "task = two-mode-linear\n"
      "task.meta = none\n"
      "architecture = single\n"
      "max_depth = 1\n"
      "bank.kind = scalar-linear\n"
      "bank.count = 3\n"
      "policy = q-learning\n"
      "policy.approximator = neural\n"
      "policy.hidden = 8\n"
      "policy.lr = 0.1\n"
      "policy.epsilon = 0.05\n"
      "reward.final = negative-loss\n"
      "reward.alpha = 0\n"
      "reward.window = 6\n"
      "reward.kappa = 1\n"
      "optimizer = plain-sgd\n"
      "optimizer.lr = 0.05\n"
      "epochs = 20\n";
  // Depth-3 scalar routing keyed on the bin of x, with termination.
  static const std::string overfit =
      "task = noisy-linear\n"
      "task.meta = input-bin\n"
      "task.bins = 8\n"
      "architecture = single\n"
      "max_depth = 3\n"
      "bank.kind = scalar-linear\n"
      "bank.count = 3\n"
      "bank.termination = true\n"
      "policy = q-learning\n"
      "policy.approximator = tabular\n"
      "policy.lr = 0.05\n"
      "policy.epsilon = 0.05\n"
      "reward.final = negative-loss\n"
      "optimizer = plain-sgd\n"
      "optimizer.lr = 0.05\n"
      "epochs = 100\n";
  static const std::string overfit_baseline =
      "task = noisy-linear\n"
      "task.meta = input-bin\n"
      "task.bins = 8\n"
      "architecture = single\n"
      "max_depth = 1\n"
      "bank.kind = scalar-linear\n"
      "bank.count = 1\n"
      "policy = q-learning\n"
      "policy.approximator = tabular\n"
      "reward.final = negative-loss\n"
      "optimizer = plain-sgd\n"
      "optimizer.lr = 0.05\n"
      "epochs = 100\n";
  // Four blob tasks, one tabular router per task label.
  static const std::string meta =
      "task = multitask-blobs\n"
      "task.tasks = 4\n"
      "task.meta = label\n"
      "architecture = dispatched\n"
      "dispatch = meta\n"
      "max_depth = 1\n"
      "bank.kind = linear\n"
      "bank.count = 4\n"
      "policy = q-learning\n"
      "policy.approximator = tabular\n"
      "policy.epsilon = 0.1\n"
      "reward.final = plus-minus-one\n"
      "optimizer = plain-sgd\n"
      "optimizer.lr = 0.05\n"
      "epochs = 200\n";
  static const std::string meta_baseline =
      "task = multitask-blobs\n"
      "task.tasks = 4\n"
      "task.meta = none\n"
      "architecture = single\n"
      "max_depth = 1\n"
      "bank.kind = linear\n"
      "bank.count = 4\n"
      "policy = q-learning\n"
      "policy.approximator = neural\n"
      "policy.epsilon = 0.1\n"
      "reward.final = plus-minus-one\n"
      "optimizer = plain-sgd\n"
      "optimizer.lr = 0.05\n"
      "epochs = 200\n";
  if (name == "demo-collapse") return collapse;
  if (name == "demo-collapse-diverse") return collapse + "reward.alpha = -0.5\n";
  if (name == "demo-overfit") return overfit;
  if (name == "demo-overfit-baseline") return overfit_baseline;
  if (name == "demo-meta") return meta;
  if (name == "demo-meta-baseline") return meta_baseline;
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

}  // namespace routing::bench
