#pragma once
// Synthetic tasks, selection metrics, experiment configuration and the
// epoch loop that writes metrics CSV.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "routing/engine.hpp"
#include "routing/module_bank.hpp"
#include "routing/policy.hpp"
#include "routing/train.hpp"

namespace routing::bench {

enum class TaskKind { two_mode_linear, noisy_linear, multitask_blobs };
enum class MetaSource { none, label, input_bin };

TaskKind parse_task(std::string_view name);
std::string_view to_string(TaskKind kind);
MetaSource parse_meta_source(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::two_mode_linear;
  std::size_t train_size = 0;  // 0 picks the task default
  std::size_t test_size = 0;
  std::optional<double> noise;  // sigma; task default when unset
  std::size_t tasks = 4;        // multitask-blobs T
  double separation = 4.0;      // multitask-blobs distance between class means
  std::size_t dim = 8;          // multitask-blobs input width
  MetaSource meta = MetaSource::none;
  std::size_t bins = 8;  // input-bin meta over x in [-1, 1]
  std::uint64_t seed = 0;
};

struct SyntheticTask {
  TaskKind kind = TaskKind::two_mode_linear;
  std::vector<train::Sample> train;
  std::vector<train::Sample> test;
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::size_t classes = 0;     // 0 for regression
  std::size_t meta_count = 0;  // distinct meta labels (0 without meta)
  train::LossKind loss = train::LossKind::mse;
};

// two-mode-linear: x ~ U[-1, 1], y = (+2 or -2) x + N(0, 0.1^2).
// noisy-linear: y = x + N(0, 0.15^2), 32 train / 200 test.
// multitask-blobs: class c in {0, 1} at (2c - 1) (sep / 2) d_t + N(0, I).
SyntheticTask gen_task(const TaskSpec& spec);

std::size_t input_bin(double x, std::size_t bins);

// Mean over slots of the Shannon entropy (nats) of each slot's counts.
double selection_entropy(std::span<const std::vector<std::size_t>> slots);
// Routing slots only ("d<depth>"); the dispatcher slot is excluded.
double selection_entropy(const train::UsageCounts& usage);

// True when the last entry is below threshold or exactly zero.
bool detect_collapse(std::span<const double> entropy_history, double threshold = 0.1);

struct ExperimentConfig {
  TaskSpec task;
  engine::ArchitectureKind architecture = engine::ArchitectureKind::single;
  engine::DispatchMode dispatch = engine::DispatchMode::by_meta;
  std::size_t dispatch_routers = 2;  // by-input subrouter count
  std::size_t max_depth = 1;
  modules::BankSpec bank;  // in/out dims come from the task
  bool bank_per_depth = false;
  policy::PolicyConfig policy{.approximator = policy::Approximator::neural};
  bool policy_lr_set = false;  // otherwise 0.1 x module lr
  train::RewardConfig reward;
  train::SplitConfig split;
  nn::OptimizerConfig optimizer;
  nn::OptimizerKind router_optimizer = nn::OptimizerKind::plain_sgd;
  std::size_t epochs = 50;
  double collapse_threshold = 0.1;
  std::uint64_t seed = 0;
  std::string out;

  void validate() const;
};

// Flat `key = value` lines with `#` comments. Unknown keys throw ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
// The documented key list with defaults, one `key = value` per line.
std::string default_config_text();

// Built-in configurations: "demo-collapse", "demo-collapse-diverse",
// "demo-overfit", "demo-overfit-baseline", "demo-meta", "demo-meta-baseline".
std::string preset_text(std::string_view name);

struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double metric = 0.0;
  double entropy = 0.0;
  train::UsageCounts usage;
  bool collapse = false;
};

std::string csv_header();
std::string csv_line(const MetricsRow& row);
std::string usage_json(const train::UsageCounts& usage);

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  const MetricsRow& final_row(std::string_view split) const;
};

// Same permutation for a given (seed, epoch) wherever it is asked for.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Builds everything from cfg, trains, evaluates both splits after each
// epoch and streams rows to `csv` (if given) as they are produced. A
// NumericError propagates after the rows so far have been written.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* csv = nullptr);

}  // namespace routing::bench
