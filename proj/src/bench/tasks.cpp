#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "routing/bench.hpp"
#include "routing/errors.hpp"

namespace routing::bench {

TaskKind parse_task(std::string_view name) {
  if (name == "two-mode-linear") return TaskKind::two_mode_linear;
  if (name == "noisy-linear") return TaskKind::noisy_linear;
  if (name == "multitask-blobs") return TaskKind::multitask_blobs;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::two_mode_linear:
      return "two-mode-linear";
    case TaskKind::noisy_linear:
      return "noisy-linear";
    case TaskKind::multitask_blobs:
      return "multitask-blobs";
  }
  return "unknown";
}

MetaSource parse_meta_source(std::string_view name) {
  if (name == "none") return MetaSource::none;
  if (name == "label") return MetaSource::label;
  if (name == "input-bin") return MetaSource::input_bin;
  throw ConfigError("unknown meta source '" + std::string(name) + "'");
}

std::size_t input_bin(double x, std::size_t bins) {
  if (bins == 0) throw ConfigError("input bins must be positive");
  const double u = (std::clamp(x, -1.0, 1.0) + 1.0) / 2.0;
  return std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)));
}

namespace {

train::Sample scalar_sample(double x, double y) {
  return train::Sample{nn::Tensor::vector({x}), nn::Tensor::vector({y}), std::nullopt, std::nullopt};
}

void attach_input_bins(std::vector<train::Sample>& samples, std::size_t bins) {
  for (auto& s : samples) s.meta = static_cast<MetaLabel>(input_bin(s.x.values()[0], bins));
}

SyntheticTask scalar_task(const TaskSpec& spec, Rng& rng) {
  SyntheticTask task;
  task.kind = spec.kind;
  const bool two_mode = spec.kind == TaskKind::two_mode_linear;
  const std::size_t n_train = spec.train_size ? spec.train_size : (two_mode ? 200 : 32);
  const std::size_t n_test = spec.test_size ? spec.test_size : 200;
  const double sigma = spec.noise.value_or(two_mode ? 0.1 : 0.15);
  if (sigma < 0.0) throw ConfigError("task: noise must be non-negative");
  if (!two_mode && spec.meta == MetaSource::label) throw ConfigError("task: noisy-linear has no label meta");

  auto draw = [&](std::size_t n) {
    std::vector<train::Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rng.uniform(-1.0, 1.0);
      if (two_mode) {
        const int mode = rng.bernoulli(0.5) ? 1 : 0;
        const double slope = mode == 0 ? 2.0 : -2.0;
        out.push_back(scalar_sample(x, slope * x + sigma * rng.normal()));
        if (spec.meta == MetaSource::label) out.back().meta = mode;
      } else {
        out.push_back(scalar_sample(x, x + sigma * rng.normal()));
      }
    }
    return out;
  };
  task.train = draw(n_train);
  task.test = draw(n_test);
  if (spec.meta == MetaSource::input_bin) {
    attach_input_bins(task.train, spec.bins);
    attach_input_bins(task.test, spec.bins);
    task.meta_count = spec.bins;
  } else if (spec.meta == MetaSource::label) {
    task.meta_count = 2;
  }
  return task;
}

SyntheticTask blob_task(const TaskSpec& spec, Rng& rng) {
  if (spec.tasks == 0 || spec.dim == 0) throw ConfigError("task: blobs need positive task count and width");
  if (spec.meta == MetaSource::input_bin) throw ConfigError("task: multitask-blobs supports meta none or label");
  SyntheticTask task;
  task.kind = spec.kind;
  task.in_dim = spec.dim;
  task.out_dim = 2;
  task.classes = 2;
  task.loss = train::LossKind::cross_entropy;
  task.meta_count = spec.meta == MetaSource::label ? spec.tasks : 0;
  const double sigma = spec.noise.value_or(1.0);

  std::vector<std::vector<double>> directions(spec.tasks, std::vector<double>(spec.dim));
  for (auto& d : directions) {
    double norm = 0.0;
    for (double& v : d) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : d) v /= norm;
  }
  const std::size_t per_train = spec.train_size ? spec.train_size : 100;
  const std::size_t per_test = spec.test_size ? spec.test_size : 100;
  auto draw = [&](std::size_t per_task) {
    std::vector<train::Sample> out;
    for (std::size_t i = 0; i < per_task * spec.tasks; ++i) {
      const std::size_t t = i % spec.tasks;
      const std::size_t c = rng.bernoulli(0.5) ? 1 : 0;
      const double sign = c == 1 ? 1.0 : -1.0;
      std::vector<double> x(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) x[j] = sign * spec.separation / 2.0 * directions[t][j] + sigma * rng.normal();
      train::Sample s{nn::Tensor::vector(std::move(x)), nn::Tensor::vector({static_cast<double>(c)}), c, std::nullopt};
      if (spec.meta == MetaSource::label) s.meta = static_cast<MetaLabel>(t);
      out.push_back(std::move(s));
    }
    return out;
  };
  task.train = draw(per_train);
  task.test = draw(per_test);
  return task;
}

}  // namespace

SyntheticTask gen_task(const TaskSpec& spec) {
  Rng rng = Rng::derive(spec.seed, 0x7a5c);
  if (spec.kind == TaskKind::multitask_blobs) return blob_task(spec, rng);
  return scalar_task(spec, rng);
}

double selection_entropy(std::span<const std::vector<std::size_t>> slots) {
  if (slots.empty()) throw std::invalid_argument("selection_entropy: no slots");
  double total = 0.0;
  for (const auto& counts : slots) {
    std::size_t n = 0;
    for (std::size_t c : counts) n += c;
    if (n == 0) throw std::invalid_argument("selection_entropy: empty counts");
    // Uniform over the used actions: ln m, correctly rounded.
    std::size_t used = 0, first = 0;
    bool uniform = true;
    for (std::size_t c : counts) {
      if (c == 0) continue;
      if (used++ == 0) first = c;
      uniform = uniform && c == first;
    }
    if (uniform) {
      total += std::log(static_cast<double>(used));
      continue;
    }
    double h = 0.0;
    for (std::size_t c : counts) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / static_cast<double>(n);
      h -= p * std::log(p);
    }
    total += h;
  }
  return total / static_cast<double>(slots.size());
}

double selection_entropy(const train::UsageCounts& usage) {
  std::vector<std::vector<std::size_t>> slots;
  for (const auto& [name, counts] : usage)
    if (!name.empty() && name[0] == 'd' && name != "dispatch") slots.push_back(counts);
  return selection_entropy(slots);
}

bool detect_collapse(std::span<const double> entropy_history, double threshold) {
  if (entropy_history.empty()) throw std::invalid_argument("detect_collapse: empty history");
  const double last = entropy_history.back();
  return last == 0.0 || last < threshold;
}

}  // namespace routing::bench
