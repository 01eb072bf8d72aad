#pragma once

#include <span>
#include <string>
#include <string_view>

#include "routing/autodiff.hpp"

namespace routing::nn {

enum class OptimizerKind { plain_sgd, momentum_sgd, adam };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::plain_sgd;
  double lr = 0.05;
  double momentum = 0.9;  // momentum_sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;   // adam
  double epsilon = 1e-8;  // adam

  // Throws ConfigError unless lr > 0 and every coefficient lies in [0, 1).
  void validate() const;
};

// Applies one update with effective rate lr * lr_multiplier, then zeroes the
// gradients. A multiplier of 0 leaves values and optimizer state untouched.
// Gradients are checked for finiteness before anything is modified.
void optimizer_step(std::span<Parameter* const> params, const OptimizerConfig& config, double lr_multiplier = 1.0);

}  // namespace routing::nn
