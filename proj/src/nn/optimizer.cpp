#include "routing/optimizer.hpp"

#include <cmath>

#include "routing/errors.hpp"
#include "routing/kernels.hpp"

namespace routing::nn {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "plain-sgd" || name == "sgd") return OptimizerKind::plain_sgd;
  if (name == "momentum-sgd" || name == "momentum") return OptimizerKind::momentum_sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer kind '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::plain_sgd:
      return "plain-sgd";
    case OptimizerKind::momentum_sgd:
      return "momentum-sgd";
    case OptimizerKind::adam:
      return "adam";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer: learning rate must be positive");
  auto unit = [](double v) { return v >= 0.0 && v < 1.0; };
  if (!unit(momentum)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
  if (!unit(beta1) || !unit(beta2)) throw ConfigError("optimizer: adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer: adam epsilon must be positive");
}

void optimizer_step(std::span<Parameter* const> params, const OptimizerConfig& config, double lr_multiplier) {
  if (!(lr_multiplier >= 0.0 && lr_multiplier <= 1.0))
    throw ConfigError("optimizer: lr multiplier must lie in [0, 1], got " + std::to_string(lr_multiplier));
  for (const Parameter* p : params)
    if (!p->grad.all_finite()) throw NumericError("optimizer: non-finite gradient in parameter '" + p->name + "'");

  const double rate = config.lr * lr_multiplier;
  const auto& K = simd::kernels();
  for (Parameter* p : params) {
    if (rate == 0.0) {
      p->zero_grad();
      continue;
    }
    const std::size_t n = p->size();
    double* value = p->value.data().data();
    const double* grad = p->grad.data().data();
    switch (config.kind) {
      case OptimizerKind::plain_sgd:
        K.axpy(-rate, grad, value, n);
        break;
      case OptimizerKind::momentum_sgd: {
        if (p->state.empty()) p->state.push_back(Tensor::zeros_like(p->value));
        double* velocity = p->state[0].data().data();
        K.scale(config.momentum, velocity, velocity, n);
        K.add(velocity, grad, velocity, n);
        K.axpy(-rate, velocity, value, n);
        break;
      }
      case OptimizerKind::adam: {
        if (p->state.empty()) {
          p->state.push_back(Tensor::zeros_like(p->value));
          p->state.push_back(Tensor::zeros_like(p->value));
        }
        double* m = p->state[0].data().data();
        double* v = p->state[1].data().data();
        const double t = static_cast<double>(p->steps + 1);
        const double c1 = 1.0 - std::pow(config.beta1, t);
        const double c2 = 1.0 - std::pow(config.beta2, t);
        for (std::size_t i = 0; i < n; ++i) {
          m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
          v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
          value[i] -= rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.epsilon);
        }
        break;
      }
    }
    ++p->steps;
    if (!p->value.all_finite()) throw NumericError("optimizer: parameter '" + p->name + "' became non-finite");
    p->zero_grad();
  }
}

}  // namespace routing::nn
