#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "routing/tensor.hpp"

namespace routing {

// Discrete meta-information attached to a sample (e.g. a task label).
using MetaLabel = int;

// MDP state: current activation and/or meta label, plus the routing depth.
struct RoutingState {
  std::optional<nn::Tensor> activation;
  std::optional<MetaLabel> meta;
  std::size_t depth = 0;
};

// One of: apply module `index`, terminate and emit the activation, or skip
// this depth without transforming the activation.
struct RoutingAction {
  enum class Kind { module, terminate, skip };

  Kind kind = Kind::module;
  std::size_t index = 0;  // meaningful for Kind::module only

  static RoutingAction module(std::size_t i) { return {Kind::module, i}; }
  static RoutingAction terminate() { return {Kind::terminate, 0}; }
  static RoutingAction skip() { return {Kind::skip, 0}; }

  bool is_module() const { return kind == Kind::module; }
  friend bool operator==(const RoutingAction&, const RoutingAction&) = default;
};

std::string to_string(const RoutingAction& action);

}  // namespace routing
