#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "routing/autodiff.hpp"
#include "routing/rng.hpp"
#include "routing/types.hpp"

namespace routing::modules {

enum class ModuleKind { scalar_linear, linear, mlp };
enum class InitScheme { uniform, identity };

ModuleKind parse_module_kind(std::string_view name);
std::string_view to_string(ModuleKind kind);

// A routable trainable function. scalar_linear computes a * h elementwise
// with one parameter; linear computes W h + b; mlp computes
// W2 tanh(W1 h + b1) + b2.
class FunctionModule {
 public:
  FunctionModule(std::size_t id, ModuleKind kind, std::size_t in_dim, std::size_t out_dim, std::size_t hidden,
                 InitScheme init, Rng& rng);

  // scalar_linear module with a fixed slope.
  static FunctionModule scalar(std::size_t id, double slope, std::size_t width = 1);

  nn::Var apply(nn::Graph& graph, const nn::Var& h) const;

  std::size_t id() const { return id_; }
  ModuleKind kind() const { return kind_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  std::size_t parameter_count() const;

  std::vector<nn::Parameter*> parameters() const;
  nn::Parameter& parameter(std::size_t i) const { return *params_[i]; }

 private:
  FunctionModule(std::size_t id, ModuleKind kind, std::size_t in_dim, std::size_t out_dim);

  std::size_t id_;
  ModuleKind kind_;
  std::size_t in_dim_;
  std::size_t out_dim_;
  // Heap-held so module moves never invalidate Parameter addresses bound on a tape.
  std::vector<std::unique_ptr<nn::Parameter>> params_;
};

// Dimension-homogeneous set of modules plus the optional pseudo-actions.
// Action indices: modules occupy [0, n), then skip (if allowed), then
// terminate (if allowed). Keeping terminate last lets callers forbid it by
// truncating the action count.
class ModuleBank {
 public:
  ModuleBank(std::vector<FunctionModule> modules, bool allow_termination, bool allow_skip);

  std::size_t module_count() const { return modules_.size(); }
  std::size_t action_space_size() const;
  bool allow_termination() const { return allow_termination_; }
  bool allow_skip() const { return allow_skip_; }
  std::size_t in_dim() const { return modules_.front().in_dim(); }
  std::size_t out_dim() const { return modules_.front().out_dim(); }

  RoutingAction action_at(std::size_t index) const;
  std::size_t index_of(const RoutingAction& action) const;

  const FunctionModule& module(std::size_t i) const { return modules_.at(i); }
  std::vector<nn::Parameter*> parameters() const;

 private:
  std::vector<FunctionModule> modules_;
  bool allow_termination_;
  bool allow_skip_;
};

struct BankSpec {
  ModuleKind kind = ModuleKind::scalar_linear;
  std::size_t count = 3;
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::size_t hidden = 8;
  InitScheme init = InitScheme::uniform;
  bool allow_termination = false;
  bool allow_skip = false;
  // Explicit scalar slopes; when non-empty must have `count` entries.
  std::vector<double> slopes;
};

// Deterministic given (spec, seed). Throws ConfigError on an empty bank or
// incompatible dimensions.
ModuleBank build_bank(const BankSpec& spec, std::uint64_t seed);

// Applies a module action. Throws for out-of-range indices, non-module
// actions, or an activation whose width does not match the module.
nn::Var apply_module(const ModuleBank& bank, const RoutingAction& action, nn::Graph& graph, const nn::Var& h);

}  // namespace routing::modules
