#include "routing/module_bank.hpp"

#include <cmath>

#include "routing/errors.hpp"

namespace routing {

std::string to_string(const RoutingAction& action) {
  switch (action.kind) {
    case RoutingAction::Kind::module:
      return "f" + std::to_string(action.index);
    case RoutingAction::Kind::terminate:
      return "stop";
    case RoutingAction::Kind::skip:
      return "skip";
  }
  return "?";
}

}  // namespace routing

namespace routing::modules {
namespace {

nn::Tensor uniform_tensor(nn::Shape shape, double bound, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

std::string param_name(std::size_t id, std::string_view field) {
  return "module" + std::to_string(id) + "." + std::string(field);
}

}  // namespace

ModuleKind parse_module_kind(std::string_view name) {
  if (name == "scalar-linear") return ModuleKind::scalar_linear;
  if (name == "linear") return ModuleKind::linear;
  if (name == "mlp") return ModuleKind::mlp;
  throw ConfigError("unknown module kind '" + std::string(name) + "'");
}

std::string_view to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::scalar_linear:
      return "scalar-linear";
    case ModuleKind::linear:
      return "linear";
    case ModuleKind::mlp:
      return "mlp";
  }
  return "unknown";
}

FunctionModule::FunctionModule(std::size_t id, ModuleKind kind, std::size_t in_dim, std::size_t out_dim)
    : id_(id), kind_(kind), in_dim_(in_dim), out_dim_(out_dim) {}

FunctionModule::FunctionModule(std::size_t id, ModuleKind kind, std::size_t in_dim, std::size_t out_dim,
                               std::size_t hidden, InitScheme init, Rng& rng)
    : FunctionModule(id, kind, in_dim, out_dim) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("module: dimensions must be positive");
  if (init == InitScheme::identity && (kind != ModuleKind::linear || in_dim != out_dim))
    throw ConfigError("module: identity init needs a square linear module");
  auto add = [this](std::string_view field, nn::Tensor value) {
    params_.push_back(std::make_unique<nn::Parameter>(param_name(id_, field), std::move(value)));
  };
  switch (kind) {
    case ModuleKind::scalar_linear:
      if (in_dim != out_dim) throw ConfigError("module: scalar-linear needs in_dim == out_dim");
      add("slope", nn::Tensor::scalar(rng.uniform(-1.0, 1.0)));
      break;
    case ModuleKind::linear: {
      if (init == InitScheme::identity) {
        nn::Tensor w({out_dim, in_dim});
        for (std::size_t i = 0; i < out_dim; ++i) w[i * in_dim + i] = 1.0;
        add("W", std::move(w));
        add("b", nn::Tensor({out_dim}));
      } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
        add("W", uniform_tensor({out_dim, in_dim}, bound, rng));
        add("b", uniform_tensor({out_dim}, bound, rng));
      }
      break;
    }
    case ModuleKind::mlp: {
      if (hidden == 0) throw ConfigError("module: mlp hidden width must be positive");
      const double b1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
      const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
      add("W1", uniform_tensor({hidden, in_dim}, b1, rng));
      add("b1", uniform_tensor({hidden}, b1, rng));
      add("W2", uniform_tensor({out_dim, hidden}, b2, rng));
      add("b2", uniform_tensor({out_dim}, b2, rng));
      break;
    }
  }
}

FunctionModule FunctionModule::scalar(std::size_t id, double slope, std::size_t width) {
  FunctionModule m(id, ModuleKind::scalar_linear, width, width);
  m.params_.push_back(std::make_unique<nn::Parameter>(param_name(id, "slope"), nn::Tensor::scalar(slope)));
  return m;
}

nn::Var FunctionModule::apply(nn::Graph& graph, const nn::Var& h) const {
  if (h.value().rank() != 1 || h.value().size() != in_dim_)
    throw ShapeError("module " + std::to_string(id_) + ": expects width " + std::to_string(in_dim_) + ", got shape " +
                     nn::shape_string(h.value().shape()));
  switch (kind_) {
    case ModuleKind::scalar_linear:
      return nn::scale_by(h, graph.param(*params_[0]));
    case ModuleKind::linear:
      return nn::add(nn::matmul(graph.param(*params_[0]), h), graph.param(*params_[1]));
    case ModuleKind::mlp: {
      nn::Var hidden = nn::tanh(nn::add(nn::matmul(graph.param(*params_[0]), h), graph.param(*params_[1])));
      return nn::add(nn::matmul(graph.param(*params_[2]), hidden), graph.param(*params_[3]));
    }
  }
  throw std::logic_error("module: unknown kind");
}

std::size_t FunctionModule::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p->size();
  return total;
}

std::vector<nn::Parameter*> FunctionModule::parameters() const {
  std::vector<nn::Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

ModuleBank::ModuleBank(std::vector<FunctionModule> modules, bool allow_termination, bool allow_skip)
    : modules_(std::move(modules)), allow_termination_(allow_termination), allow_skip_(allow_skip) {
  if (modules_.empty()) throw ConfigError("module bank: needs at least one module");
  for (const auto& m : modules_)
    if (m.in_dim() != modules_.front().in_dim() || m.out_dim() != modules_.front().out_dim())
      throw ConfigError("module bank: all modules must share input and output widths");
  if ((allow_skip_ || allow_termination_) && in_dim() != out_dim())
    throw ConfigError("module bank: skip/terminate need modules with in_dim == out_dim");
}

std::size_t ModuleBank::action_space_size() const {
  return modules_.size() + (allow_skip_ ? 1 : 0) + (allow_termination_ ? 1 : 0);
}

RoutingAction ModuleBank::action_at(std::size_t index) const {
  if (index < modules_.size()) return RoutingAction::module(index);
  std::size_t next = modules_.size();
  if (allow_skip_) {
    if (index == next) return RoutingAction::skip();
    ++next;
  }
  if (allow_termination_ && index == next) return RoutingAction::terminate();
  throw std::out_of_range("module bank: action index " + std::to_string(index) + " outside action space of size " +
                          std::to_string(action_space_size()));
}

std::size_t ModuleBank::index_of(const RoutingAction& action) const {
  switch (action.kind) {
    case RoutingAction::Kind::module:
      if (action.index >= modules_.size()) break;
      return action.index;
    case RoutingAction::Kind::skip:
      if (!allow_skip_) break;
      return modules_.size();
    case RoutingAction::Kind::terminate:
      if (!allow_termination_) break;
      return modules_.size() + (allow_skip_ ? 1 : 0);
  }
  throw std::out_of_range("module bank: action " + to_string(action) + " is not in this bank's action space");
}

std::vector<nn::Parameter*> ModuleBank::parameters() const {
  std::vector<nn::Parameter*> out;
  for (const auto& m : modules_) {
    auto ps = m.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

ModuleBank build_bank(const BankSpec& spec, std::uint64_t seed) {
  if (spec.count == 0) throw ConfigError("build_bank: module count must be positive");
  if (spec.in_dim == 0 || spec.out_dim == 0) throw ConfigError("build_bank: dimensions must be positive");
  if (!spec.slopes.empty()) {
    if (spec.kind != ModuleKind::scalar_linear) throw ConfigError("build_bank: explicit slopes need scalar-linear modules");
    if (spec.slopes.size() != spec.count) throw ConfigError("build_bank: slope count does not match module count");
  }
  Rng rng(seed);
  std::vector<FunctionModule> modules;
  modules.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    if (!spec.slopes.empty())
      modules.push_back(FunctionModule::scalar(i, spec.slopes[i], spec.in_dim));
    else
      modules.emplace_back(i, spec.kind, spec.in_dim, spec.out_dim, spec.hidden, spec.init, rng);
  }
  return ModuleBank(std::move(modules), spec.allow_termination, spec.allow_skip);
}

nn::Var apply_module(const ModuleBank& bank, const RoutingAction& action, nn::Graph& graph, const nn::Var& h) {
  if (!action.is_module()) throw std::invalid_argument("apply_module: " + to_string(action) + " is resolved by the engine");
  if (action.index >= bank.module_count())
    throw std::out_of_range("apply_module: module index " + std::to_string(action.index) + " out of range (bank has " +
                            std::to_string(bank.module_count()) + ")");
  return bank.module(action.index).apply(graph, h);
}

}  // namespace routing::modules
