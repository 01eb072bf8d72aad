#include "routing/estimator_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "routing/autodiff.hpp"
#include "routing/errors.hpp"
#include "routing/kernels.hpp"
#include "routing/optimizer.hpp"

namespace routing::lab {

void BanditInstance::validate() const {
  if (theta.empty()) throw ShapeError("bandit: empty instance");
  if (rewards.size() != theta.size())
    throw ShapeError("bandit: " + std::to_string(rewards.size()) + " rewards for " + std::to_string(theta.size()) +
                     " logits");
}

BanditInstance BanditInstance::random(std::size_t k, Rng& rng) {
  BanditInstance inst;
  inst.rewards.resize(k);
  inst.theta.resize(k);
  for (double& r : inst.rewards) r = rng.uniform(0.0, 1.0);
  for (double& t : inst.theta) t = rng.normal();
  return inst;
}

std::vector<double> softmax(std::span<const double> theta) {
  std::vector<double> p(theta.begin(), theta.end());
  const double peak = simd::max(p);
  for (double& v : p) v = std::exp(v - peak);
  const double total = simd::sum(p);
  for (double& v : p) v /= total;
  return p;
}

double objective(const BanditInstance& inst) {
  inst.validate();
  return simd::dot(inst.rewards, softmax(inst.theta));
}

std::vector<double> analytic_gradient(const BanditInstance& inst) {
  inst.validate();
  std::vector<double> pi = softmax(inst.theta);
  const double j = simd::dot(inst.rewards, pi);
  std::vector<double> g(pi.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = pi[i] * (inst.rewards[i] - j);
  return g;
}

Estimator parse_estimator(std::string_view name) {
  if (name == "reinforce") return Estimator::reinforce;
  if (name == "reinforce-baseline") return Estimator::reinforce_baseline;
  if (name == "gumbel") return Estimator::gumbel;
  if (name == "relax") return Estimator::relax;
  throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::reinforce:
      return "reinforce";
    case Estimator::reinforce_baseline:
      return "reinforce-baseline";
    case Estimator::gumbel:
      return "gumbel";
    case Estimator::relax:
      return "relax";
  }
  return "unknown";
}

namespace {

std::vector<double> reinforce_with(std::span<const double> pi, double reward, std::size_t action, double baseline) {
  std::vector<double> g(pi.size());
  const double coef = reward - baseline;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -coef * pi[i];
  g[action] += coef;
  return g;
}

}  // namespace

std::vector<double> reinforce_term(const BanditInstance& inst, std::size_t action, double baseline) {
  inst.validate();
  if (action >= inst.k()) throw std::out_of_range("reinforce_term: action out of range");
  return reinforce_with(softmax(inst.theta), inst.rewards[action], action, baseline);
}

std::vector<double> gumbel_term(const BanditInstance& inst, std::span<const double> noise, double tau) {
  inst.validate();
  if (noise.size() != inst.k()) throw ShapeError("gumbel_term: noise width mismatch");
  if (!(tau > 0.0)) throw ConfigError("gumbel_term: temperature must be positive");
  std::vector<double> z(inst.k());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (inst.theta[i] + noise[i]) / tau;
  std::vector<double> s = softmax(z);
  const double rs = simd::dot(inst.rewards, s);
  std::vector<double> g(s.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = s[i] * (inst.rewards[i] - rs) / tau;
  return g;
}

std::vector<double> reinforce_expectation(const BanditInstance& inst, double baseline) {
  inst.validate();
  std::vector<double> pi = softmax(inst.theta);
  std::vector<double> total(inst.k(), 0.0);
  for (std::size_t a = 0; a < inst.k(); ++a)
    simd::axpy(pi[a], reinforce_with(pi, inst.rewards[a], a, baseline), total);
  return total;
}

EstimatorRun::EstimatorRun(const BanditInstance& inst, Estimator estimator, EstimatorSettings settings, Rng& rng)
    : inst_(inst), estimator_(estimator), settings_(settings), rng_(rng) {
  inst_.validate();
  probs_ = softmax(inst_.theta);
  if (estimator_ == Estimator::relax) control_.emplace(inst_.k(), settings_.relax_hidden, rng_);
}

void EstimatorRun::warmup(std::size_t samples) {
  if (estimator_ != Estimator::relax) return;
  for (std::size_t i = 0; i < samples; ++i) relax_sample(false);
}

std::vector<double> EstimatorRun::relax_sample(bool record) {
  nn::Graph graph;
  nn::Parameter theta("theta", nn::Tensor::vector(inst_.theta));
  nn::Var log_probs = nn::log_softmax(graph.param(theta));
  policy::RelaxedDraw draw = policy::draw_relaxed(graph, log_probs, settings_.tau, rng_, true);
  const double f = inst_.rewards[draw.action];
  nn::Var loss = policy::relax_surrogate(graph, &*control_, nn::pick(log_probs, draw.action), draw.relaxed,
                                         draw.relaxed_conditional, f);
  graph.backward(loss);
  std::vector<double> g(theta.grad.values());
  for (double& v : g) v = -v;

  nn::OptimizerConfig fit;
  fit.kind = nn::OptimizerKind::adam;
  fit.lr = settings_.relax_lr;
  auto params = control_->parameters();
  nn::optimizer_step(params, fit);
  if (!record) g.clear();
  return g;
}

std::vector<double> EstimatorRun::next() {
  switch (estimator_) {
    case Estimator::reinforce:
    case Estimator::reinforce_baseline: {
      const std::size_t a = rng_.categorical(probs_);
      const double r = inst_.rewards[a];
      const double b = estimator_ == Estimator::reinforce ? 0.0 : baseline_;
      auto g = reinforce_with(probs_, r, a, b);
      if (estimator_ == Estimator::reinforce_baseline)
        baseline_ = (1.0 - settings_.baseline_decay) * baseline_ + settings_.baseline_decay * r;
      return g;
    }
    case Estimator::gumbel: {
      std::vector<double> noise(inst_.k());
      for (double& v : noise) v = rng_.gumbel();
      return gumbel_term(inst_, noise, settings_.tau);
    }
    case Estimator::relax:
      return relax_sample(true);
  }
  throw std::logic_error("estimator: unknown kind");
}

std::vector<std::vector<double>> estimate(const BanditInstance& inst, Estimator estimator, std::size_t n, Rng& rng,
                                          const EstimatorSettings& settings) {
  if (n == 0) throw std::invalid_argument("estimate: n must be at least 1");
  EstimatorRun run(inst, estimator, settings, rng);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(run.next());
  return out;
}

SampleStats summarize(std::span<const std::vector<double>> estimates, std::span<const double> truth) {
  if (estimates.empty()) throw std::invalid_argument("summarize: no estimates");
  const std::size_t k = truth.size();
  const std::size_t n = estimates.size();
  std::vector<double> mean(k, 0.0);
  SampleStats s;
  s.n = n;
  for (const auto& g : estimates) {
    if (g.size() != k) throw ShapeError("summarize: estimate width mismatch");
    simd::axpy(1.0 / static_cast<double>(n), g, mean);
    for (std::size_t i = 0; i < k; ++i) s.mse += (g[i] - truth[i]) * (g[i] - truth[i]);
  }
  s.mse /= static_cast<double>(n * k);
  for (std::size_t i = 0; i < k; ++i) {
    double ss = 0.0;
    for (const auto& g : estimates) ss += (g[i] - mean[i]) * (g[i] - mean[i]);
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    s.variance += var;
    const double err = std::abs(mean[i] - truth[i]);
    const double se = std::sqrt(var / static_cast<double>(n));
    if (se > 0.0)
      s.max_z = std::max(s.max_z, err / se);
    else if (err > 1e-12)
      s.max_z = std::numeric_limits<double>::infinity();
  }
  s.variance /= static_cast<double>(k);
  return s;
}

const EstimatorRow& EstimatorReport::row(Estimator e, std::size_t k, bool warmup) const {
  for (const auto& r : rows)
    if (r.estimator == e && r.k == k && r.warmup == warmup) return r;
  throw std::out_of_range("estimator report: no row for " + std::string(to_string(e)) + " k=" + std::to_string(k));
}

void EstimatorReport::write_csv(std::ostream& out) const {
  out << "estimator,k,mse,variance,n_samples,warmup\n";
  out.precision(17);
  for (const auto& r : rows)
    out << to_string(r.estimator) << ',' << r.k << ',' << r.mse << ',' << r.variance << ',' << r.n_samples << ','
        << (r.warmup ? 1 : 0) << '\n';
}

namespace {

// Stream ids: one namespace per purpose so adding an estimator never shifts
// another's draws.
std::uint64_t stream_id(std::uint64_t purpose, std::size_t k, std::size_t a, std::size_t b = 0) {
  return mix_seed(purpose) ^ mix_seed(k * 0x10001ULL + a * 0x9e3779b9ULL + b + 1);
}

}  // namespace

EstimatorReport run_protocol(const ProtocolConfig& config) {
  if (config.ks.empty()) throw ConfigError("estimator lab: no dimensions given");
  if (config.rewards == 0 || config.policies == 0 || config.samples_per_dim == 0)
    throw ConfigError("estimator lab: counts must be positive");
  EstimatorReport report;
  for (std::size_t k : config.ks) {
    if (k == 0 || k > 64) throw ConfigError("estimator lab: k must lie in [1, 64]");
    std::vector<std::vector<double>> rewards(config.rewards), thetas(config.policies);
    for (std::size_t i = 0; i < config.rewards; ++i) {
      Rng rng = Rng::derive(config.seed, stream_id(1, k, i));
      rewards[i].resize(k);
      for (double& r : rewards[i]) r = rng.uniform(0.0, 1.0);
    }
    for (std::size_t j = 0; j < config.policies; ++j) {
      Rng rng = Rng::derive(config.seed, stream_id(2, k, j));
      thetas[j].resize(k);
      for (double& t : thetas[j]) t = rng.normal();
    }

    struct Variant {
      Estimator e;
      bool warm;
    };
    std::vector<Variant> variants;
    for (Estimator e : config.estimators) {
      if (e == Estimator::relax) {
        variants.push_back({e, true});
        if (config.relax_without_warmup) variants.push_back({e, false});
      } else {
        variants.push_back({e, false});
      }
    }

    const std::size_t n = config.samples_per_dim * k;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      EstimatorRow row{variants[v].e, k};
      row.warmup = variants[v].warm;
      std::size_t biased = 0;
      const std::size_t pairs = config.rewards * config.policies;
      for (std::size_t p = 0; p < pairs; ++p) {
        BanditInstance inst{rewards[p / config.policies], thetas[p % config.policies]};
        const std::uint64_t purpose = 3 + static_cast<std::uint64_t>(row.estimator) * 2 + (row.warmup ? 1 : 0);
        Rng rng = Rng::derive(config.seed, stream_id(purpose, k, p));
        EstimatorRun run(inst, row.estimator, config.settings, rng);
        if (row.warmup) run.warmup(config.settings.relax_warmup);
        std::vector<std::vector<double>> draws;
        draws.reserve(n);
        for (std::size_t s = 0; s < n; ++s) draws.push_back(run.next());
        SampleStats st = summarize(draws, analytic_gradient(inst));
        row.mse += st.mse;
        row.variance += st.variance;
        row.n_samples += n;
        if (st.max_z > config.bias_z) ++biased;
      }
      row.mse /= static_cast<double>(pairs);
      row.variance /= static_cast<double>(pairs);
      row.biased_fraction = static_cast<double>(biased) / static_cast<double>(pairs);
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace routing::lab
