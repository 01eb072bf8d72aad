#pragma once
// Gradient estimators for J(theta) = r . softmax(theta) against the analytic
// gradient, and the dimension sweep that aggregates their error statistics.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "routing/policy.hpp"
#include "routing/rng.hpp"

namespace routing::lab {

struct BanditInstance {
  std::vector<double> rewards;  // in [0, 1]
  std::vector<double> theta;

  std::size_t k() const { return theta.size(); }
  void validate() const;

  // r ~ U[0, 1], theta ~ N(0, 1).
  static BanditInstance random(std::size_t k, Rng& rng);
};

std::vector<double> softmax(std::span<const double> theta);
double objective(const BanditInstance& inst);

// g_i = pi_i (r_i - J).
std::vector<double> analytic_gradient(const BanditInstance& inst);

enum class Estimator { reinforce, reinforce_baseline, gumbel, relax };

Estimator parse_estimator(std::string_view name);
std::string_view to_string(Estimator e);

struct EstimatorSettings {
  double tau = 0.5;
  double baseline_decay = 0.1;  // b <- (1 - a) b + a r
  std::size_t relax_warmup = 1000;
  std::size_t relax_hidden = 16;
  double relax_lr = 0.01;  // adam rate for the control variate
};

// (r_a - b)(e_a - pi) for a fixed action and baseline.
std::vector<double> reinforce_term(const BanditInstance& inst, std::size_t action, double baseline);

// Gradient of r . softmax((theta + g) / tau) with respect to theta.
std::vector<double> gumbel_term(const BanditInstance& inst, std::span<const double> noise, double tau);

// Sum over a of pi_a * reinforce_term(a, b); equals the analytic gradient for any b.
std::vector<double> reinforce_expectation(const BanditInstance& inst, double baseline);

// Per-instance estimator state: the running baseline and the RELAX variate.
class EstimatorRun {
 public:
  EstimatorRun(const BanditInstance& inst, Estimator estimator, EstimatorSettings settings, Rng& rng);

  // Fits the control variate on `samples` draws whose estimates are discarded.
  void warmup(std::size_t samples);
  std::vector<double> next();
  double baseline() const { return baseline_; }

 private:
  std::vector<double> relax_sample(bool record);

  const BanditInstance& inst_;
  Estimator estimator_;
  EstimatorSettings settings_;
  Rng& rng_;
  std::vector<double> probs_;
  double baseline_ = 0.0;
  std::optional<policy::ControlVariate> control_;
};

// n gradient estimates drawn in order from a fresh run.
std::vector<std::vector<double>> estimate(const BanditInstance& inst, Estimator estimator, std::size_t n, Rng& rng,
                                          const EstimatorSettings& settings = {});

struct SampleStats {
  double mse = 0.0;       // mean over samples and coordinates of (g_hat - g)^2
  double variance = 0.0;  // per-coordinate unbiased variance, averaged
  double max_z = 0.0;     // max_i |mean_i - g_i| / SE_i
  std::size_t n = 0;
};

SampleStats summarize(std::span<const std::vector<double>> estimates, std::span<const double> truth);

struct ProtocolConfig {
  std::vector<std::size_t> ks{2, 4, 8, 16, 32};
  std::size_t rewards = 22;
  std::size_t policies = 22;
  std::size_t samples_per_dim = 22;  // 22 * k draws per pair
  std::vector<Estimator> estimators{Estimator::reinforce, Estimator::reinforce_baseline, Estimator::gumbel,
                                    Estimator::relax};
  bool relax_without_warmup = true;  // also report an unwarmed RELAX row
  double bias_z = 3.0;
  EstimatorSettings settings;
  std::uint64_t seed = 0;
};

struct EstimatorRow {
  Estimator estimator;
  std::size_t k = 0;
  double mse = 0.0;
  double variance = 0.0;
  std::size_t n_samples = 0;
  bool warmup = false;
  double biased_fraction = 0.0;  // instances whose mean sits beyond bias_z standard errors
};

struct EstimatorReport {
  std::vector<EstimatorRow> rows;

  const EstimatorRow& row(Estimator e, std::size_t k, bool warmup = false) const;
  void write_csv(std::ostream& out) const;
};

EstimatorReport run_protocol(const ProtocolConfig& config);

}  // namespace routing::lab
