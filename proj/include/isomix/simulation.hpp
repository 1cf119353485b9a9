#pragma once

#include "isomix/core.hpp"
#include "isomix/estimators.hpp"
#include "isomix/inference.hpp"
#include "isomix/rng.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace isomix {

struct Window {
  double lo = 0.0;
  double hi = 0.0;
};

// A data-generating design plus the evaluation choices used to score it.
struct ExperimentSpec {
  std::string name;
  int id = 0;                  // 1, 2, 3, or 0 for custom designs
  std::array<Cdf, 2> cdf;      // component CDFs on [0, support_upper]
  // Draws land in [0, support_upper]; mass above cdf(support_upper) is an
  // event that never happens (S = +inf).
  double support_upper = 10.0;
  std::vector<std::vector<double>> mix_support;
  std::vector<double> mix_probs;
  std::size_t n = 500;
  double censoring = 0.0;      // target fraction of censored subjects
  std::size_t replicates = 500;
  std::uint64_t seed = 1;

  double eval_upper = 10.0;    // metrics use 50 even points on (0, eval_upper]
  double pointwise_time = 1.3;
  std::array<Window, 2> iab_window;
  std::array<Window, 2> coverage_window;

  // Throws std::invalid_argument.
  void validate() const;
};

// The three published designs: 1, 2 or 3.
ExperimentSpec experiment(int id);
// Same design with component 2 replaced by component 1.
ExperimentSpec null_design(const ExperimentSpec& spec);

// Mixture CDF of S, averaging over the mixture-vector distribution.
double marginal_cdf(const ExperimentSpec& spec, double t);

struct CensoringPlan {
  double target = 0.0;
  double upper = std::numeric_limits<double>::infinity();  // C ~ Uniform(0, upper)
  double expected_rate = 0.0;
};

// Expected censoring fraction when C ~ Uniform(0, upper).
double expected_censoring(const ExperimentSpec& spec, double upper);
// Bisection on the upper bound; throws EstimationError(Calibration) when the
// target cannot be reached.
CensoringPlan calibrate_censoring(const ExperimentSpec& spec);

struct SimulatedData {
  MixtureSample sample;
  std::vector<int> labels;          // 1 or 2: latent component
  std::vector<double> event_times;  // latent S (may be +inf)
};

// Smallest s in [0, upper] with cdf(s) >= p, to 1e-10.
double invert_cdf(const Cdf& cdf, double p, double upper);

SimulatedData draw_sample(const ExperimentSpec& spec, const CensoringPlan& plan, Rng& rng);
SimulatedData sample_experiment(const ExperimentSpec& spec, std::uint64_t seed);
// Data set for replicate r (0-based) of run_replications and rejection_rates.
SimulatedData replicate_sample(const ExperimentSpec& spec, const CensoringPlan& plan, std::size_t r);

struct SimEstimator {
  std::string name;
  FitFunction fit;
};

SimEstimator make_estimator(Method method, const EmConfig& config = {});
// Returns the true CDFs; scores the metric code itself.
SimEstimator truth_estimator(const ExperimentSpec& spec);

struct MetricsConfig {
  std::size_t grid_points = 50;
  std::size_t bootstrap = 100;  // 0 disables est sd and coverage
  double level = 0.95;
  std::size_t jobs = 1;
};

struct ComponentMetrics {
  double truth = 0.0;      // F_k0 at the pointwise time
  double bias = 0.0;
  double emp_sd = 0.0;
  double est_sd = 0.0;     // mean bootstrap sd (NaN without bootstrap)
  double coverage = 0.0;   // NaN without bootstrap
  double iab = 0.0;
  double avg_variance = 0.0;
  double avg_coverage = 0.0;  // NaN without bootstrap
};

struct EstimatorMetrics {
  std::string estimator;
  std::array<ComponentMetrics, 2> component;
  std::size_t used = 0;
  std::size_t failures = 0;
  std::vector<double> grid;                      // evaluation grid
  std::array<std::vector<double>, 2> mean_curve;  // average estimate per grid point
};

struct MetricsReport {
  std::string experiment;
  std::size_t n = 0;
  double censoring = 0.0;
  double censoring_upper = 0.0;
  double realized_censoring = 0.0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::size_t bootstrap = 0;
  double pointwise_time = 0.0;
  std::vector<EstimatorMetrics> rows;
};

// Evaluation grid: even points, IAB points and the pointwise time, merged.
TimeGrid metrics_grid(const ExperimentSpec& spec, std::size_t points = 50);

// Riemann sum of |estimate - truth| at `points` even points on (lo, hi].
double integrated_absolute_bias(const std::function<double(double)>& estimate,
                                const std::function<double(double)>& truth, Window window,
                                std::size_t points = 50);

MetricsReport run_replications(const ExperimentSpec& spec, const std::vector<SimEstimator>& estimators,
                               const MetricsConfig& config = {});

inline constexpr std::array<double, 4> kNominalLevels{0.01, 0.05, 0.10, 0.20};

struct PowerRow {
  std::string estimator;
  std::string hypothesis;  // "H0" or "H1"
  std::array<double, 4> rejection{};
  std::size_t used = 0;
  std::size_t failures = 0;
};

struct PowerConfig {
  std::size_t permutations = 1000;
  std::size_t jobs = 1;
};

// Rejection rate = share of replicates with permutation p-value <= level.
// Each design runs spec.replicates replicates.
std::vector<PowerRow> power_study(const ExperimentSpec& h0, const ExperimentSpec& h1,
                                  const std::vector<SimEstimator>& estimators, const PowerConfig& config);

// One design only.
PowerRow rejection_rates(const ExperimentSpec& spec, const SimEstimator& estimator,
                         const PowerConfig& config, const std::string& hypothesis);

}  // namespace isomix
