#pragma once

#include "isomix/core.hpp"
#include "isomix/estimators.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace isomix {

using FitFunction = std::function<EstimateReport(const MixtureSample&, const TimeGrid&)>;

FitFunction fit_function(Method method, const EmConfig& config = {});

// sup |F_1(t) - F_2(t)| over the grid, or over `restrict_to` when given
// (curves evaluated as right-continuous steps).
double difference_statistic(const CurveSet& curves, const std::vector<double>& restrict_to = {});

struct PermutationResult {
  double s0 = 0.0;
  std::vector<double> s_perm;
  double p_value = 1.0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
};

// Statistics within this distance of s0 count as ties (s_k >= s0).
inline constexpr double kPermutationTieTolerance = 1e-10;

// (time, status) order for permutation replicate `k` (1-based).
std::vector<std::size_t> replicate_permutation(std::uint64_t seed, std::size_t k, std::size_t n);

// Permutes (time, status) pairs against the fixed, ordered mixture vectors.
// Estimator errors propagate.
PermutationResult permutation_test(const MixtureSample& sample, const TimeGrid& grid,
                                   const FitFunction& fit, std::size_t replicates,
                                   const std::vector<double>& restrict_to, std::uint64_t seed,
                                   std::size_t jobs = 1);

PermutationResult permutation_test(const MixtureSample& sample, const TimeGrid& grid, Method method,
                                   std::size_t replicates, const std::vector<double>& restrict_to,
                                   std::uint64_t seed, const EmConfig& config = {},
                                   std::size_t jobs = 1);

struct BootstrapResult {
  CurveSet estimate;                  // fit on the original sample
  std::vector<CurveSet> replicates;   // successful replicates, in replicate order
  // h x K, row major, aligned with estimate.values()
  std::vector<double> sd;
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t requested = 0;
  std::size_t failures = 0;
  double level = 0.95;
  std::uint64_t seed = 0;
};

// Rows drawn with replacement for bootstrap replicate `b` (1-based).
std::vector<std::size_t> replicate_resample(std::uint64_t seed, std::size_t b, std::size_t n);

// Linear-interpolation sample quantile (type 7). `sorted` must be ascending.
double quantile_sorted(const std::vector<double>& sorted, double prob);

// Percentile bands from whole-row resamples. Replicates whose fit throws
// are dropped and counted; more than 10% failures raises
// EstimationError(TooManyFailures).
BootstrapResult bootstrap_bands(const MixtureSample& sample, const TimeGrid& grid,
                                const FitFunction& fit, std::size_t replicates, double level,
                                std::uint64_t seed, std::size_t jobs = 1);

BootstrapResult bootstrap_bands(const MixtureSample& sample, const TimeGrid& grid, Method method,
                                std::size_t replicates, double level, std::uint64_t seed,
                                const EmConfig& config = {}, std::size_t jobs = 1);

}  // namespace isomix
