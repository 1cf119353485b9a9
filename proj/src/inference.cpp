#include "isomix/inference.hpp"

#include "isomix/parallel.hpp"
#include "isomix/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace isomix {

namespace {

constexpr std::uint64_t kPermutationDomain = 0x7065726d;  // "perm"
constexpr std::uint64_t kBootstrapDomain = 0x626f6f74;    // "boot"

}  // namespace

FitFunction fit_function(Method method, const EmConfig& config) {
  return [method, config](const MixtureSample& sample, const TimeGrid& grid) {
    return estimate(method, sample, grid, config);
  };
}

double difference_statistic(const CurveSet& curves, const std::vector<double>& restrict_to) {
  double s = 0.0;
  if (restrict_to.empty()) {
    for (std::size_t j = 0; j < curves.points(); ++j)
      s = std::max(s, std::abs(curves.value(j, 0) - curves.value(j, 1)));
  } else {
    for (double t : restrict_to) s = std::max(s, std::abs(curves.eval(0, t) - curves.eval(1, t)));
  }
  return s;
}

std::vector<std::size_t> replicate_permutation(std::uint64_t seed, std::size_t k, std::size_t n) {
  Rng rng = make_stream(seed, k, kPermutationDomain);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle_in_place(order, rng);
  return order;
}

PermutationResult permutation_test(const MixtureSample& sample, const TimeGrid& grid,
                                   const FitFunction& fit, std::size_t replicates,
                                   const std::vector<double>& restrict_to, std::uint64_t seed,
                                   std::size_t jobs) {
  if (replicates < 1) throw std::invalid_argument("permutation test needs at least one replicate");
  PermutationResult result;
  result.seed = seed;
  result.replicates = replicates;
  result.s0 = difference_statistic(fit(sample, grid).curves, restrict_to);
  result.s_perm.assign(replicates, 0.0);
  parallel_for(replicates, jobs, [&](std::size_t k) {
    const auto order = replicate_permutation(seed, k + 1, sample.size());
    const MixtureSample permuted = sample.with_time_status_from(order);
    result.s_perm[k] = difference_statistic(fit(permuted, grid).curves, restrict_to);
  });
  const auto hits = std::count_if(result.s_perm.begin(), result.s_perm.end(), [&](double s) {
    return s >= result.s0 - kPermutationTieTolerance;
  });
  result.p_value = static_cast<double>(hits) / static_cast<double>(replicates);
  return result;
}

PermutationResult permutation_test(const MixtureSample& sample, const TimeGrid& grid, Method method,
                                   std::size_t replicates, const std::vector<double>& restrict_to,
                                   std::uint64_t seed, const EmConfig& config, std::size_t jobs) {
  return permutation_test(sample, grid, fit_function(method, config), replicates, restrict_to, seed, jobs);
}

std::vector<std::size_t> replicate_resample(std::uint64_t seed, std::size_t b, std::size_t n) {
  Rng rng = make_stream(seed, b, kBootstrapDomain);
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = uniform_index(rng, n);
  return rows;
}

double quantile_sorted(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty set");
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap_bands(const MixtureSample& sample, const TimeGrid& grid,
                                const FitFunction& fit, std::size_t replicates, double level,
                                std::uint64_t seed, std::size_t jobs) {
  if (replicates < 2) throw std::invalid_argument("bootstrap needs at least two replicates");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap level must lie in (0,1)");

  BootstrapResult result;
  result.requested = replicates;
  result.level = level;
  result.seed = seed;
  result.estimate = fit(sample, grid).curves;

  std::vector<std::optional<CurveSet>> fits(replicates);
  parallel_for(replicates, jobs, [&](std::size_t b) {
    const MixtureSample resample = sample.resampled(replicate_resample(seed, b + 1, sample.size()));
    try {
      fits[b] = fit(resample, grid).curves;
    } catch (const EstimationError&) {
    } catch (const InputError&) {
    }
  });
  for (auto& f : fits) {
    if (f) result.replicates.push_back(std::move(*f));
    else ++result.failures;
  }
  if (result.failures * 10 > replicates) {
    std::ostringstream os;
    os << result.failures << " of " << replicates << " bootstrap replicates failed";
    throw EstimationError(EstimationError::Code::TooManyFailures, os.str());
  }

  const std::size_t cells = result.estimate.values().size();
  const std::size_t used = result.replicates.size();
  result.sd.assign(cells, 0.0);
  result.lower.assign(cells, 0.0);
  result.upper.assign(cells, 0.0);
  std::vector<double> column(used);
  const double tail = 0.5 * (1.0 - level);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t b = 0; b < used; ++b) column[b] = result.replicates[b].values()[c];
    const double mean = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(used);
    double ss = 0.0;
    for (double x : column) ss += (x - mean) * (x - mean);
    std::sort(column.begin(), column.end());
    const bool constant = column.front() == column.back();
    result.sd[c] = used > 1 && !constant ? std::sqrt(ss / static_cast<double>(used - 1)) : 0.0;
    result.lower[c] = quantile_sorted(column, tail);
    result.upper[c] = quantile_sorted(column, 1.0 - tail);
  }
  return result;
}

BootstrapResult bootstrap_bands(const MixtureSample& sample, const TimeGrid& grid, Method method,
                                std::size_t replicates, double level, std::uint64_t seed,
                                const EmConfig& config, std::size_t jobs) {
  return bootstrap_bands(sample, grid, fit_function(method, config), replicates, level, seed, jobs);
}

}  // namespace isomix
