#include "isomix/simulation.hpp"

#include "isomix/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace isomix {

namespace {

constexpr std::uint64_t kSampleDomain = 0x73616d70;  // "samp"
constexpr std::uint64_t kBootDomain = 0x62747370;    // "btsp"
constexpr std::uint64_t kPermDomain = 0x70726d73;    // "prms"
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

Cdf truncated_exponential(double scale, double upper) {
  return [scale, upper](double t) {
    if (t <= 0.0) return 0.0;
    if (t >= upper) return 1.0;
    return -std::expm1(-t / scale) / -std::expm1(-upper / scale);
  };
}

// Logistic rise on [0, 100] joined to a linear piece on [100, 300]. The two
// printed pieces do not meet at t = 100, so the running maximum is used.
Cdf logistic_then_linear(double height, double intercept, double slope) {
  return [=](double t) {
    if (t <= 0.0) return 0.0;
    const double at_100 = height / (1.0 + std::exp(-(100.0 - 80.0) / 5.0));
    if (t <= 100.0) return height / (1.0 + std::exp(-(t - 80.0) / 5.0));
    const double linear = intercept + slope * std::min(t, 300.0);
    return std::min(1.0, std::max(at_100, linear));
  };
}

std::vector<std::vector<double>> published_mix_support() {
  return {{1.0, 0.0}, {0.6, 0.4}, {0.2, 0.8}, {0.16, 0.84}};
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  if (!(b > a)) return 0.0;
  // Split into panels so kinks in piecewise CDFs are resolved.
  constexpr int kPanels = 64;
  double total = 0.0;
  const double step = (b - a) / kPanels;
  for (int p = 0; p < kPanels; ++p) {
    const double lo = a + step * p;
    const double hi = p + 1 == kPanels ? b : lo + step;
    const double flo = f(lo);
    const double fhi = f(hi);
    const double fmid = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    total += adaptive_simpson(f, lo, hi, flo, fmid, fhi, whole, 1e-12, 40);
  }
  return total;
}

double mean_lambda(const ExperimentSpec& spec) {
  double m = 0.0;
  for (std::size_t p = 0; p < spec.mix_support.size(); ++p) m += spec.mix_probs[p] * spec.mix_support[p][0];
  return m;
}

std::size_t find_grid_index(const TimeGrid& grid, double t) {
  const std::size_t below = grid.count_below(t);
  if (below >= grid.size() || grid[below] != t) throw std::logic_error("evaluation time missing from grid");
  return below;
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

void ExperimentSpec::validate() const {
  if (!cdf[0] || !cdf[1]) throw std::invalid_argument("experiment needs two component CDFs");
  if (!(support_upper > 0.0)) throw std::invalid_argument("support upper bound must be positive");
  if (mix_support.empty() || mix_support.size() != mix_probs.size())
    throw std::invalid_argument("mixture support and probabilities differ in length");
  double total = 0.0;
  for (std::size_t p = 0; p < mix_support.size(); ++p) {
    if (mix_support[p].size() != 2) throw std::invalid_argument("mixture vectors need two entries");
    if (std::abs(mix_support[p][0] + mix_support[p][1] - 1.0) > kSimplexTolerance ||
        mix_support[p][0] < 0.0 || mix_support[p][1] < 0.0)
      throw std::invalid_argument("mixture vector is not on the simplex");
    if (!(mix_probs[p] >= 0.0)) throw std::invalid_argument("mixture probabilities must be nonnegative");
    total += mix_probs[p];
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture probabilities must sum to 1");
  if (n < 1) throw std::invalid_argument("sample size must be positive");
  if (!(censoring >= 0.0 && censoring < 1.0)) throw std::invalid_argument("censoring rate must lie in [0,1)");
  if (replicates < 1) throw std::invalid_argument("replicate count must be positive");
  if (!(eval_upper > 0.0)) throw std::invalid_argument("evaluation range must be positive");
}

ExperimentSpec experiment(int id) {
  ExperimentSpec spec;
  spec.id = id;
  spec.mix_support = published_mix_support();
  spec.mix_probs = {0.25, 0.25, 0.25, 0.25};
  switch (id) {
    case 1:
      spec.name = "exp1";
      spec.cdf = {truncated_exponential(1.0, 10.0), truncated_exponential(2.8, 10.0)};
      spec.support_upper = 10.0;
      spec.eval_upper = 10.0;
      spec.pointwise_time = 1.3;
      spec.iab_window = {Window{0.0, 10.0}, Window{0.0, 10.0}};
      spec.coverage_window = {Window{0.0, 4.0}, Window{0.0, 9.0}};
      break;
    case 2:
      spec.name = "exp2";
      spec.cdf = {logistic_then_linear(0.8, 0.678, 0.001), logistic_then_linear(0.2, -0.205, 0.004)};
      spec.support_upper = 300.0;
      spec.eval_upper = 100.0;
      spec.pointwise_time = 85.0;
      spec.iab_window = {Window{0.0, 100.0}, Window{0.0, 100.0}};
      spec.coverage_window = {Window{48.0, 100.0}, Window{48.0, 100.0}};
      break;
    case 3:
      spec.name = "exp3";
      spec.cdf = {truncated_exponential(4.0, 10.0), truncated_exponential(2.0, 5.0)};
      spec.support_upper = 10.0;
      spec.eval_upper = 10.0;
      spec.pointwise_time = 2.0;
      spec.iab_window = {Window{0.0, 10.0}, Window{0.0, 5.0}};
      spec.coverage_window = {Window{0.0, 10.0}, Window{0.0, 10.0}};
      break;
    default:
      throw std::invalid_argument("experiment id must be 1, 2 or 3");
  }
  return spec;
}

ExperimentSpec null_design(const ExperimentSpec& spec) {
  ExperimentSpec out = spec;
  out.name = spec.name + "_h0";
  out.cdf[1] = spec.cdf[0];
  out.iab_window[1] = spec.iab_window[0];
  out.coverage_window[1] = spec.coverage_window[0];
  return out;
}

double marginal_cdf(const ExperimentSpec& spec, double t) {
  const double lambda = mean_lambda(spec);
  return lambda * spec.cdf[0](t) + (1.0 - lambda) * spec.cdf[1](t);
}

double expected_censoring(const ExperimentSpec& spec, double upper) {
  if (!(upper > 0.0)) return 1.0;
  if (std::isinf(upper)) return 0.0;
  auto survival = [&](double c) { return 1.0 - marginal_cdf(spec, c); };
  const double inside = integrate(survival, 0.0, std::min(upper, spec.support_upper));
  const double residual = 1.0 - marginal_cdf(spec, spec.support_upper);
  const double tail = upper > spec.support_upper ? (upper - spec.support_upper) * residual : 0.0;
  return (inside + tail) / upper;
}

CensoringPlan calibrate_censoring(const ExperimentSpec& spec) {
  CensoringPlan plan;
  plan.target = spec.censoring;
  if (spec.censoring == 0.0) return plan;

  const double residual = 1.0 - marginal_cdf(spec, spec.support_upper);
  if (!(spec.censoring > residual && spec.censoring < 1.0)) {
    throw EstimationError(EstimationError::Code::Calibration,
                          "target censoring rate is unreachable with uniform censoring");
  }
  double lo = spec.support_upper * 1e-9;
  double hi = spec.support_upper;
  while (expected_censoring(spec, hi) > spec.censoring) {
    hi *= 2.0;
    if (hi > spec.support_upper * 1e12) {
      throw EstimationError(EstimationError::Code::Calibration, "censoring calibration did not bracket the target");
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (expected_censoring(spec, mid) > spec.censoring) lo = mid;
    else hi = mid;
  }
  plan.upper = 0.5 * (lo + hi);
  plan.expected_rate = expected_censoring(spec, plan.upper);
  if (std::abs(plan.expected_rate - spec.censoring) > 1e-3) {
    throw EstimationError(EstimationError::Code::Calibration, "censoring calibration missed its target");
  }
  return plan;
}

double invert_cdf(const Cdf& cdf, double p, double upper) {
  double lo = 0.0;
  double hi = upper;
  if (cdf(0.0) >= p) return 0.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) >= p) hi = mid;
    else lo = mid;
  }
  return hi;
}

SimulatedData draw_sample(const ExperimentSpec& spec, const CensoringPlan& plan, Rng& rng) {
  std::vector<Observation> rows(spec.n);
  SimulatedData data;
  data.labels.resize(spec.n);
  data.event_times.resize(spec.n);
  const std::array<double, 2> reachable{spec.cdf[0](spec.support_upper), spec.cdf[1](spec.support_upper)};
  for (std::size_t i = 0; i < spec.n; ++i) {
    double pick = uniform01(rng);
    std::size_t p = 0;
    while (p + 1 < spec.mix_probs.size() && pick >= spec.mix_probs[p]) {
      pick -= spec.mix_probs[p];
      ++p;
    }
    const auto& mix = spec.mix_support[p];
    const int label = uniform01(rng) < mix[0] ? 1 : 2;
    const double u = uniform01(rng);
    const auto& cdf = spec.cdf[static_cast<std::size_t>(label - 1)];
    const double s = u < reachable[static_cast<std::size_t>(label - 1)] ? invert_cdf(cdf, u, spec.support_upper) : kInf;
    double c = std::isinf(plan.upper) ? kInf : plan.upper * uniform01(rng);
    // Never-occurring events with no random censoring are cut at the end of follow-up.
    if (std::isinf(s) && std::isinf(c)) c = spec.support_upper;
    rows[i].time = std::min(s, c);
    rows[i].status = s <= c ? 1 : 0;
    rows[i].mix = mix;
    data.labels[i] = label;
    data.event_times[i] = s;
  }
  data.sample = MixtureSample::validate(std::move(rows));
  return data;
}

SimulatedData sample_experiment(const ExperimentSpec& spec, std::uint64_t seed) {
  spec.validate();
  const CensoringPlan plan = calibrate_censoring(spec);
  Rng rng = make_stream(seed, 0, kSampleDomain);
  return draw_sample(spec, plan, rng);
}

SimulatedData replicate_sample(const ExperimentSpec& spec, const CensoringPlan& plan, std::size_t r) {
  Rng rng = make_stream(spec.seed, r + 1, kSampleDomain);
  return draw_sample(spec, plan, rng);
}

SimEstimator make_estimator(Method method, const EmConfig& config) {
  return {to_string(method), fit_function(method, config)};
}

SimEstimator truth_estimator(const ExperimentSpec& spec) {
  auto cdf = spec.cdf;
  return {"truth", [cdf](const MixtureSample&, const TimeGrid& grid) {
            EstimateReport report;
            std::vector<std::vector<double>> columns(2, std::vector<double>(grid.size()));
            for (std::size_t k = 0; k < 2; ++k)
              for (std::size_t j = 0; j < grid.size(); ++j) columns[k][j] = std::clamp(cdf[k](grid[j]), 0.0, 1.0);
            report.curves = CurveSet::from_columns(grid, columns);
            return report;
          }};
}

TimeGrid metrics_grid(const ExperimentSpec& spec, std::size_t points) {
  TimeGrid grid = even_grid({points, 0.0, spec.eval_upper});
  for (const auto& w : spec.iab_window) grid = merge_grids(grid, even_grid({points, w.lo, w.hi}));
  return merge_grids(grid, TimeGrid({spec.pointwise_time}));
}

double integrated_absolute_bias(const std::function<double(double)>& estimate,
                                const std::function<double(double)>& truth, Window window,
                                std::size_t points) {
  const TimeGrid pts = even_grid({points, window.lo, window.hi});
  const double width = (window.hi - window.lo) / static_cast<double>(points);
  double total = 0.0;
  for (double t : pts.times()) total += std::abs(estimate(t) - truth(t)) * width;
  return total;
}

namespace {

struct ReplicateFit {
  bool ok = false;
  std::vector<double> values;
  std::vector<double> sd;
  std::vector<double> lower;
  std::vector<double> upper;
};

}  // namespace

MetricsReport run_replications(const ExperimentSpec& spec, const std::vector<SimEstimator>& estimators,
                               const MetricsConfig& config) {
  spec.validate();
  const CensoringPlan plan = calibrate_censoring(spec);
  const TimeGrid grid = metrics_grid(spec, config.grid_points);
  const TimeGrid main_points = even_grid({config.grid_points, 0.0, spec.eval_upper});
  const std::size_t R = spec.replicates;
  const std::size_t E = estimators.size();

  std::vector<ReplicateFit> fits(R * E);
  std::vector<std::size_t> censored(R, 0);
  parallel_for(R, config.jobs, [&](std::size_t r) {
    const SimulatedData data = replicate_sample(spec, plan, r);
    censored[r] = data.sample.size() - data.sample.event_count();
    for (std::size_t e = 0; e < E; ++e) {
      ReplicateFit& out = fits[r * E + e];
      try {
        if (config.bootstrap > 0) {
          const std::uint64_t boot_seed = make_stream(spec.seed, r + 1, kBootDomain + e)();
          auto bands = bootstrap_bands(data.sample, grid, estimators[e].fit, config.bootstrap, config.level,
                                       boot_seed, 1);
          out.values = bands.estimate.values();
          out.sd = std::move(bands.sd);
          out.lower = std::move(bands.lower);
          out.upper = std::move(bands.upper);
        } else {
          out.values = estimators[e].fit(data.sample, grid).curves.values();
        }
        out.ok = true;
      } catch (const EstimationError&) {
      } catch (const InputError&) {
      }
    }
  });

  MetricsReport report;
  report.experiment = spec.name;
  report.n = spec.n;
  report.censoring = spec.censoring;
  report.censoring_upper = plan.upper;
  report.replicates = R;
  report.seed = spec.seed;
  report.bootstrap = config.bootstrap;
  report.pointwise_time = spec.pointwise_time;
  report.realized_censoring = static_cast<double>(std::accumulate(censored.begin(), censored.end(), std::size_t{0})) /
                              static_cast<double>(R * spec.n);

  const std::size_t h = grid.size();
  const std::size_t j0 = find_grid_index(grid, spec.pointwise_time);
  for (std::size_t e = 0; e < E; ++e) {
    EstimatorMetrics m;
    m.estimator = estimators[e].name;
    m.grid = grid.times();
    std::vector<const ReplicateFit*> ok;
    for (std::size_t r = 0; r < R; ++r) {
      if (fits[r * E + e].ok) ok.push_back(&fits[r * E + e]);
    }
    m.used = ok.size();
    m.failures = R - ok.size();
    if (ok.empty()) {
      report.rows.push_back(std::move(m));
      continue;
    }
    const bool bands = config.bootstrap > 0;
    for (std::size_t k = 0; k < 2; ++k) {
      auto values_at = [&](std::size_t j) {
        std::vector<double> xs;
        xs.reserve(ok.size());
        for (const auto* f : ok) xs.push_back(f->values[j * 2 + k]);
        return xs;
      };
      auto covered_share = [&](std::size_t j, double truth) {
        double hits = 0.0;
        for (const auto* f : ok)
          if (f->lower[j * 2 + k] <= truth && truth <= f->upper[j * 2 + k]) hits += 1.0;
        return hits / static_cast<double>(ok.size());
      };

      m.mean_curve[k].resize(h);
      for (std::size_t j = 0; j < h; ++j) {
        const auto xs = values_at(j);
        m.mean_curve[k][j] = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      }

      ComponentMetrics& c = m.component[k];
      c.truth = spec.cdf[k](spec.pointwise_time);
      c.bias = m.mean_curve[k][j0] - c.truth;
      c.emp_sd = sample_sd(values_at(j0));
      if (bands) {
        double sd_total = 0.0;
        for (const auto* f : ok) sd_total += f->sd[j0 * 2 + k];
        c.est_sd = sd_total / static_cast<double>(ok.size());
        c.coverage = covered_share(j0, c.truth);
      } else {
        c.est_sd = kNaN;
        c.coverage = kNaN;
      }

      const StepFunction mean_step(grid.times(), m.mean_curve[k]);
      c.iab = integrated_absolute_bias(mean_step, spec.cdf[k], spec.iab_window[k], config.grid_points);

      double var_total = 0.0;
      double cov_total = 0.0;
      std::size_t cov_points = 0;
      for (double t : main_points.times()) {
        const std::size_t j = find_grid_index(grid, t);
        const double sd = sample_sd(values_at(j));
        var_total += sd * sd;
        const auto& w = spec.coverage_window[k];
        if (bands && t > w.lo && t <= w.hi) {
          cov_total += covered_share(j, spec.cdf[k](t));
          ++cov_points;
        }
      }
      c.avg_variance = var_total / static_cast<double>(main_points.size());
      c.avg_coverage = cov_points > 0 ? cov_total / static_cast<double>(cov_points) : kNaN;
    }
    report.rows.push_back(std::move(m));
  }
  return report;
}

PowerRow rejection_rates(const ExperimentSpec& spec, const SimEstimator& estimator,
                         const PowerConfig& config, const std::string& hypothesis) {
  spec.validate();
  if (config.permutations < 1) throw std::invalid_argument("power study needs permutations >= 1");
  const CensoringPlan plan = calibrate_censoring(spec);
  const TimeGrid grid = even_grid({50, 0.0, spec.eval_upper});
  const std::size_t R = spec.replicates;
  std::vector<std::optional<double>> p_values(R);
  parallel_for(R, config.jobs, [&](std::size_t r) {
    const SimulatedData data = replicate_sample(spec, plan, r);
    const std::uint64_t perm_seed = make_stream(spec.seed, r + 1, kPermDomain)();
    try {
      p_values[r] = permutation_test(data.sample, grid, estimator.fit, config.permutations, {}, perm_seed, 1).p_value;
    } catch (const EstimationError&) {
    } catch (const InputError&) {
    }
  });

  PowerRow row;
  row.estimator = estimator.name;
  row.hypothesis = hypothesis;
  for (const auto& p : p_values) {
    if (!p) {
      ++row.failures;
      continue;
    }
    ++row.used;
    for (std::size_t a = 0; a < kNominalLevels.size(); ++a)
      if (*p <= kNominalLevels[a] + 1e-12) row.rejection[a] += 1.0;
  }
  if (row.used > 0)
    for (double& r : row.rejection) r /= static_cast<double>(row.used);
  return row;
}

std::vector<PowerRow> power_study(const ExperimentSpec& h0, const ExperimentSpec& h1,
                                  const std::vector<SimEstimator>& estimators, const PowerConfig& config) {
  std::vector<PowerRow> rows;
  for (const auto& est : estimators) {
    rows.push_back(rejection_rates(h0, est, config, "H0"));
    rows.push_back(rejection_rates(h1, est, config, "H1"));
  }
  return rows;
}

}  // namespace isomix
