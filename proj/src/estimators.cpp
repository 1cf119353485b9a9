#include "isomix/estimators.hpp"

#include "isomix/isotonic.hpp"
#include "isomix/survival.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace isomix {

const char* to_string(Method method) {
  switch (method) {
    case Method::em_pava: return "em_pava";
    case Method::binomial_pointwise: return "binomial_pointwise";
    case Method::npmle_type1: return "npmle_type1";
    case Method::npmle_type1_weighted: return "npmle_type1_weighted";
    case Method::npmle_type2: return "npmle_type2";
    case Method::kaplan_meier: return "kaplan_meier";
  }
  return "unknown";
}

Method parse_method(std::string_view tag) {
  std::string t(tag);
  std::replace(t.begin(), t.end(), '-', '_');
  for (Method m : {Method::em_pava, Method::binomial_pointwise, Method::npmle_type1,
                   Method::npmle_type1_weighted, Method::npmle_type2, Method::kaplan_meier}) {
    if (t == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown estimator '" + std::string(tag) + "'");
}

const char* to_string(Initialization init) {
  return init == Initialization::pooled_km ? "pooled_km" : "uniform_linear";
}

Initialization parse_initialization(std::string_view tag) {
  std::string t(tag);
  std::replace(t.begin(), t.end(), '-', '_');
  if (t == "pooled_km") return Initialization::pooled_km;
  if (t == "uniform" || t == "uniform_linear") return Initialization::uniform_linear;
  throw std::invalid_argument("unknown initialization '" + std::string(tag) + "'");
}

void EmConfig::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  if (!(clamp_epsilon >= 0.0)) throw std::invalid_argument("clamp epsilon must be >= 0");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_two_components(const MixtureSample& sample) {
  if (sample.k() != 2) {
    throw InputError(InputError::Code::InconsistentK,
                     "estimators support exactly two mixture components");
  }
}

void require_estimable(const MixtureSample& sample) {
  require_two_components(sample);
  if (!sample.identifiable() && !sample.fully_labeled()) {
    throw EstimationError(EstimationError::Code::NotIdentifiable,
                          "sample needs at least two linearly independent mixture vectors");
  }
}

double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;
  return x * std::log(y);
}

// Sample aggregated by support point, with censored rows grouped by where
// their time falls on the grid. Every E-step quantity depends on a row only
// through (support, status, grid position).
struct Layout {
  struct CensoredGroup {
    std::size_t support;
    std::size_t below;        // grid points < x
    std::size_t at_or_below;  // grid points <= x
    double count;
  };

  std::size_t m = 0;
  std::size_t h = 0;
  std::vector<double> lambda;
  std::vector<double> size;
  std::vector<double> events_le;  // m x h: events with x <= t_j
  std::vector<CensoredGroup> censored;
};

Layout make_layout(const MixtureSample& sample, const TimeGrid& grid) {
  Layout L;
  L.m = sample.support().size();
  L.h = grid.size();
  L.lambda.resize(L.m);
  L.size.resize(L.m);
  for (std::size_t s = 0; s < L.m; ++s) {
    L.lambda[s] = sample.support()[s].mix[0];
    L.size[s] = static_cast<double>(sample.support()[s].count);
  }
  L.events_le.assign(L.m * L.h, 0.0);
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> groups;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto& obs = sample[i];
    const std::size_t s = sample.support_index(i);
    const std::size_t below = grid.count_below(obs.time);
    if (obs.status == 1) {
      if (below < L.h) L.events_le[s * L.h + below] += 1.0;
    } else if (below < L.h) {
      groups[{s, below, grid.count_at_or_below(obs.time)}] += 1.0;
    }
  }
  for (std::size_t s = 0; s < L.m; ++s)
    for (std::size_t j = 1; j < L.h; ++j) L.events_le[s * L.h + j] += L.events_le[s * L.h + j - 1];
  for (const auto& [key, count] : groups)
    L.censored.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), count});
  return L;
}

double mix_cdf(double lambda, const CurveSet& F, std::size_t j) {
  return lambda * F.value(j, 0) + (1.0 - lambda) * F.value(j, 1);
}

double mix_survival(double lambda, const CurveSet& F, std::size_t j) {
  return lambda * (1.0 - F.value(j, 0)) + (1.0 - lambda) * (1.0 - F.value(j, 1));
}

// failures[s*h + j] = sum over rows in support s of (1 - w_ij).
void impute_failures(const Layout& L, const CurveSet& F, const EmConfig& config,
                     std::vector<double>& failures) {
  failures = L.events_le;
  for (const auto& g : L.censored) {
    const double lambda = L.lambda[g.support];
    const double denom = g.at_or_below == 0 ? 1.0 : mix_survival(lambda, F, g.at_or_below - 1);
    double* row = failures.data() + g.support * L.h;
    if (config.clamp && denom < config.clamp_epsilon) {
      for (std::size_t j = g.below; j < L.h; ++j) row[j] += g.count;
      continue;
    }
    if (!(denom > 0.0)) {
      throw EstimationError(EstimationError::Code::ZeroDenominator,
                            "mixture survival at a censored time is zero");
    }
    for (std::size_t j = g.below; j < L.h; ++j) {
      const double ratio = std::min(1.0, std::max(0.0, mix_survival(lambda, F, j) / denom));
      row[j] += g.count * (1.0 - ratio);
    }
  }
}

double posterior_below(double lambda, const CurveSet& F, std::size_t j) {
  const double p = mix_cdf(lambda, F, j);
  return p > 0.0 ? lambda * F.value(j, 0) / p : lambda;
}

double posterior_above(double lambda, const CurveSet& F, std::size_t j) {
  const double s = mix_survival(lambda, F, j);
  return s > 0.0 ? lambda * (1.0 - F.value(j, 0)) / s : lambda;
}

double objective_from_failures(const Layout& L, const CurveSet& F,
                               const std::vector<double>& failures) {
  // Neumaier summation; traces are compared at 1e-10 absolute.
  double total = 0.0;
  double carry = 0.0;
  auto add = [&](double x) {
    const double t = total + x;
    carry += std::abs(total) >= std::abs(x) ? (total - t) + x : (x - t) + total;
    total = t;
  };
  for (std::size_t s = 0; s < L.m; ++s) {
    for (std::size_t j = 0; j < L.h; ++j) {
      const double a = failures[s * L.h + j];
      const double b = std::max(0.0, L.size[s] - a);
      add(xlogy(a, mix_cdf(L.lambda[s], F, j)));
      add(xlogy(b, mix_survival(L.lambda[s], F, j)));
    }
  }
  return total + carry;
}

// Isotonic regression of num/den with weights den; zero-weight points copy
// their left neighbour (0 at the first point).
std::vector<double> isotonic_with_gaps(const std::vector<double>& num, const std::vector<double>& den) {
  const std::size_t h = num.size();
  std::vector<double> y;
  std::vector<double> r;
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < h; ++j) {
    if (den[j] > 0.0) {
      y.push_back(std::clamp(num[j] / den[j], 0.0, 1.0));
      r.push_back(den[j]);
      idx.push_back(j);
    }
  }
  std::vector<double> out(h, 0.0);
  if (y.empty()) return out;
  const auto fitted = pava(IsotonicProblem(std::move(y), std::move(r)));
  for (std::size_t q = 0; q < idx.size(); ++q) out[idx[q]] = fitted[q];
  for (std::size_t j = 1; j < h; ++j)
    if (!(den[j] > 0.0)) out[j] = out[j - 1];
  return out;
}

CurveSet pava_step(const Layout& L, const CurveSet& F, const std::vector<double>& failures) {
  std::vector<double> num1(L.h, 0.0), den1(L.h, 0.0), num2(L.h, 0.0), den2(L.h, 0.0);
  for (std::size_t s = 0; s < L.m; ++s) {
    const double lambda = L.lambda[s];
    for (std::size_t j = 0; j < L.h; ++j) {
      const double a = failures[s * L.h + j];
      const double b = std::max(0.0, L.size[s] - a);
      const double u = posterior_below(lambda, F, j);
      const double v = posterior_above(lambda, F, j);
      num1[j] += u * a;
      den1[j] += u * a + v * b;
      num2[j] += (1.0 - u) * a;
      den2[j] += (1.0 - u) * a + (1.0 - v) * b;
    }
  }
  return CurveSet::from_columns(F.grid(), {isotonic_with_gaps(num1, den1), isotonic_with_gaps(num2, den2)});
}

void note_empty_components(const Layout& L, EstimateReport& report) {
  double mass1 = 0.0;
  double mass2 = 0.0;
  for (std::size_t s = 0; s < L.m; ++s) {
    mass1 += L.lambda[s] * L.size[s];
    mass2 += (1.0 - L.lambda[s]) * L.size[s];
  }
  if (mass1 == 0.0) report.warnings.push_back("component 1 has no mixture weight; its curve is 0");
  if (mass2 == 0.0) report.warnings.push_back("component 2 has no mixture weight; its curve is 0");
}

}  // namespace

EmState estep_weights(const CurveSet& curves, const MixtureSample& sample, const EmConfig& config) {
  require_two_components(sample);
  const TimeGrid& grid = curves.grid();
  const auto n = static_cast<Eigen::Index>(sample.size());
  const auto h = static_cast<Eigen::Index>(grid.size());
  EmState state;
  state.w.resize(n, h);
  state.u.resize(n, h);
  state.v.resize(n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& obs = sample[static_cast<std::size_t>(i)];
    const double lambda = obs.mix[0];
    auto mix_surv_at = [&](double t) {
      return lambda * (1.0 - curves.eval(0, t)) + (1.0 - lambda) * (1.0 - curves.eval(1, t));
    };
    const double denom = mix_surv_at(obs.time);
    for (Eigen::Index j = 0; j < h; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      const double t = grid[jj];
      double w = obs.time > t ? 1.0 : 0.0;
      if (obs.status == 0 && obs.time <= t) {
        if (config.clamp && denom < config.clamp_epsilon) {
          w = 0.0;
        } else if (!(denom > 0.0)) {
          throw EstimationError(EstimationError::Code::ZeroDenominator,
                                "mixture survival at a censored time is zero");
        } else {
          w = std::clamp(mix_survival(lambda, curves, jj) / denom, 0.0, 1.0);
        }
      }
      state.w(i, j) = w;
      state.u(i, j) = posterior_below(lambda, curves, jj);
      state.v(i, j) = posterior_above(lambda, curves, jj);
    }
  }
  const Eigen::MatrixXd one_minus_w = Eigen::MatrixXd::Ones(n, h) - state.w;
  state.r1 = state.u.cwiseProduct(one_minus_w) + state.v.cwiseProduct(state.w);
  state.r2 = (Eigen::MatrixXd::Ones(n, h) - state.u).cwiseProduct(one_minus_w) +
             (Eigen::MatrixXd::Ones(n, h) - state.v).cwiseProduct(state.w);
  return state;
}

CurveSet pava_mstep(const EmState& state, const TimeGrid& grid) {
  const Eigen::Index h = state.w.cols();
  std::vector<double> num1(static_cast<std::size_t>(h)), den1(num1.size()), num2(num1.size()), den2(num1.size());
  const Eigen::MatrixXd one_minus_w = Eigen::MatrixXd::Ones(state.w.rows(), h) - state.w;
  for (Eigen::Index j = 0; j < h; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    num1[jj] = state.u.col(j).dot(one_minus_w.col(j));
    den1[jj] = state.r1.col(j).sum();
    num2[jj] = (Eigen::VectorXd::Ones(state.u.rows()) - state.u.col(j)).dot(one_minus_w.col(j));
    den2[jj] = state.r2.col(j).sum();
  }
  return CurveSet::from_columns(grid, {isotonic_with_gaps(num1, den1), isotonic_with_gaps(num2, den2)});
}

double binomial_objective(const CurveSet& curves, const MixtureSample& sample, const EmConfig& config) {
  require_two_components(sample);
  const Layout L = make_layout(sample, curves.grid());
  std::vector<double> failures;
  impute_failures(L, curves, config, failures);
  return objective_from_failures(L, curves, failures);
}

CurveSet initial_curves(const MixtureSample& sample, const TimeGrid& grid, Initialization init) {
  const std::size_t h = grid.size();
  std::vector<double> start(h);
  if (init == Initialization::uniform_linear) {
    for (std::size_t j = 0; j < h; ++j) start[j] = static_cast<double>(j + 1) / static_cast<double>(h + 1);
  } else {
    std::vector<double> times;
    std::vector<int> status;
    for (const auto& obs : sample.observations()) {
      times.push_back(obs.time);
      status.push_back(obs.status);
    }
    start = km_to_cdf(kaplan_meier(times, status), grid);
  }
  return CurveSet::from_columns(grid, {start, start});
}

EstimateReport em_pava(const MixtureSample& sample, const TimeGrid& grid, const EmConfig& config,
                       const IterationObserver& observer) {
  config.validate();
  require_estimable(sample);
  const Layout L = make_layout(sample, grid);

  EstimateReport report;
  report.method = Method::em_pava;
  report.converged = false;
  note_empty_components(L, report);

  CurveSet F = initial_curves(sample, grid, config.initialization);
  std::vector<double> failures;
  for (int b = 0; b < config.max_iterations; ++b) {
    impute_failures(L, F, config, failures);
    const double objective = objective_from_failures(L, F, failures);
    report.objective_trace.push_back(objective);
    if (observer) observer(b, F, objective);
    CurveSet next = pava_step(L, F, failures);
    const double change = sup_distance(next, F);
    F = std::move(next);
    report.iterations = b + 1;
    if (change < config.tolerance) {
      report.converged = true;
      break;
    }
  }
  impute_failures(L, F, config, failures);
  report.final_objective = objective_from_failures(L, F, failures);
  report.objective_trace.push_back(report.final_objective);
  if (observer) observer(report.iterations, F, report.final_objective);
  if (!report.converged) report.warnings.push_back("EM-PAVA reached max_iterations before converging");
  report.curves = std::move(F);
  return report;
}

namespace detail {

namespace {

struct PointObjective {
  const std::vector<double>& lambda;
  const std::vector<double>& a_counts;
  const std::vector<double>& b_counts;

  double value(double a, double b) const {
    double f = 0.0;
    for (std::size_t s = 0; s < lambda.size(); ++s) {
      const double p = lambda[s] * a + (1.0 - lambda[s]) * b;
      f += xlogy(a_counts[s], p) + xlogy(b_counts[s], 1.0 - p);
    }
    return std::isnan(f) ? -kInf : f;
  }

  // Derivative along coordinate `first ? a : b` with the other held fixed.
  double slope(double a, double b, bool first) const {
    double g = 0.0;
    for (std::size_t s = 0; s < lambda.size(); ++s) {
      const double c = first ? lambda[s] : 1.0 - lambda[s];
      if (c == 0.0) continue;
      const double p = lambda[s] * a + (1.0 - lambda[s]) * b;
      if (a_counts[s] > 0.0) g += c * a_counts[s] / p;
      if (b_counts[s] > 0.0) g -= c * b_counts[s] / (1.0 - p);
    }
    return g;
  }

  // Maximizes along one coordinate over [0,1] by bisection on the slope.
  double line_max(double a, double b, bool first) const {
    double lo = 0.0;
    double hi = 1.0;
    bool lo_moved = false;
    bool hi_moved = false;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double g = first ? slope(mid, b, true) : slope(a, mid, false);
      if (g > 0.0) {
        lo = mid;
        lo_moved = true;
      } else {
        hi = mid;
        hi_moved = true;
      }
    }
    if (!hi_moved) return 1.0;
    if (!lo_moved) return 0.0;
    return 0.5 * (lo + hi);
  }
};

}  // namespace

PointSolution solve_binomial_point(const std::vector<double>& lambda, const std::vector<double>& a_counts,
                                   const std::vector<double>& b_counts, double start_a, double start_b) {
  const PointObjective f{lambda, a_counts, b_counts};
  const bool uses_a = std::any_of(lambda.begin(), lambda.end(), [](double l) { return l > 0.0; });
  const bool uses_b = std::any_of(lambda.begin(), lambda.end(), [](double l) { return l < 1.0; });
  if (!uses_b) return {f.line_max(0.0, 0.0, true), 0.0, true};
  if (!uses_a) return {0.0, f.line_max(0.0, 0.0, false), true};

  // Damped Newton from the current iterate, kept off the box boundary.
  constexpr double kMargin = 1e-6;
  double a = std::clamp(start_a, kMargin, 1.0 - kMargin);
  double b = std::clamp(start_b, kMargin, 1.0 - kMargin);
  double fx = f.value(a, b);
  bool converged = false;
  int polish = 0;
  for (int it = 0; it < 100 && std::isfinite(fx); ++it) {
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    for (std::size_t s = 0; s < lambda.size(); ++s) {
      const double l = lambda[s];
      const double p = l * a + (1.0 - l) * b;
      const double d1 = (a_counts[s] > 0.0 ? a_counts[s] / p : 0.0) -
                        (b_counts[s] > 0.0 ? b_counts[s] / (1.0 - p) : 0.0);
      const double d2 = (a_counts[s] > 0.0 ? a_counts[s] / (p * p) : 0.0) +
                        (b_counts[s] > 0.0 ? b_counts[s] / ((1.0 - p) * (1.0 - p)) : 0.0);
      ga += l * d1;
      gb += (1.0 - l) * d1;
      haa -= l * l * d2;
      hab -= l * (1.0 - l) * d2;
      hbb -= (1.0 - l) * (1.0 - l) * d2;
    }
    const double det = haa * hbb - hab * hab;
    if (!(haa < 0.0) || !(det > 0.0) || !std::isfinite(det)) break;
    const double da = -(hbb * ga - hab * gb) / det;
    const double db = -(haa * gb - hab * ga) / det;
    if (std::max(std::abs(da), std::abs(db)) < 1e-9) {
      // Inside the quadratic region the Armijo test is lost in rounding.
      a += da;
      b += db;
      converged = std::max(std::abs(da), std::abs(db)) < 1e-15 || ++polish >= 3;
      if (converged || a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) break;
      continue;
    }
    const double decrease = ga * da + gb * db;
    double step = 1.0;
    double na = a + da;
    double nb = b + db;
    double fn = f.value(na, nb);
    int halvings = 0;
    while (!(std::isfinite(fn) && fn >= fx + 1e-4 * step * decrease) && halvings < 60) {
      step *= 0.5;
      na = a + step * da;
      nb = b + step * db;
      fn = f.value(na, nb);
      ++halvings;
    }
    if (!std::isfinite(fn) || fn < fx) break;
    const double moved = std::max(std::abs(na - a), std::abs(nb - b));
    a = na;
    b = nb;
    fx = fn;
    if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) break;
    if (moved < 1e-14) {
      converged = true;
      break;
    }
  }
  const bool in_box = a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0;
  if (converged && in_box) return {a, b, true};

  // Box-constrained optimum: best point over the four edges.
  PointSolution best{0.0, 0.0, false};
  double best_value = -kInf;
  bool have = false;
  auto consider = [&](double ca, double cb) {
    const double v = f.value(ca, cb);
    if (!have || v > best_value) {
      best = {ca, cb, false};
      best_value = v;
      have = true;
    }
  };
  if (in_box && std::isfinite(fx)) consider(a, b);
  consider(0.0, f.line_max(0.0, 0.0, false));
  consider(1.0, f.line_max(1.0, 0.0, false));
  consider(f.line_max(0.0, 0.0, true), 0.0);
  consider(f.line_max(0.0, 1.0, true), 1.0);
  return best;
}

}  // namespace detail

EstimateReport binomial_pointwise_em(const MixtureSample& sample, const TimeGrid& grid,
                                     const EmConfig& config) {
  config.validate();
  require_estimable(sample);
  const Layout L = make_layout(sample, grid);

  EstimateReport report;
  report.method = Method::binomial_pointwise;
  report.converged = false;
  note_empty_components(L, report);

  CurveSet F = initial_curves(sample, grid, config.initialization);
  std::vector<double> failures;
  std::vector<bool> flagged(L.h, false);
  std::vector<double> a_counts(L.m), b_counts(L.m);
  for (int b = 0; b < config.max_iterations; ++b) {
    impute_failures(L, F, config, failures);
    report.objective_trace.push_back(objective_from_failures(L, F, failures));
    std::vector<double> col1(L.h), col2(L.h);
    for (std::size_t j = 0; j < L.h; ++j) {
      for (std::size_t s = 0; s < L.m; ++s) {
        a_counts[s] = failures[s * L.h + j];
        b_counts[s] = std::max(0.0, L.size[s] - a_counts[s]);
      }
      const auto sol = detail::solve_binomial_point(L.lambda, a_counts, b_counts, F.value(j, 0), F.value(j, 1));
      col1[j] = sol.a;
      col2[j] = sol.b;
      flagged[j] = !sol.interior;
    }
    CurveSet next = CurveSet::from_columns(grid, {col1, col2}, false);
    const double change = sup_distance(next, F);
    F = std::move(next);
    report.iterations = b + 1;
    if (change < config.tolerance) {
      report.converged = true;
      break;
    }
  }
  impute_failures(L, F, config, failures);
  report.final_objective = objective_from_failures(L, F, failures);
  report.objective_trace.push_back(report.final_objective);
  report.flagged_points = static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true));
  if (report.flagged_points > 0) {
    std::ostringstream os;
    os << report.flagged_points << " grid point(s) have no interior root; boundary optimum used";
    report.warnings.push_back(os.str());
  }
  if (!report.converged) report.warnings.push_back("pointwise EM reached max_iterations before converging");
  report.curves = std::move(F);
  return report;
}

EstimateReport npmle_type1(const MixtureSample& sample, const TimeGrid& grid, bool weighted) {
  const std::size_t m = sample.support().size();
  const std::size_t k = sample.k();
  if (m < k || !sample.identifiable()) {
    throw EstimationError(EstimationError::Code::SingularDesign,
                          "support matrix U has rank below the number of components");
  }
  std::vector<KmCurve> subgroup(m);
  for (std::size_t s = 0; s < m; ++s) {
    std::vector<double> times;
    std::vector<int> status;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (sample.support_index(i) != s) continue;
      times.push_back(sample[i].time);
      status.push_back(sample[i].status);
    }
    subgroup[s] = kaplan_meier(times, status);
  }

  Eigen::MatrixXd U(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < m; ++s)
    for (std::size_t c = 0; c < k; ++c)
      U(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) = sample.support()[s].mix[c];
  const Eigen::MatrixXd gram = U.transpose() * U;
  Eigen::FullPivLU<Eigen::MatrixXd> gram_lu(gram);
  if (!gram_lu.isInvertible()) {
    throw EstimationError(EstimationError::Code::SingularDesign, "U^T U is singular");
  }

  EstimateReport report;
  report.method = weighted ? Method::npmle_type1_weighted : Method::npmle_type1;
  std::vector<double> values(grid.size() * k);
  Eigen::VectorXd failure(static_cast<Eigen::Index>(m));
  Eigen::VectorXd precision(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    bool use_weights = weighted;
    for (std::size_t s = 0; s < m; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      failure(si) = 1.0 - subgroup[s].survival_at(grid[j]);
      const double var = subgroup[s].variance_at(grid[j]);
      if (!(var > 0.0) || !std::isfinite(var)) use_weights = false;
      else precision(si) = 1.0 / var;
    }
    Eigen::VectorXd solution;
    if (use_weights) {
      const Eigen::MatrixXd weighted_gram = U.transpose() * precision.asDiagonal() * U;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(weighted_gram);
      if (lu.isInvertible()) {
        solution = lu.solve(U.transpose() * precision.asDiagonal() * failure);
      } else {
        use_weights = false;
      }
    }
    if (!use_weights) {
      solution = gram_lu.solve(U.transpose() * failure);
      if (weighted) ++report.flagged_points;
    }
    for (std::size_t c = 0; c < k; ++c) values[j * k + c] = solution(static_cast<Eigen::Index>(c));
  }
  if (report.flagged_points > 0) {
    std::ostringstream os;
    os << report.flagged_points << " grid point(s) had a singular variance matrix; unweighted solve used";
    report.warnings.push_back(os.str());
  }
  for (std::size_t s = 0; s < m; ++s) {
    if (subgroup[s].all_censored) {
      report.warnings.push_back("a support subgroup has no events; its survival is flat at 1");
      break;
    }
  }
  report.curves = CurveSet::unconstrained(grid, k, std::move(values));
  return report;
}

namespace detail {

EstimateReport npmle_type2_unchecked(const MixtureSample& sample, const TimeGrid& grid,
                                     const EmConfig& config) {
  config.validate();
  require_two_components(sample);
  const std::size_t n = sample.size();
  std::vector<double> times(n);
  std::vector<int> status(n);
  for (std::size_t i = 0; i < n; ++i) {
    times[i] = sample[i].time;
    status[i] = sample[i].status;
  }

  EstimateReport report;
  report.method = Method::npmle_type2;
  report.converged = false;

  std::vector<double> support_times;
  for (std::size_t i = 0; i < n; ++i)
    if (status[i] == 1) support_times.push_back(times[i]);
  std::sort(support_times.begin(), support_times.end());
  support_times.erase(std::unique(support_times.begin(), support_times.end()), support_times.end());
  if (support_times.empty()) {
    report.warnings.push_back("no uncensored observations; curves are 0");
    report.curves = CurveSet(grid, 2, std::vector<double>(grid.size() * 2, 0.0));
    return report;
  }
  const TimeGrid knots(support_times);
  const std::size_t E = knots.size();

  // F[k][e] = F_k at the e-th distinct event time.
  std::vector<std::vector<double>> F(2, std::vector<double>(E));
  if (config.initialization == Initialization::uniform_linear) {
    for (std::size_t e = 0; e < E; ++e)
      F[0][e] = F[1][e] = static_cast<double>(e + 1) / static_cast<double>(E + 1);
  } else {
    F[0] = F[1] = km_to_cdf(kaplan_meier(times, status), knots);
  }

  // Per row: position among knots.
  std::vector<std::size_t> at_or_below(n);
  for (std::size_t i = 0; i < n; ++i) at_or_below[i] = knots.count_at_or_below(times[i]);

  auto cdf_at = [&](std::size_t k, std::size_t count) { return count == 0 ? 0.0 : F[k][count - 1]; };

  std::vector<std::vector<double>> c(2, std::vector<double>(n));
  for (int b = 0; b < config.max_iterations; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& q = sample[i].mix;
      const std::size_t pos = at_or_below[i];
      double part[2];
      for (std::size_t k = 0; k < 2; ++k) {
        part[k] = status[i] == 1 ? q[k] * (cdf_at(k, pos) - cdf_at(k, pos - 1))
                                 : q[k] * (1.0 - cdf_at(k, pos));
        part[k] = std::max(part[k], 0.0);
      }
      const double total = part[0] + part[1];
      for (std::size_t k = 0; k < 2; ++k) c[k][i] = total > 0.0 ? part[k] / total : q[k];
    }
    double change = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      const auto next = km_to_cdf(kaplan_meier(times, status, std::span<const double>(c[k])), knots);
      for (std::size_t e = 0; e < E; ++e) change = std::max(change, std::abs(next[e] - F[k][e]));
      F[k] = next;
    }
    report.iterations = b + 1;
    if (change < config.tolerance) {
      report.converged = true;
      break;
    }
  }
  if (!report.converged) report.warnings.push_back("type II NPMLE reached max_iterations before converging");

  std::vector<std::vector<double>> columns(2, std::vector<double>(grid.size()));
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < grid.size(); ++j) columns[k][j] = cdf_at(k, knots.count_at_or_below(grid[j]));
  report.curves = CurveSet::from_columns(grid, columns);
  return report;
}

}  // namespace detail

EstimateReport npmle_type2(const MixtureSample& sample, const TimeGrid& grid, const EmConfig& config) {
  require_estimable(sample);
  return detail::npmle_type2_unchecked(sample, grid, config);
}

EstimateReport labeled_kaplan_meier(const MixtureSample& sample, const TimeGrid& grid) {
  if (!sample.fully_labeled()) {
    throw EstimationError(EstimationError::Code::NotLabeled,
                          "Kaplan-Meier by group needs one-hot mixture vectors");
  }
  EstimateReport report;
  report.method = Method::kaplan_meier;
  std::vector<std::vector<double>> columns;
  for (std::size_t k = 0; k < sample.k(); ++k) {
    std::vector<double> times;
    std::vector<int> status;
    for (const auto& obs : sample.observations()) {
      if (obs.mix[k] != 1.0) continue;
      times.push_back(obs.time);
      status.push_back(obs.status);
    }
    if (times.empty()) {
      report.warnings.push_back("component " + std::to_string(k + 1) + " has no rows; its curve is 0");
      columns.emplace_back(grid.size(), 0.0);
      continue;
    }
    const KmCurve km = kaplan_meier(times, status);
    if (km.all_censored)
      report.warnings.push_back("component " + std::to_string(k + 1) + " has no events");
    columns.push_back(km_to_cdf(km, grid));
  }
  report.curves = CurveSet::from_columns(grid, columns);
  return report;
}

EstimateReport estimate(Method method, const MixtureSample& sample, const TimeGrid& grid,
                        const EmConfig& config) {
  switch (method) {
    case Method::em_pava: return em_pava(sample, grid, config);
    case Method::binomial_pointwise: return binomial_pointwise_em(sample, grid, config);
    case Method::npmle_type1: return npmle_type1(sample, grid, false);
    case Method::npmle_type1_weighted: return npmle_type1(sample, grid, true);
    case Method::npmle_type2: return npmle_type2(sample, grid, config);
    case Method::kaplan_meier: return labeled_kaplan_meier(sample, grid);
  }
  throw std::invalid_argument("unknown estimator");
}

double ks_gof_statistic(const CurveSet& curves, const Cdf& cdf1, const Cdf& cdf2, std::size_t n) {
  if (curves.components() != 2) throw std::invalid_argument("goodness of fit needs two components");
  double worst = 0.0;
  for (std::size_t j = 0; j < curves.points(); ++j) {
    const double t = curves.grid()[j];
    const double gap = std::abs(curves.value(j, 0) - cdf1(t)) + std::abs(curves.value(j, 1) - cdf2(t));
    worst = std::max(worst, gap);
  }
  return std::sqrt(static_cast<double>(n)) * worst;
}

}  // namespace isomix
