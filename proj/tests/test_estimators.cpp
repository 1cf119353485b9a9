#include <doctest.h>

#include "isomix/estimators.hpp"
#include "isomix/rng.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace isomix;

namespace {

MixtureSample make_sample(const std::vector<double>& t, const std::vector<int>& d,
                          const std::vector<double>& lambda) {
  std::vector<Observation> rows;
  for (std::size_t i = 0; i < t.size(); ++i) rows.push_back({t[i], d[i], {lambda[i], 1.0 - lambda[i]}});
  return MixtureSample::validate(std::move(rows));
}

struct Data {
  std::vector<double> t;
  std::vector<int> d;
  std::vector<double> lambda;
};

// Two-component exponential mixture on four support points.
Data mixture_data(Rng& rng, std::size_t n, double censor_max) {
  const double supports[] = {1.0, 0.6, 0.2, 0.16};
  Data out;
  for (std::size_t i = 0; i < n; ++i) {
    const double lambda = supports[i % 4];
    const double scale = uniform01(rng) < lambda ? 1.0 : 2.5;
    const double s = -scale * std::log(1.0 - uniform01(rng));
    const double c = censor_max > 0.0 ? censor_max * uniform01(rng) : INFINITY;
    out.t.push_back(std::min(s, c));
    out.d.push_back(s <= c ? 1 : 0);
    out.lambda.push_back(lambda);
  }
  return out;
}

double max_abs_diff(const CurveSet& a, const CurveSet& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

}  // namespace

TEST_CASE("method tags") {
  CHECK(parse_method("em-pava") == Method::em_pava);
  CHECK(parse_method("npmle_type1_weighted") == Method::npmle_type1_weighted);
  CHECK(std::string(to_string(Method::kaplan_meier)) == "kaplan_meier");
  CHECK_THROWS_AS(parse_method("bogus"), std::invalid_argument);
  CHECK(parse_initialization("uniform_linear") == Initialization::uniform_linear);
}

TEST_CASE("config validation") {
  EmConfig c;
  CHECK_NOTHROW(c.validate());
  c.tolerance = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = EmConfig{};
  c.max_iterations = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("E-step by substitution") {
  const auto sample = make_sample({0.5, 2.0, 3.0}, {0, 1, 1}, {0.5, 1.0, 0.0});
  const CurveSet curves = CurveSet::from_columns(TimeGrid({1.0}), {{0.5}, {0.2}});
  const EmState s = estep_weights(curves, sample);
  CHECK(s.w(0, 0) == doctest::Approx(0.65));
  CHECK(s.u(0, 0) == doctest::Approx(0.25 / 0.35));
  CHECK(s.v(0, 0) == doctest::Approx(0.25 / 0.65));
  CHECK(s.r1(0, 0) == doctest::Approx(s.u(0, 0) * 0.35 + s.v(0, 0) * 0.65));
  CHECK(s.r2(0, 0) == doctest::Approx((1 - s.u(0, 0)) * 0.35 + (1 - s.v(0, 0)) * 0.65));
  // lambda = 1 and lambda = 0 rows.
  CHECK(s.u(1, 0) == 1.0);
  CHECK(s.v(1, 0) == 1.0);
  CHECK(s.u(2, 0) == 0.0);
  CHECK(s.v(2, 0) == 0.0);
}

TEST_CASE("uncensored rows impute the indicator whatever the curves") {
  Rng rng = make_stream(41, 0);
  const Data data = mixture_data(rng, 40, 0.0);
  const auto sample = make_sample(data.t, data.d, data.lambda);
  const TimeGrid grid = event_time_grid(sample);
  std::vector<double> a(grid.size()), b(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    a[j] = uniform01(rng);
    b[j] = uniform01(rng);
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const EmState s = estep_weights(CurveSet::from_columns(grid, {a, b}), sample);
  for (std::size_t i = 0; i < sample.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); ++j) {
      CHECK(s.w(i, j) == (data.t[i] > grid[j] ? 1.0 : 0.0));
      CHECK(s.u(i, j) >= 0.0);
      CHECK(s.u(i, j) <= 1.0);
      CHECK(s.v(i, j) >= 0.0);
      CHECK(s.v(i, j) <= 1.0);
    }
}

TEST_CASE("censored rows with no tail mass are clamped") {
  const auto sample = make_sample({2.0, 1.0, 3.0}, {0, 1, 1}, {0.5, 1.0, 0.0});
  const CurveSet curves = CurveSet::from_columns(TimeGrid({1.0, 3.0}), {{1.0, 1.0}, {1.0, 1.0}});
  const EmState s = estep_weights(curves, sample);
  CHECK(s.w(0, 0) == 1.0);
  CHECK(s.w(0, 1) == 0.0);
  EmConfig strict;
  strict.clamp = false;
  CHECK_THROWS_AS(estep_weights(curves, sample, strict), EstimationError);
}

TEST_CASE("labeled uncensored data give groupwise empirical CDFs") {
  const std::vector<double> t{0.4, 1.1, 2.0, 0.7, 1.5, 3.0, 0.9};
  const std::vector<double> lambda{1, 1, 1, 0, 0, 0, 1};
  const auto sample = make_sample(t, std::vector<int>(t.size(), 1), lambda);
  const TimeGrid grid = event_time_grid(sample);
  for (Method m : {Method::em_pava, Method::binomial_pointwise, Method::npmle_type1, Method::npmle_type2,
                   Method::kaplan_meier}) {
    EmConfig config;
    config.tolerance = 1e-12;
    config.max_iterations = 5000;
    const auto report = estimate(m, sample, grid, config);
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> group;
      for (std::size_t i = 0; i < t.size(); ++i)
        if ((lambda[i] == 1.0) == (k == 0)) group.push_back(t[i]);
      for (std::size_t j = 0; j < grid.size(); ++j)
        CHECK(report.curves.value(j, k) == doctest::Approx(oracle::ecdf(group, grid[j])).epsilon(1e-9));
    }
  }
}

TEST_CASE("single population reduces to Kaplan-Meier") {
  Rng rng = make_stream(42, 0);
  std::vector<double> t;
  std::vector<int> d;
  for (int i = 0; i < 60; ++i) {
    const double s = -std::log(1.0 - uniform01(rng));
    const double c = 2.0 * uniform01(rng);
    t.push_back(std::min(s, c));
    d.push_back(s <= c ? 1 : 0);
  }
  const auto sample = make_sample(t, d, std::vector<double>(t.size(), 1.0));
  const TimeGrid grid = event_time_grid(sample);
  for (Method m : {Method::em_pava, Method::binomial_pointwise, Method::npmle_type2, Method::kaplan_meier}) {
    const auto report = estimate(m, sample, grid);
    for (std::size_t j = 0; j < grid.size(); ++j)
      CHECK(report.curves.value(j, 0) == doctest::Approx(oracle::km_cdf(t, d, grid[j])).epsilon(1e-10));
  }
}

TEST_CASE("em_pava matches the constrained grid-search maximizer on a toy set") {
  const std::vector<double> x{0.3, 1.2, 0.8, 2.5};
  const std::vector<double> lambda{1.0, 1.0, 0.2, 0.2};
  const std::vector<double> g{1.0, 2.0};
  const auto sample = make_sample(x, {1, 1, 1, 1}, lambda);
  EmConfig config;
  config.tolerance = 1e-13;
  config.max_iterations = 200000;
  const auto report = em_pava(sample, TimeGrid(g), config);
  const auto best = oracle::constrained_mle(x, lambda, g);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(report.curves.value(j, k) - best[k][j]) <= 2e-4);
}

TEST_CASE("binomial pointwise EM agrees with direct maximization") {
  const std::vector<double> x{0.3, 1.2, 0.8, 2.5, 1.7, 0.6};
  const std::vector<double> lambda{0.9, 0.9, 0.9, 0.2, 0.2, 0.2};
  const auto sample = make_sample(x, std::vector<int>(6, 1), lambda);
  const std::vector<double> g{0.7, 1.5};
  EmConfig config;
  config.tolerance = 1e-13;
  config.max_iterations = 200000;
  const auto report = binomial_pointwise_em(sample, TimeGrid(g), config);
  for (std::size_t j = 0; j < g.size(); ++j) {
    const std::vector<double> t{g[j]};
    const auto p = oracle::grid_search(2, [&](const std::vector<double>& v) {
      return oracle::binomial_loglik(x, lambda, t, {{{v[0]}, {v[1]}}});
    });
    CHECK(std::abs(report.curves.value(j, 0) - p[0]) <= 2e-4);
    CHECK(std::abs(report.curves.value(j, 1) - p[1]) <= 2e-4);
  }
}

TEST_CASE("em_pava curves and objective along the iterations") {
  Rng rng = make_stream(43, 0);
  for (double censor_max : {0.0, 4.0}) {
    const Data data = mixture_data(rng, 200, censor_max);
    const auto sample = make_sample(data.t, data.d, data.lambda);
    const TimeGrid grid = event_time_grid(sample);
    bool valid = true;
    auto observer = [&](int, const CurveSet& c, double) {
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t j = 0; j < c.points(); ++j) {
          const double f = c.value(j, k);
          if (f < 0.0 || f > 1.0 || (j > 0 && f < c.value(j - 1, k))) valid = false;
        }
    };
    const auto report = em_pava(sample, grid, {}, observer);
    CHECK(valid);
    CHECK(report.iterations >= 1);
    if (censor_max == 0.0) {
      for (std::size_t b = 1; b < report.objective_trace.size(); ++b)
        CHECK(report.objective_trace[b] >= report.objective_trace[b - 1] - 1e-10);
    }
  }
}

TEST_CASE("one full-matrix M-step equals one em_pava iteration") {
  Rng rng = make_stream(44, 0);
  const Data data = mixture_data(rng, 120, 3.0);
  const auto sample = make_sample(data.t, data.d, data.lambda);
  const TimeGrid grid = event_time_grid(sample);
  EmConfig one;
  one.max_iterations = 1;
  const auto report = em_pava(sample, grid, one);
  const CurveSet start = initial_curves(sample, grid, one.initialization);
  const CurveSet step = pava_mstep(estep_weights(start, sample, one), grid);
  CHECK(max_abs_diff(report.curves, step) <= 1e-12);
}

TEST_CASE("self-consistency at convergence") {
  Rng rng = make_stream(45, 0);
  const Data data = mixture_data(rng, 150, 0.0);
  const auto sample = make_sample(data.t, data.d, data.lambda);
  const TimeGrid grid = event_time_grid(sample);
  EmConfig config;
  config.max_iterations = 20000;
  const auto report = em_pava(sample, grid, config);
  REQUIRE(report.converged);
  const CurveSet again = pava_mstep(estep_weights(report.curves, sample, config), grid);
  CHECK(max_abs_diff(report.curves, again) <= config.tolerance);
}

TEST_CASE("em_pava ignores row order and whole-sample duplication") {
  Rng rng = make_stream(46, 0);
  const Data data = mixture_data(rng, 80, 3.0);
  const auto sample = make_sample(data.t, data.d, data.lambda);
  const TimeGrid grid = event_time_grid(sample);
  EmConfig config;
  config.tolerance = 1e-11;
  config.max_iterations = 20000;
  const auto base = em_pava(sample, grid, config);

  std::vector<std::size_t> order(data.t.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_in_place(order, rng);
  Data shuffled, doubled = data;
  for (std::size_t i : order) {
    shuffled.t.push_back(data.t[i]);
    shuffled.d.push_back(data.d[i]);
    shuffled.lambda.push_back(data.lambda[i]);
  }
  doubled.t.insert(doubled.t.end(), data.t.begin(), data.t.end());
  doubled.d.insert(doubled.d.end(), data.d.begin(), data.d.end());
  doubled.lambda.insert(doubled.lambda.end(), data.lambda.begin(), data.lambda.end());
  CHECK(max_abs_diff(base.curves, em_pava(make_sample(shuffled.t, shuffled.d, shuffled.lambda), grid, config).curves) <= 1e-9);
  CHECK(max_abs_diff(base.curves, em_pava(make_sample(doubled.t, doubled.d, doubled.lambda), grid, config).curves) <= 1e-9);
}

TEST_CASE("non-identifiable samples are refused") {
  const auto sample = make_sample({1.0, 2.0, 3.0}, {1, 1, 1}, {0.5, 0.5, 0.5});
  const TimeGrid grid = event_time_grid(sample);
  for (Method m : {Method::em_pava, Method::binomial_pointwise, Method::npmle_type2}) {
    try {
      estimate(m, sample, grid);
      FAIL("expected NotIdentifiable");
    } catch (const EstimationError& e) {
      CHECK(e.code() == EstimationError::Code::NotIdentifiable);
    }
  }
  CHECK_THROWS_AS(labeled_kaplan_meier(sample, grid), EstimationError);
}

TEST_CASE("type I NPMLE on three support points equals the normal equations") {
  const std::vector<double> t{0.2, 0.9, 1.4, 0.5, 1.1, 2.2, 0.3, 1.8, 2.6, 0.8, 1.6, 3.1};
  const std::vector<double> lambda{0.9, 0.9, 0.9, 0.9, 0.5, 0.5, 0.5, 0.5, 0.1, 0.1, 0.1, 0.1};
  const auto sample = make_sample(t, std::vector<int>(t.size(), 1), lambda);
  const TimeGrid grid({0.6, 1.2, 2.0, 3.0});
  const auto report = npmle_type1(sample, grid, false);
  CHECK_FALSE(report.curves.constrained());
  const double l[] = {0.9, 0.5, 0.1};
  // U^T U = [[a, b], [b, c]] with rows (l, 1 - l).
  double a = 0, b = 0, c = 0;
  for (double x : l) {
    a += x * x;
    b += x * (1 - x);
    c += (1 - x) * (1 - x);
  }
  const double det = a * c - b * b;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double y1 = 0, y2 = 0;
    for (int s = 0; s < 3; ++s) {
      std::vector<double> group;
      for (std::size_t i = 0; i < t.size(); ++i)
        if (lambda[i] == l[s]) group.push_back(t[i]);
      const double f = oracle::ecdf(group, grid[j]);
      y1 += l[s] * f;
      y2 += (1 - l[s]) * f;
    }
    CHECK(report.curves.value(j, 0) == doctest::Approx((c * y1 - b * y2) / det).epsilon(1e-12));
    CHECK(report.curves.value(j, 1) == doctest::Approx((a * y2 - b * y1) / det).epsilon(1e-12));
  }
}

TEST_CASE("type I NPMLE with an identity design is subgroup Kaplan-Meier") {
  const std::vector<double> t{0.2, 0.9, 1.4, 0.5, 1.1, 2.2, 0.3, 1.8};
  const std::vector<int> d{1, 0, 1, 1, 1, 0, 1, 1};
  const std::vector<double> lambda{1, 1, 1, 1, 0, 0, 0, 0};
  const auto sample = make_sample(t, d, lambda);
  const TimeGrid grid = event_time_grid(sample);
  for (bool weighted : {false, true}) {
    const auto report = npmle_type1(sample, grid, weighted);
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> gt(t.begin() + 4 * k, t.begin() + 4 * k + 4);
      std::vector<int> gd(d.begin() + 4 * k, d.begin() + 4 * k + 4);
      for (std::size_t j = 0; j < grid.size(); ++j)
        CHECK(report.curves.value(j, k) == doctest::Approx(oracle::km_cdf(gt, gd, grid[j])).epsilon(1e-12));
    }
  }
}

TEST_CASE("type I NPMLE needs two distinct support points") {
  const auto sample = make_sample({1.0, 2.0}, {1, 1}, {0.5, 0.5});
  CHECK_THROWS_AS(npmle_type1(sample, event_time_grid(sample), false), EstimationError);
}

TEST_CASE("type II NPMLE on one observation keeps the symmetry") {
  const auto sample = make_sample({1.5}, {1}, {0.5});
  const TimeGrid grid = event_time_grid(sample);
  const auto report = detail::npmle_type2_unchecked(sample, grid, {});
  CHECK(report.curves.value(0, 0) == doctest::Approx(1.0));
  CHECK(report.curves.value(0, 1) == doctest::Approx(1.0));
  CHECK(report.curves.eval(0, 1.4) == 0.0);
}

TEST_CASE("KS goodness-of-fit statistic") {
  const TimeGrid grid({0.5, 1.0, 2.0});
  const auto f1 = [](double t) { return 1.0 - std::exp(-t); };
  const auto f2 = [](double t) { return 1.0 - std::exp(-t / 2.0); };
  std::vector<double> a, b, a_off;
  for (double t : grid.times()) {
    a.push_back(f1(t));
    b.push_back(f2(t));
    a_off.push_back(f1(t) + 0.1);
  }
  CHECK(ks_gof_statistic(CurveSet::unconstrained(grid, 2, {a[0], b[0], a[1], b[1], a[2], b[2]}), f1, f2, 100) ==
        doctest::Approx(0.0));
  CHECK(ks_gof_statistic(CurveSet::unconstrained(grid, 2, {a_off[0], b[0], a_off[1], b[1], a_off[2], b[2]}), f1, f2,
                         100) == doctest::Approx(1.0));

  Rng rng = make_stream(47, 0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> values(6);
    for (double& v : values) v = uniform01(rng);
    const auto curves = CurveSet::unconstrained(grid, 2, values);
    double worst = 0.0;
    for (std::size_t j = 0; j < 3; ++j)
      worst = std::max(worst, std::abs(values[2 * j] - f1(grid[j])) + std::abs(values[2 * j + 1] - f2(grid[j])));
    CHECK(ks_gof_statistic(curves, f1, f2, 37) == doctest::Approx(std::sqrt(37.0) * worst).epsilon(1e-14));
  }
}

TEST_CASE("point solver stays in the box") {
  const auto p = detail::solve_binomial_point({1.0, 0.0}, {3.0, 0.0}, {0.0, 2.0}, 0.5, 0.5);
  CHECK(p.a == doctest::Approx(1.0));
  CHECK(p.b == doctest::Approx(0.0));
}
