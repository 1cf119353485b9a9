#include "isomix/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace isomix {

namespace {

std::size_t knots_at_or_below(const std::vector<double>& knots, double t) {
  return static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), t) - knots.begin());
}

}  // namespace

double KmCurve::survival_at(double t) const {
  const std::size_t n = knots_at_or_below(event_times, t);
  return n == 0 ? 1.0 : survival[n - 1];
}

double KmCurve::variance_at(double t) const {
  const std::size_t n = knots_at_or_below(event_times, t);
  return n == 0 ? 0.0 : greenwood_var[n - 1];
}

KmCurve kaplan_meier(std::span<const double> times, std::span<const int> status,
                     std::optional<std::span<const double>> case_weights) {
  const std::size_t n = times.size();
  if (n == 0) throw InputError(InputError::Code::Empty, "Kaplan-Meier needs at least one observation");
  if (status.size() != n) throw std::invalid_argument("times and status differ in length");
  if (case_weights && case_weights->size() != n)
    throw std::invalid_argument("case weights differ in length from times");
  auto weight = [&](std::size_t i) { return case_weights ? (*case_weights)[i] : 1.0; };
  for (std::size_t i = 0; i < n; ++i)
    if (!(weight(i) >= 0.0) || !std::isfinite(weight(i)))
      throw std::invalid_argument("case weights must be finite and nonnegative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return times[a] < times[b];
  });

  // at_risk[pos] = total weight of sorted rows pos..n-1, summed from the end so
  // the last tie group sees exactly its own weight.
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t p = n; p-- > 0;) suffix[p] = suffix[p + 1] + weight(order[p]);

  KmCurve km;
  double surv = 1.0;
  double greenwood_sum = 0.0;
  std::size_t pos = 0;
  while (pos < n) {
    const double t = times[order[pos]];
    double deaths = 0.0;
    bool any_event = false;
    std::size_t end = pos;
    while (end < n && times[order[end]] == t) {
      const double w = weight(order[end]);
      if (status[order[end]] == 1) {
        deaths += w;
        any_event = true;
      }
      ++end;
    }
    const double at_risk = suffix[pos];
    if (any_event && deaths > 0.0 && at_risk > 0.0) {
      surv *= 1.0 - deaths / at_risk;
      if (surv < 0.0) surv = 0.0;
      if (at_risk > deaths) {
        greenwood_sum += deaths / (at_risk * (at_risk - deaths));
      } else {
        greenwood_sum = std::numeric_limits<double>::infinity();
      }
      km.event_times.push_back(t);
      km.survival.push_back(surv);
      // S = 0 makes the Greenwood product 0 * inf; report 0.
      km.greenwood_var.push_back(surv > 0.0 ? surv * surv * greenwood_sum : 0.0);
      km.at_risk.push_back(at_risk);
      km.events.push_back(deaths);
    }
    pos = end;
  }
  km.all_censored = km.event_times.empty();
  return km;
}

std::vector<double> km_to_cdf(const KmCurve& curve, const TimeGrid& grid) {
  std::vector<double> out(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) out[j] = 1.0 - curve.survival_at(grid[j]);
  return out;
}

}  // namespace isomix
