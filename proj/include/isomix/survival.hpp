#pragma once

#include "isomix/core.hpp"

#include <optional>
#include <span>
#include <vector>

namespace isomix {

// Product-limit estimate. Vectors are aligned to the distinct event times.
// With case weights, at_risk and events hold weighted totals.
struct KmCurve {
  std::vector<double> event_times;
  std::vector<double> survival;        // S(t) just after each event time
  std::vector<double> greenwood_var;
  std::vector<double> at_risk;
  std::vector<double> events;
  bool all_censored = false;

  // Right-continuous survival at t; 1 before the first event.
  double survival_at(double t) const;
  // Greenwood variance at t; 0 before the first event.
  double variance_at(double t) const;
};

// Events at a tied time are counted before censorings at that time.
// Throws InputError(Empty) on empty input and std::invalid_argument on
// mismatched lengths or negative weights. Zero weights drop a row.
KmCurve kaplan_meier(std::span<const double> times, std::span<const int> status,
                     std::optional<std::span<const double>> case_weights = std::nullopt);

// 1 - S(t) at every grid point.
std::vector<double> km_to_cdf(const KmCurve& curve, const TimeGrid& grid);

}  // namespace isomix
