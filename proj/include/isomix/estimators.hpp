#pragma once

#include "isomix/core.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace isomix {

enum class Method {
  em_pava,
  binomial_pointwise,
  npmle_type1,
  npmle_type1_weighted,
  npmle_type2,
  kaplan_meier,
};

const char* to_string(Method method);
// Accepts the tag spelled with '_' or '-'. Throws std::invalid_argument.
Method parse_method(std::string_view tag);

enum class Initialization { pooled_km, uniform_linear };

const char* to_string(Initialization init);
Initialization parse_initialization(std::string_view tag);

struct EmConfig {
  int max_iterations = 500;
  // Stop when the sup-norm change of the curves drops below this.
  double tolerance = 1e-8;
  Initialization initialization = Initialization::pooled_km;
  // Censored rows whose mixture survival at x_i falls below this carry no
  // tail information and are imputed as w_ij = I(x_i > t_j).
  double clamp_epsilon = 1e-12;
  bool clamp = true;

  // Throws std::invalid_argument.
  void validate() const;
};

// Imputation weights for one E-step, n x h, plus the aggregated M-step weights.
struct EmState {
  Eigen::MatrixXd w;   // E{I(S_i > t_j) | x_i}
  Eigen::MatrixXd u;   // E(L_i | S_i <= t_j)
  Eigen::MatrixXd v;   // E(L_i | S_i > t_j)
  Eigen::MatrixXd r1;  // u (1 - w) + v w
  Eigen::MatrixXd r2;  // (1 - u)(1 - w) + (1 - v) w
  std::vector<double> objective_trace;
  int iterations = 0;
};

struct EstimateReport {
  CurveSet curves;
  Method method = Method::em_pava;
  int iterations = 0;
  bool converged = true;
  double final_objective = 0.0;
  std::vector<double> objective_trace;
  // Grid points where a solver fell back to a boundary optimum or an
  // unweighted solve.
  std::size_t flagged_points = 0;
  std::vector<std::string> warnings;
};

// Called once per iterate, starting with the initial curves (iteration 0).
using IterationObserver =
    std::function<void(int iteration, const CurveSet& curves, double objective)>;

// E-step for K = 2 on the grid of `curves`. Throws
// EstimationError(ZeroDenominator) only when clamping is disabled.
EmState estep_weights(const CurveSet& curves, const MixtureSample& sample,
                      const EmConfig& config = {});

// Isotonic M-step computed directly from the full weight matrices.
CurveSet pava_mstep(const EmState& state, const TimeGrid& grid);

// Imputed binomial log-likelihood
//   sum_ij (1 - w_ij) log p_ij(t_j) + w_ij log(1 - p_ij(t_j)),
// p_ij = lambda_i F_1(t_j) + (1 - lambda_i) F_2(t_j), with w imputed from
// the same curves. 0 log 0 is taken as 0.
double binomial_objective(const CurveSet& curves, const MixtureSample& sample,
                          const EmConfig& config = {});

// Starting curves for the EM iterations.
CurveSet initial_curves(const MixtureSample& sample, const TimeGrid& grid, Initialization init);

// EM with an isotonic M-step. Curves stay monotone and inside [0,1].
EstimateReport em_pava(const MixtureSample& sample, const TimeGrid& grid,
                       const EmConfig& config = {}, const IterationObserver& observer = {});

// EM at each grid point with the two-equation M-step solved by damped Newton;
// no monotonicity constraint.
EstimateReport binomial_pointwise_em(const MixtureSample& sample, const TimeGrid& grid,
                                     const EmConfig& config = {});

// Subgroup Kaplan-Meier per support point followed by least squares on the
// support matrix; optionally weighted by inverse Greenwood variances.
EstimateReport npmle_type1(const MixtureSample& sample, const TimeGrid& grid, bool weighted);

// EM over posterior memberships with weighted product-limit updates.
EstimateReport npmle_type2(const MixtureSample& sample, const TimeGrid& grid,
                           const EmConfig& config = {});

// 1 - Kaplan-Meier within each labeled group. Requires one-hot mix vectors.
EstimateReport labeled_kaplan_meier(const MixtureSample& sample, const TimeGrid& grid);

EstimateReport estimate(Method method, const MixtureSample& sample, const TimeGrid& grid,
                        const EmConfig& config = {});

using Cdf = std::function<double(double)>;

// sqrt(n) * max_j sum_k |F~_k(t_j) - F_k(t_j)| for two components.
double ks_gof_statistic(const CurveSet& curves, const Cdf& cdf1, const Cdf& cdf2, std::size_t n);

namespace detail {

// npmle_type2 without the identifiability gate.
EstimateReport npmle_type2_unchecked(const MixtureSample& sample, const TimeGrid& grid,
                                     const EmConfig& config);

// Maximizer of sum_s A_s log p_s + B_s log(1 - p_s), p_s = l_s a + (1 - l_s) b
// over [0,1]^2. `interior` is false when the box constrains the optimum.
struct PointSolution {
  double a = 0.0;
  double b = 0.0;
  bool interior = true;
};
PointSolution solve_binomial_point(const std::vector<double>& lambda, const std::vector<double>& a_counts,
                                   const std::vector<double>& b_counts, double start_a, double start_b);

}  // namespace detail

}  // namespace isomix
