#pragma once

#include <vector>

namespace isomix {

// Weighted least squares under a nondecreasing constraint:
//   minimize sum_i r_i (y_i - a_i)^2  subject to  a_1 <= ... <= a_n.
class IsotonicProblem {
 public:
  // Throws std::invalid_argument on length mismatch, empty input,
  // non-finite responses or non-positive weights.
  IsotonicProblem(std::vector<double> y, std::vector<double> weights);
  // Unit weights.
  explicit IsotonicProblem(std::vector<double> y);

  const std::vector<double>& y() const noexcept { return y_; }
  const std::vector<double>& weights() const noexcept { return r_; }
  std::size_t size() const noexcept { return y_.size(); }

 private:
  std::vector<double> y_;
  std::vector<double> r_;
};

// Pool adjacent violators, O(n). Adjacent blocks with equal means are merged.
std::vector<double> pava(const IsotonicProblem& problem);

// Direct evaluation of a_j = max_{s<=j} min_{t>=j} (weighted mean of y_s..y_t).
// O(n^2); meant as a test oracle for pava.
std::vector<double> maxmin_oracle(const IsotonicProblem& problem);

}  // namespace isomix
