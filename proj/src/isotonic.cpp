#include "isomix/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace isomix {

IsotonicProblem::IsotonicProblem(std::vector<double> y, std::vector<double> weights)
    : y_(std::move(y)), r_(std::move(weights)) {
  if (y_.empty()) throw std::invalid_argument("isotonic problem needs at least one point");
  if (y_.size() != r_.size()) throw std::invalid_argument("responses and weights differ in length");
  for (std::size_t i = 0; i < y_.size(); ++i) {
    if (!std::isfinite(y_[i])) throw std::invalid_argument("isotonic response is not finite");
    if (!(r_[i] > 0.0) || !std::isfinite(r_[i]))
      throw std::invalid_argument("isotonic weights must be positive and finite");
  }
}

IsotonicProblem::IsotonicProblem(std::vector<double> y)
    : IsotonicProblem(y, std::vector<double>(y.size(), 1.0)) {}

namespace {

struct Block {
  double weighted_sum;
  double weight;
  std::size_t length;

  double mean() const { return weighted_sum / weight; }
};

}  // namespace

std::vector<double> pava(const IsotonicProblem& problem) {
  const auto& y = problem.y();
  const auto& r = problem.weights();
  std::vector<Block> blocks;
  blocks.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    blocks.push_back({r[i] * y[i], r[i], 1});
    while (blocks.size() > 1) {
      Block& last = blocks.back();
      Block& prev = blocks[blocks.size() - 2];
      if (prev.mean() < last.mean()) break;
      prev.weighted_sum += last.weighted_sum;
      prev.weight += last.weight;
      prev.length += last.length;
      blocks.pop_back();
    }
  }

  std::vector<double> fitted;
  fitted.reserve(y.size());
  const double lo = *std::min_element(y.begin(), y.end());
  const double hi = *std::max_element(y.begin(), y.end());
  for (const Block& b : blocks) {
    // A pooled mean can drift one ulp past the data range.
    const double m = std::clamp(b.mean(), lo, hi);
    fitted.insert(fitted.end(), b.length, m);
  }
  return fitted;
}

std::vector<double> maxmin_oracle(const IsotonicProblem& problem) {
  const auto& y = problem.y();
  const auto& r = problem.weights();
  const std::size_t n = y.size();
  std::vector<double> best(n, -std::numeric_limits<double>::infinity());
  std::vector<double> means(n);
  for (std::size_t s = 0; s < n; ++s) {
    double sum = 0.0;
    double weight = 0.0;
    for (std::size_t t = s; t < n; ++t) {
      sum += r[t] * y[t];
      weight += r[t];
      means[t] = sum / weight;
    }
    // suffix minimum over t >= j of mean(s, t), then max over s <= j
    double running_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = n; j-- > s;) {
      running_min = std::min(running_min, means[j]);
      best[j] = std::max(best[j], running_min);
    }
  }
  return best;
}

}  // namespace isomix
