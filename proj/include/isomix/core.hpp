#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace isomix {

// Raised for malformed input rows. `row` is the 0-based input row, or -1 when
// the error is not tied to a row.
class InputError : public std::runtime_error {
 public:
  enum class Code { Empty, NegativeTime, BadStatus, MixNotSimplex, InconsistentK, NoEvents, Parse };

  InputError(Code code, std::string message, long row = -1)
      : std::runtime_error(std::move(message)), code_(code), row_(row) {}

  Code code() const noexcept { return code_; }
  long row() const noexcept { return row_; }

 private:
  Code code_;
  long row_;
};

// Raised when an estimator cannot run on otherwise valid input.
class EstimationError : public std::runtime_error {
 public:
  enum class Code { NotIdentifiable, NotLabeled, SingularDesign, ZeroDenominator, TooManyFailures, Calibration };

  EstimationError(Code code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

const char* to_string(InputError::Code code);
const char* to_string(EstimationError::Code code);

inline constexpr double kSimplexTolerance = 1e-9;

struct Observation {
  double time = 0.0;
  int status = 1;            // 1 = event observed, 0 = right-censored
  std::vector<double> mix;   // membership probabilities, sums to 1
};

struct SupportPoint {
  std::vector<double> mix;
  std::size_t count = 0;
};

// A validated, immutable collection of observations.
class MixtureSample {
 public:
  // Validates and renormalizes rows; throws InputError.
  static MixtureSample validate(std::vector<Observation> rows);

  const std::vector<Observation>& observations() const noexcept { return observations_; }
  const Observation& operator[](std::size_t i) const { return observations_[i]; }
  std::size_t size() const noexcept { return observations_.size(); }
  std::size_t k() const noexcept { return k_; }
  const std::vector<SupportPoint>& support() const noexcept { return support_; }
  // Index into support() for observation i.
  std::size_t support_index(std::size_t i) const { return support_index_[i]; }
  bool identifiable() const noexcept { return identifiable_; }
  // True when every mix vector is one-hot.
  bool fully_labeled() const noexcept { return fully_labeled_; }
  std::size_t event_count() const noexcept;

  // Same mix vectors in the same order, (time, status) pairs taken from
  // `order` (order[i] is the source row for slot i). Used by resampling.
  MixtureSample with_time_status_from(const std::vector<std::size_t>& order) const;
  // Whole rows drawn by index, with replacement allowed.
  MixtureSample resampled(const std::vector<std::size_t>& rows) const;

 private:
  void build_support();

  std::vector<Observation> observations_;
  std::size_t k_ = 0;
  std::vector<SupportPoint> support_;
  std::vector<std::size_t> support_index_;
  bool identifiable_ = false;
  bool fully_labeled_ = false;
};

// Rank of the support matrix reaches k.
bool support_identifiable(const std::vector<SupportPoint>& support, std::size_t k);

class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> times);

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t size() const noexcept { return times_.size(); }
  double operator[](std::size_t j) const { return times_[j]; }
  // Number of grid points <= t.
  std::size_t count_at_or_below(double t) const;
  // Number of grid points < t.
  std::size_t count_below(double t) const;

 private:
  std::vector<double> times_;
};

struct EvenGrid {
  std::size_t count = 50;
  double lo = 0.0;
  double hi = 1.0;
};

TimeGrid event_time_grid(const MixtureSample& sample);
// count points on (lo, hi], hi included.
TimeGrid even_grid(const EvenGrid& spec);
TimeGrid merge_grids(const TimeGrid& a, const TimeGrid& b);

// Per-component CDF values on a grid. Constrained curves are checked to be
// nondecreasing and inside [0,1]; unconstrained curves (NPMLE output) are not.
class CurveSet {
 public:
  CurveSet() = default;
  CurveSet(TimeGrid grid, std::size_t components, std::vector<double> values_row_major,
           bool constrained = true);
  static CurveSet unconstrained(TimeGrid grid, std::size_t components,
                                std::vector<double> values_row_major);
  static CurveSet from_columns(TimeGrid grid, const std::vector<std::vector<double>>& columns,
                               bool constrained = true);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t components() const noexcept { return components_; }
  std::size_t points() const noexcept { return grid_.size(); }
  double value(std::size_t j, std::size_t k) const { return values_[j * components_ + k]; }
  std::vector<double> column(std::size_t k) const;
  const std::vector<double>& values() const noexcept { return values_; }
  bool constrained() const noexcept { return constrained_; }
  // Right-continuous step evaluation: 0 before the first grid point.
  double eval(std::size_t k, double t) const;

 private:
  TimeGrid grid_;
  std::size_t components_ = 0;
  std::vector<double> values_;
  bool constrained_ = true;
};

inline double eval_curve(const CurveSet& curve, std::size_t component, double t) {
  return curve.eval(component, t);
}

double sup_distance(const CurveSet& a, const CurveSet& b);

class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> knots, std::vector<double> levels, double left_value = 0.0);

  double operator()(double t) const;
  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& levels() const noexcept { return levels_; }
  double left_value() const noexcept { return left_; }

 private:
  std::vector<double> knots_;
  std::vector<double> levels_;
  double left_ = 0.0;
};

}  // namespace isomix
