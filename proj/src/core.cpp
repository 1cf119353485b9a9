#include "isomix/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace isomix {

const char* to_string(InputError::Code code) {
  switch (code) {
    case InputError::Code::Empty: return "Empty";
    case InputError::Code::NegativeTime: return "NegativeTime";
    case InputError::Code::BadStatus: return "BadStatus";
    case InputError::Code::MixNotSimplex: return "MixNotSimplex";
    case InputError::Code::InconsistentK: return "InconsistentK";
    case InputError::Code::NoEvents: return "NoEvents";
    case InputError::Code::Parse: return "Parse";
  }
  return "Unknown";
}

const char* to_string(EstimationError::Code code) {
  switch (code) {
    case EstimationError::Code::NotIdentifiable: return "NotIdentifiable";
    case EstimationError::Code::NotLabeled: return "NotLabeled";
    case EstimationError::Code::SingularDesign: return "SingularDesign";
    case EstimationError::Code::ZeroDenominator: return "ZeroDenominator";
    case EstimationError::Code::TooManyFailures: return "TooManyFailures";
    case EstimationError::Code::Calibration: return "CalibrationFailure";
  }
  return "Unknown";
}

namespace {

std::string row_message(std::size_t row, const std::string& what) {
  std::ostringstream os;
  os << "row " << row + 1 << ": " << what;
  return os.str();
}

bool same_mix(const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > kSimplexTolerance) return false;
  }
  return true;
}

bool one_hot(const std::vector<double>& mix) {
  int ones = 0;
  for (double q : mix) {
    if (q == 1.0) ++ones;
    else if (q != 0.0) return false;
  }
  return ones == 1;
}

}  // namespace

MixtureSample MixtureSample::validate(std::vector<Observation> rows) {
  if (rows.empty()) throw InputError(InputError::Code::Empty, "sample has no rows");

  const std::size_t k = rows.front().mix.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Observation& obs = rows[i];
    if (!std::isfinite(obs.time) || obs.time < 0.0) {
      throw InputError(InputError::Code::NegativeTime,
                       row_message(i, "time must be finite and nonnegative"), static_cast<long>(i));
    }
    if (obs.status != 0 && obs.status != 1) {
      throw InputError(InputError::Code::BadStatus, row_message(i, "status must be 0 or 1"),
                       static_cast<long>(i));
    }
    if (obs.mix.size() != k || k == 0) {
      throw InputError(InputError::Code::InconsistentK,
                       row_message(i, "mixture vector length differs from first row"),
                       static_cast<long>(i));
    }
    double sum = 0.0;
    for (double q : obs.mix) {
      if (!std::isfinite(q) || q < -kSimplexTolerance || q > 1.0 + kSimplexTolerance) {
        throw InputError(InputError::Code::MixNotSimplex,
                         row_message(i, "mixture entry outside [0,1]"), static_cast<long>(i));
      }
      sum += q;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      std::ostringstream os;
      os << "mixture entries sum to " << sum << ", expected 1";
      throw InputError(InputError::Code::MixNotSimplex, row_message(i, os.str()),
                       static_cast<long>(i));
    }
    for (double& q : obs.mix) q = std::clamp(q / sum, 0.0, 1.0);
  }

  MixtureSample sample;
  sample.observations_ = std::move(rows);
  sample.k_ = k;
  sample.build_support();
  return sample;
}

void MixtureSample::build_support() {
  support_.clear();
  support_index_.assign(observations_.size(), 0);
  fully_labeled_ = true;
  for (std::size_t i = 0; i < observations_.size(); ++i) {
    const auto& mix = observations_[i].mix;
    fully_labeled_ = fully_labeled_ && one_hot(mix);
    auto it = std::find_if(support_.begin(), support_.end(),
                           [&](const SupportPoint& p) { return same_mix(p.mix, mix); });
    if (it == support_.end()) {
      support_.push_back({mix, 1});
      support_index_[i] = support_.size() - 1;
    } else {
      ++it->count;
      support_index_[i] = static_cast<std::size_t>(it - support_.begin());
    }
  }
  identifiable_ = support_identifiable(support_, k_);
}

std::size_t MixtureSample::event_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(observations_.begin(), observations_.end(),
                                                [](const Observation& o) { return o.status == 1; }));
}

MixtureSample MixtureSample::with_time_status_from(const std::vector<std::size_t>& order) const {
  MixtureSample out = *this;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.observations_[i].time = observations_[order[i]].time;
    out.observations_[i].status = observations_[order[i]].status;
  }
  return out;
}

MixtureSample MixtureSample::resampled(const std::vector<std::size_t>& rows) const {
  MixtureSample out;
  out.k_ = k_;
  out.observations_.reserve(rows.size());
  for (std::size_t r : rows) out.observations_.push_back(observations_.at(r));
  out.build_support();
  return out;
}

bool support_identifiable(const std::vector<SupportPoint>& support, std::size_t k) {
  if (support.size() < k) return false;
  Eigen::MatrixXd u(static_cast<Eigen::Index>(support.size()), static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < support.size(); ++s)
    for (std::size_t c = 0; c < k; ++c) u(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) = support[s].mix[c];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(u);
  lu.setThreshold(1e-10);
  return static_cast<std::size_t>(lu.rank()) >= k;
}

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.empty()) throw std::invalid_argument("time grid needs at least one point");
  for (std::size_t j = 0; j < times_.size(); ++j) {
    if (!std::isfinite(times_[j])) throw std::invalid_argument("time grid points must be finite");
    if (j > 0 && !(times_[j] > times_[j - 1]))
      throw std::invalid_argument("time grid must be strictly increasing");
  }
}

std::size_t TimeGrid::count_at_or_below(double t) const {
  return static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
}

std::size_t TimeGrid::count_below(double t) const {
  return static_cast<std::size_t>(std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
}

TimeGrid event_time_grid(const MixtureSample& sample) {
  std::vector<double> times;
  for (const auto& obs : sample.observations())
    if (obs.status == 1) times.push_back(obs.time);
  if (times.empty()) throw InputError(InputError::Code::NoEvents, "sample has no uncensored observations");
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return TimeGrid(std::move(times));
}

TimeGrid even_grid(const EvenGrid& spec) {
  if (spec.count < 1 || !(spec.lo < spec.hi))
    throw std::invalid_argument("even grid needs count >= 1 and lo < hi");
  std::vector<double> times(spec.count);
  const double step = (spec.hi - spec.lo) / static_cast<double>(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) times[i] = spec.lo + step * static_cast<double>(i + 1);
  times.back() = spec.hi;
  return TimeGrid(std::move(times));
}

TimeGrid merge_grids(const TimeGrid& a, const TimeGrid& b) {
  std::vector<double> times;
  std::set_union(a.times().begin(), a.times().end(), b.times().begin(), b.times().end(),
                 std::back_inserter(times));
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return TimeGrid(std::move(times));
}

CurveSet::CurveSet(TimeGrid grid, std::size_t components, std::vector<double> values_row_major,
                   bool constrained)
    : grid_(std::move(grid)), components_(components), values_(std::move(values_row_major)),
      constrained_(constrained) {
  if (components_ == 0 || values_.size() != grid_.size() * components_)
    throw std::invalid_argument("curve values do not match grid size x components");
  if (!constrained_) return;
  for (std::size_t k = 0; k < components_; ++k) {
    for (std::size_t j = 0; j < grid_.size(); ++j) {
      const double v = value(j, k);
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("curve value outside [0,1]");
      if (j > 0 && v < value(j - 1, k)) throw std::invalid_argument("curve is not nondecreasing");
    }
  }
}

CurveSet CurveSet::unconstrained(TimeGrid grid, std::size_t components,
                                 std::vector<double> values_row_major) {
  return CurveSet(std::move(grid), components, std::move(values_row_major), false);
}

CurveSet CurveSet::from_columns(TimeGrid grid, const std::vector<std::vector<double>>& columns,
                                bool constrained) {
  const std::size_t h = grid.size();
  std::vector<double> values(h * columns.size());
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k].size() != h) throw std::invalid_argument("curve column length mismatch");
    for (std::size_t j = 0; j < h; ++j) values[j * columns.size() + k] = columns[k][j];
  }
  return CurveSet(std::move(grid), columns.size(), std::move(values), constrained);
}

std::vector<double> CurveSet::column(std::size_t k) const {
  std::vector<double> out(points());
  for (std::size_t j = 0; j < points(); ++j) out[j] = value(j, k);
  return out;
}

double CurveSet::eval(std::size_t k, double t) const {
  const std::size_t n = grid_.count_at_or_below(t);
  return n == 0 ? 0.0 : value(n - 1, k);
}

double sup_distance(const CurveSet& a, const CurveSet& b) {
  if (a.values().size() != b.values().size()) throw std::invalid_argument("curve shapes differ");
  double d = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

StepFunction::StepFunction(std::vector<double> knots, std::vector<double> levels, double left_value)
    : knots_(std::move(knots)), levels_(std::move(levels)), left_(left_value) {
  if (knots_.size() != levels_.size()) throw std::invalid_argument("step function knots/levels mismatch");
  for (std::size_t i = 1; i < knots_.size(); ++i)
    if (!(knots_[i] > knots_[i - 1])) throw std::invalid_argument("step function knots must increase");
}

double StepFunction::operator()(double t) const {
  const auto n = std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin();
  return n == 0 ? left_ : levels_[static_cast<std::size_t>(n - 1)];
}

}  // namespace isomix
