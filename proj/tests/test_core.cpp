#include <doctest.h>

#include "isomix/core.hpp"
#include "isomix/csv.hpp"
#include "isomix/rng.hpp"

#include <sstream>

using namespace isomix;

namespace {

template <class F>
InputError::Code input_code(F&& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.code();
  }
  FAIL("no InputError thrown");
  return InputError::Code::Empty;
}

}  // namespace

TEST_CASE("validate builds the support and the identifiability flag") {
  auto s = MixtureSample::validate({{1.0, 1, {1.0, 0.0}}, {2.0, 0, {0.0, 1.0}}});
  CHECK(s.size() == 2);
  CHECK(s.k() == 2);
  CHECK(s.support().size() == 2);
  CHECK(s.identifiable());
  CHECK(s.fully_labeled());

  auto single = MixtureSample::validate({{1.0, 1, {0.5, 0.5}}, {2.0, 1, {0.5, 0.5}}});
  CHECK(single.support().size() == 1);
  CHECK(single.support()[0].count == 2);
  CHECK_FALSE(single.identifiable());
  CHECK_FALSE(single.fully_labeled());
}

TEST_CASE("validate rejects bad rows with the row number") {
  CHECK(input_code([] { MixtureSample::validate({{1.0, 1, {0.6, 0.5}}}); }) == InputError::Code::MixNotSimplex);
  CHECK(input_code([] { MixtureSample::validate({{1.0, 1, {1.2, -0.2}}}); }) == InputError::Code::MixNotSimplex);
  CHECK(input_code([] { MixtureSample::validate({{-1.0, 1, {1.0, 0.0}}}); }) == InputError::Code::NegativeTime);
  CHECK(input_code([] { MixtureSample::validate({{1.0, 2, {1.0, 0.0}}}); }) == InputError::Code::BadStatus);
  CHECK(input_code([] { MixtureSample::validate({}); }) == InputError::Code::Empty);
  CHECK(input_code([] {
          MixtureSample::validate({{1.0, 1, {1.0, 0.0}}, {1.0, 1, {0.2, 0.3, 0.5}}});
        }) == InputError::Code::InconsistentK);
  try {
    MixtureSample::validate({{1.0, 1, {1.0, 0.0}}, {1.0, 1, {0.7, 0.7}}});
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(e.row() == 1);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("near-simplex rows are renormalized") {
  auto s = MixtureSample::validate({{1.0, 1, {0.3 + 4e-10, 0.7}}, {1.0, 1, {0.3, 0.7}}});
  CHECK(s[0].mix[0] + s[0].mix[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.support().size() == 1);
}

TEST_CASE("identifiability needs k linearly independent support vectors") {
  auto two = MixtureSample::validate({{1.0, 1, {0.6, 0.4}}, {1.0, 1, {0.2, 0.8}}});
  CHECK(two.identifiable());
  auto three = MixtureSample::validate(
      {{1.0, 1, {0.5, 0.5, 0.0}}, {1.0, 1, {0.0, 0.5, 0.5}}, {1.0, 1, {0.25, 0.5, 0.25}}});
  CHECK_FALSE(three.identifiable());  // third row is the mean of the first two
}

TEST_CASE("event_times grid drops censored rows and duplicates") {
  auto s = MixtureSample::validate(
      {{3.0, 1, {1.0, 0.0}}, {1.0, 1, {1.0, 0.0}}, {3.0, 1, {0.0, 1.0}}, {2.0, 0, {0.0, 1.0}}});
  CHECK(event_time_grid(s).times() == std::vector<double>{1.0, 3.0});
  auto none = MixtureSample::validate({{3.0, 0, {1.0, 0.0}}});
  CHECK(input_code([&] { event_time_grid(none); }) == InputError::Code::NoEvents);
}

TEST_CASE("even grid excludes lo and includes hi") {
  auto g = even_grid({50, 0.0, 10.0});
  REQUIRE(g.size() == 50);
  CHECK(g[0] == doctest::Approx(0.2));
  CHECK(g[24] == doctest::Approx(5.0));
  CHECK(g[49] == 10.0);
  auto g100 = even_grid({50, 0.0, 100.0});
  for (std::size_t j = 0; j < 50; ++j) CHECK(g100[j] == doctest::Approx(2.0 * static_cast<double>(j + 1)));
  CHECK_THROWS_AS(even_grid({0, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(even_grid({5, 1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("time grid rejects unordered or nonfinite times") {
  CHECK_THROWS_AS(TimeGrid({1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid({2.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid({1.0, INFINITY}), std::invalid_argument);
  TimeGrid g({1.0, 2.0, 4.0});
  CHECK(g.count_at_or_below(2.0) == 2);
  CHECK(g.count_below(2.0) == 1);
  CHECK(g.count_at_or_below(0.5) == 0);
  CHECK(merge_grids(g, TimeGrid({2.0, 3.0})).times() == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("curve evaluation is a right-continuous step") {
  auto c = CurveSet::from_columns(TimeGrid({1.0, 2.0}), {{0.3, 0.7}, {0.1, 0.2}});
  CHECK(eval_curve(c, 0, 1.5) == 0.3);
  CHECK(eval_curve(c, 0, 0.5) == 0.0);
  CHECK(eval_curve(c, 0, 2.0) == 0.7);
  CHECK(eval_curve(c, 0, 1.0) == 0.3);
  CHECK(eval_curve(c, 1, 99.0) == 0.2);
}

TEST_CASE("constrained curves must be monotone and inside [0,1]") {
  TimeGrid g({1.0, 2.0});
  CHECK_THROWS_AS(CurveSet::from_columns(g, {{0.5, 0.4}}), std::invalid_argument);
  CHECK_THROWS_AS(CurveSet::from_columns(g, {{0.5, 1.2}}), std::invalid_argument);
  auto free = CurveSet::from_columns(g, {{0.5, -0.1}}, false);
  CHECK_FALSE(free.constrained());
  CHECK(free.value(1, 0) == -0.1);
}

TEST_CASE("step function honours its left value") {
  StepFunction f({1.0, 3.0}, {0.5, 0.9}, 0.1);
  CHECK(f(0.0) == 0.1);
  CHECK(f(1.0) == 0.5);
  CHECK(f(2.9) == 0.5);
  CHECK(f(3.0) == 0.9);
}

TEST_CASE("property: curve evaluation is nondecreasing in t") {
  Rng rng = make_stream(11, 0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> t, a, b;
    double x = 0.0, va = 0.0, vb = 0.0;
    for (int j = 0; j < 20; ++j) {
      x += 0.1 + uniform01(rng);
      va = std::min(1.0, va + 0.1 * uniform01(rng));
      vb = std::min(1.0, vb + 0.1 * uniform01(rng));
      t.push_back(x);
      a.push_back(va);
      b.push_back(vb);
    }
    auto c = CurveSet::from_columns(TimeGrid(t), {a, b});
    double prev0 = -1.0, prev1 = -1.0;
    for (double s = 0.0; s < x + 1.0; s += 0.05) {
      CHECK(c.eval(0, s) >= prev0);
      CHECK(c.eval(1, s) >= prev1);
      prev0 = c.eval(0, s);
      prev1 = c.eval(1, s);
    }
  }
}

TEST_CASE("csv reader accepts a lone q1 column") {
  std::istringstream in("# comment\ntime,status,q1\n1.5,1,0.25\n\n2,0,1\n");
  auto s = read_sample_csv(in);
  REQUIRE(s.size() == 2);
  CHECK(s[0].mix == std::vector<double>{0.25, 0.75});
  CHECK(s[1].status == 0);
}

TEST_CASE("csv reader names the failing row and column") {
  std::istringstream in("time,status,q1,q2\n1,1,0.5,0.5\n2,1,0.5,abc\n");
  try {
    read_sample_csv(in);
    FAIL("expected a parse error");
  } catch (const InputError& e) {
    CHECK(e.code() == InputError::Code::Parse);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("q2") != std::string::npos);
  }
  std::istringstream bad_header("t,status,q1\n");
  CHECK_THROWS_AS(read_sample_csv(bad_header), InputError);
  std::istringstream short_row("time,status,q1,q2\n1,1,0.5\n");
  CHECK_THROWS_AS(read_sample_csv(short_row), InputError);
  std::istringstream bad_status("time,status,q1\n1,2,0.5\n");
  CHECK(input_code([&] { read_sample_csv(bad_status); }) == InputError::Code::BadStatus);
}

TEST_CASE("property: validate, write and read again is lossless and idempotent") {
  Rng rng = make_stream(12, 0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Observation> rows;
    for (int i = 0; i < 30; ++i) {
      const double l = uniform01(rng);
      rows.push_back({10.0 * uniform01(rng), uniform01(rng) < 0.7 ? 1 : 0, {l, 1.0 - l}});
    }
    auto first = MixtureSample::validate(rows);
    std::ostringstream out;
    write_sample_csv(out, first);
    std::istringstream in(out.str());
    auto second = read_sample_csv(in);
    REQUIRE(second.size() == first.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
      CHECK(second[i].time == first[i].time);
      CHECK(second[i].status == first[i].status);
      CHECK(std::abs(second[i].mix[0] - first[i].mix[0]) <= 1e-12);
      CHECK(std::abs(second[i].mix[1] - first[i].mix[1]) <= 1e-12);
    }
    std::ostringstream again;
    write_sample_csv(again, second);
    CHECK(again.str() == out.str());
  }
}

TEST_CASE("resampling helpers keep mixture vectors in place") {
  auto s = MixtureSample::validate({{1.0, 1, {1.0, 0.0}}, {2.0, 0, {0.5, 0.5}}, {3.0, 1, {0.0, 1.0}}});
  auto p = s.with_time_status_from({2, 0, 1});
  CHECK(p[0].time == 3.0);
  CHECK(p[0].mix == s[0].mix);
  CHECK(p[2].status == 0);
  CHECK(p[2].mix == s[2].mix);
  auto r = s.resampled({1, 1, 2});
  CHECK(r[0].time == 2.0);
  CHECK(r[1].mix == s[1].mix);
}
