#include "cli.hpp"

#include "isomix/core.hpp"
#include "isomix/csv.hpp"
#include "isomix/estimators.hpp"
#include "isomix/inference.hpp"
#include "isomix/parallel.hpp"
#include "isomix/rng.hpp"
#include "isomix/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace isomix::cli {

using json = nlohmann::ordered_json;

namespace {

// Wrong flags, unreadable config files and similar problems.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

double parse_double(const std::string& text, const std::string& what) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ConfigError(what + ": '" + text + "' is not a finite number");
  return value;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(what + ": '" + text + "' is not a nonnegative integer");
  return value;
}

std::string fmt(double v) { return format_double(v); }

struct GridSpec {
  bool events = true;
  EvenGrid even;
  std::string text = "events";
};

GridSpec parse_grid(const std::string& text) {
  GridSpec g;
  g.text = text;
  if (text == "events") return g;
  const auto parts = split(text, ':');
  if (parts.size() != 4 || parts[0] != "even")
    throw ConfigError("--grid must be 'events' or 'even:N:LO:HI', got '" + text + "'");
  g.events = false;
  g.even.count = parse_u64(parts[1], "--grid N");
  g.even.lo = parse_double(parts[2], "--grid LO");
  g.even.hi = parse_double(parts[3], "--grid HI");
  if (g.even.count < 1 || !(g.even.hi > g.even.lo))
    throw ConfigError("--grid needs N >= 1 and HI > LO");
  return g;
}

TimeGrid build_grid(const GridSpec& g, const MixtureSample& sample) {
  return g.events ? event_time_grid(sample) : even_grid(g.even);
}

std::vector<double> parse_times(const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& p : split(text, ',')) out.push_back(parse_double(p, "--restrict"));
  return out;
}

std::string join_times(const std::vector<double>& ts) {
  std::string s;
  for (std::size_t i = 0; i < ts.size(); ++i) s += (i ? "," : "") + fmt(ts[i]);
  return s;
}

// Flags shared by the data-driven subcommands.
struct Options {
  std::string input;
  std::string output;
  std::string format = "csv";
  std::string method = "em_pava";
  std::string grid = "events";
  int max_iter = 500;
  double tol = 1e-8;
  std::string init = "pooled-km";
  std::size_t perms = 1000;
  std::size_t boot = 200;
  double level = 0.95;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 0;
  std::string restrict_to;
  std::string cdf1;
  std::string cdf2;
  std::string config;
  std::string emit_sample;
};

std::uint64_t resolve_seed(const Options& o) {
  if (o.seed) return *o.seed;
  if (const char* env = std::getenv("ISOMIX_SEED"); env && *env) return parse_u64(env, "ISOMIX_SEED");
  return fresh_seed();
}

EmConfig em_config(const Options& o) {
  EmConfig c;
  c.max_iterations = o.max_iter;
  c.tolerance = o.tol;
  try {
    c.initialization = parse_initialization(o.init);
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Method method_of(const std::string& tag) {
  try {
    return parse_method(tag);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// Ordered (key, value) pairs describing a run; written into every artifact.
using Settings = std::vector<std::pair<std::string, std::string>>;

void write_csv_header(std::ostream& os, const std::string& command, const Settings& settings) {
  os << "# isomix " << command << '\n';
  for (const auto& [k, v] : settings) os << "# " << k << ": " << v << '\n';
}

json settings_json(const std::string& command, const Settings& settings) {
  json j;
  j["command"] = command;
  for (const auto& [k, v] : settings) j[k] = v;
  return j;
}

// Writes to --output, or to `out` when no path was given.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : path_(path), fallback_(fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw ConfigError("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return path_.empty() ? fallback_ : file_; }
  void close() {
    if (!path_.empty()) {
      file_.close();
      if (!file_) throw ConfigError("failed writing '" + path_ + "'");
    }
  }

 private:
  std::string path_;
  std::ostream& fallback_;
  std::ofstream file_;
};

void write_json(const std::string& path, std::ostream& fallback, const json& j) {
  Sink sink(path, fallback);
  sink.stream() << j.dump(2) << '\n';
  sink.close();
}

Settings estimation_settings(const Options& o, const EmConfig& c, std::uint64_t seed) {
  return {{"input", o.input},
          {"method", o.method},
          {"grid", o.grid},
          {"max_iter", std::to_string(c.max_iterations)},
          {"tol", fmt(c.tolerance)},
          {"init", to_string(c.initialization)},
          {"seed", std::to_string(seed)}};
}

json report_json(const EstimateReport& r) {
  json j;
  j["method"] = to_string(r.method);
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["final_objective"] = r.final_objective;
  j["flagged_points"] = r.flagged_points;
  j["warnings"] = r.warnings;
  return j;
}

int cmd_estimate(const Options& o, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = resolve_seed(o);
  const EmConfig config = em_config(o);
  const Method method = method_of(o.method);
  const GridSpec gs = parse_grid(o.grid);
  const MixtureSample sample = read_sample_csv_file(o.input);
  const TimeGrid grid = build_grid(gs, sample);
  const EstimateReport report = estimate(method, sample, grid, config);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';

  const Settings settings = estimation_settings(o, config, seed);
  json manifest = settings_json("estimate", settings);
  manifest["n"] = sample.size();
  manifest["report"] = report_json(report);

  if (o.format == "json") {
    json curves = json::array();
    for (std::size_t j = 0; j < grid.size(); ++j)
      for (std::size_t k = 0; k < 2; ++k)
        curves.push_back({{"t", grid[j]}, {"component", k + 1}, {"estimate", report.curves.value(j, k)}});
    manifest["curves"] = std::move(curves);
    write_json(o.output, out, manifest);
    return kOk;
  }
  Sink sink(o.output, out);
  auto& os = sink.stream();
  write_csv_header(os, "estimate", settings);
  os << "t,component,estimate\n";
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < grid.size(); ++j)
      os << fmt(grid[j]) << ',' << k + 1 << ',' << fmt(report.curves.value(j, k)) << '\n';
  sink.close();
  if (!o.output.empty()) {
    std::ofstream ignored;
    write_json(o.output + ".manifest.json", ignored, manifest);
  }
  return kOk;
}

int cmd_test(const Options& o, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(o);
  const EmConfig config = em_config(o);
  const Method method = method_of(o.method);
  const GridSpec gs = parse_grid(o.grid);
  const std::vector<double> restrict_to = parse_times(o.restrict_to);
  if (o.perms < 1) throw ConfigError("--perms must be >= 1");
  const MixtureSample sample = read_sample_csv_file(o.input);
  const TimeGrid grid = build_grid(gs, sample);
  const auto result =
      permutation_test(sample, grid, method, o.perms, restrict_to, seed, config, resolve_jobs(o.jobs));

  Settings settings = estimation_settings(o, config, seed);
  settings.emplace_back("perms", std::to_string(o.perms));
  settings.emplace_back("restrict", join_times(restrict_to));
  if (o.format == "json") {
    json j;
    j["s0"] = result.s0;
    j["p_value"] = result.p_value;
    j["K"] = result.replicates;
    j["seed"] = result.seed;
    j["config"] = settings_json("test", settings);
    write_json(o.output, out, j);
    return kOk;
  }
  Sink sink(o.output, out);
  write_csv_header(sink.stream(), "test", settings);
  sink.stream() << "s0,p_value,K,seed\n"
                << fmt(result.s0) << ',' << fmt(result.p_value) << ',' << result.replicates << ','
                << result.seed << '\n';
  sink.close();
  return kOk;
}

int cmd_bootstrap(const Options& o, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = resolve_seed(o);
  const EmConfig config = em_config(o);
  const Method method = method_of(o.method);
  const GridSpec gs = parse_grid(o.grid);
  if (o.boot < 2) throw ConfigError("--boot must be >= 2");
  if (!(o.level > 0.0 && o.level < 1.0)) throw ConfigError("--level must lie in (0,1)");
  const MixtureSample sample = read_sample_csv_file(o.input);
  const TimeGrid grid = build_grid(gs, sample);
  const auto bands = bootstrap_bands(sample, grid, method, o.boot, o.level, seed, config, resolve_jobs(o.jobs));
  if (bands.failures > 0) err << "warning: " << bands.failures << " bootstrap replicates failed and were dropped\n";

  Settings settings = estimation_settings(o, config, seed);
  settings.emplace_back("boot", std::to_string(o.boot));
  settings.emplace_back("level", fmt(o.level));
  settings.emplace_back("failures", std::to_string(bands.failures));
  const std::size_t K = bands.estimate.components();
  if (o.format == "json") {
    json j = settings_json("bootstrap", settings);
    json rows = json::array();
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t jj = 0; jj < grid.size(); ++jj) {
        const std::size_t at = jj * K + k;
        rows.push_back({{"t", grid[jj]},
                        {"component", k + 1},
                        {"estimate", bands.estimate.value(jj, k)},
                        {"sd", bands.sd[at]},
                        {"lo", bands.lower[at]},
                        {"hi", bands.upper[at]}});
      }
    j["bands"] = std::move(rows);
    write_json(o.output, out, j);
    return kOk;
  }
  Sink sink(o.output, out);
  auto& os = sink.stream();
  write_csv_header(os, "bootstrap", settings);
  os << "t,component,estimate,sd,lo,hi\n";
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t jj = 0; jj < grid.size(); ++jj) {
      const std::size_t at = jj * K + k;
      os << fmt(grid[jj]) << ',' << k + 1 << ',' << fmt(bands.estimate.value(jj, k)) << ',' << fmt(bands.sd[at])
         << ',' << fmt(bands.lower[at]) << ',' << fmt(bands.upper[at]) << '\n';
    }
  sink.close();
  return kOk;
}

// Family specs: exp:SCALE[:UPPER], uniform:LO:HI, experiment:ID:K.
Cdf parse_cdf(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.empty()) throw ConfigError("empty CDF spec");
  if (parts[0] == "exp" && (parts.size() == 2 || parts.size() == 3)) {
    const double scale = parse_double(parts[1], "exp scale");
    if (!(scale > 0.0)) throw ConfigError("exp scale must be positive");
    if (parts.size() == 2) return [scale](double t) { return t <= 0.0 ? 0.0 : -std::expm1(-t / scale); };
    const double upper = parse_double(parts[2], "exp upper");
    if (!(upper > 0.0)) throw ConfigError("exp upper bound must be positive");
    return [scale, upper](double t) {
      if (t <= 0.0) return 0.0;
      if (t >= upper) return 1.0;
      return std::expm1(-t / scale) / std::expm1(-upper / scale);
    };
  }
  if (parts[0] == "uniform" && parts.size() == 3) {
    const double lo = parse_double(parts[1], "uniform lo");
    const double hi = parse_double(parts[2], "uniform hi");
    if (!(hi > lo)) throw ConfigError("uniform needs hi > lo");
    return [lo, hi](double t) { return std::clamp((t - lo) / (hi - lo), 0.0, 1.0); };
  }
  if (parts[0] == "experiment" && parts.size() == 3) {
    const auto id = parse_u64(parts[1], "experiment id");
    const auto k = parse_u64(parts[2], "experiment component");
    if (id < 1 || id > 3 || k < 1 || k > 2) throw ConfigError("experiment:ID:K needs ID in 1..3 and K in 1..2");
    return experiment(static_cast<int>(id)).cdf[k - 1];
  }
  throw ConfigError("unknown CDF spec '" + text + "' (use exp:SCALE[:UPPER], uniform:LO:HI or experiment:ID:K)");
}

int cmd_gof(const Options& o, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(o);
  const EmConfig config = em_config(o);
  const Method method = method_of(o.method);
  const GridSpec gs = parse_grid(o.grid);
  if (o.cdf1.empty() || o.cdf2.empty()) throw ConfigError("gof needs --cdf1 and --cdf2");
  const Cdf f1 = parse_cdf(o.cdf1);
  const Cdf f2 = parse_cdf(o.cdf2);
  const MixtureSample sample = read_sample_csv_file(o.input);
  const TimeGrid grid = build_grid(gs, sample);
  const EstimateReport report = estimate(method, sample, grid, config);
  const double delta = ks_gof_statistic(report.curves, f1, f2, sample.size());

  Settings settings = estimation_settings(o, config, seed);
  settings.emplace_back("cdf1", o.cdf1);
  settings.emplace_back("cdf2", o.cdf2);
  if (o.format == "csv") {
    Sink sink(o.output, out);
    write_csv_header(sink.stream(), "gof", settings);
    sink.stream() << "delta,n\n" << fmt(delta) << ',' << sample.size() << '\n';
    sink.close();
    return kOk;
  }
  json j;
  j["delta"] = delta;
  j["n"] = sample.size();
  j["config"] = settings_json("gof", settings);
  write_json(o.output, out, j);
  return kOk;
}

// Resolved settings for `simulate`.
struct SimulationSetup {
  int experiment = 1;
  std::size_t n = 500;
  double censoring = 0.0;
  std::size_t replicates = 500;
  std::size_t permutations = 0;
  std::size_t power_replicates = 0;
  std::size_t bootstrap = 100;
  double level = 0.95;
  std::size_t grid_points = 50;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> estimators{"em_pava", "npmle_type1", "npmle_type2"};
  int max_iter = 500;
  double tol = 1e-8;
  std::string init = "pooled_km";
};

void apply_setting(SimulationSetup& s, const std::string& key, const std::string& value) {
  if (key == "experiment") {
    s.experiment = static_cast<int>(parse_u64(value, key));
  } else if (key == "n") {
    s.n = parse_u64(value, key);
  } else if (key == "censoring") {
    s.censoring = parse_double(value, key);
  } else if (key == "replicates" || key == "R") {
    s.replicates = parse_u64(value, key);
  } else if (key == "permutations" || key == "K") {
    s.permutations = parse_u64(value, key);
  } else if (key == "power_replicates") {
    s.power_replicates = parse_u64(value, key);
  } else if (key == "bootstrap" || key == "B") {
    s.bootstrap = parse_u64(value, key);
  } else if (key == "level") {
    s.level = parse_double(value, key);
  } else if (key == "grid_points") {
    s.grid_points = parse_u64(value, key);
  } else if (key == "seed") {
    s.seed = parse_u64(value, key);
  } else if (key == "estimators") {
    s.estimators = split(value, ',');
  } else if (key == "max_iter") {
    s.max_iter = static_cast<int>(parse_u64(value, key));
  } else if (key == "tol") {
    s.tol = parse_double(value, key);
  } else if (key == "init") {
    s.init = value;
  } else if (key == "grid") {
    if (value != "even:50" && value != "metrics")
      throw ConfigError("simulate always scores on the metrics grid; grid must be 'metrics'");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

Settings simulation_settings(const SimulationSetup& s) {
  std::string ests;
  for (std::size_t i = 0; i < s.estimators.size(); ++i) ests += (i ? "," : "") + s.estimators[i];
  return {{"experiment", std::to_string(s.experiment)},
          {"n", std::to_string(s.n)},
          {"censoring", fmt(s.censoring)},
          {"replicates", std::to_string(s.replicates)},
          {"bootstrap", std::to_string(s.bootstrap)},
          {"level", fmt(s.level)},
          {"grid_points", std::to_string(s.grid_points)},
          {"permutations", std::to_string(s.permutations)},
          {"power_replicates", std::to_string(s.power_replicates)},
          {"estimators", ests},
          {"max_iter", std::to_string(s.max_iter)},
          {"tol", fmt(s.tol)},
          {"init", s.init},
          {"seed", std::to_string(*s.seed)}};
}

std::string na(double v) { return std::isnan(v) ? "NA" : fmt(v); }

void write_pointwise(std::ostream& os, const MetricsReport& r) {
  os << "estimator,component,t,truth,bias,emp_sd,est_sd,coverage,used,failures\n";
  for (const auto& row : r.rows)
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& c = row.component[k];
      os << row.estimator << ',' << k + 1 << ',' << fmt(r.pointwise_time) << ',' << fmt(c.truth) << ','
         << na(c.bias) << ',' << na(c.emp_sd) << ',' << na(c.est_sd) << ',' << na(c.coverage) << ',' << row.used
         << ',' << row.failures << '\n';
    }
}

void write_range(std::ostream& os, const MetricsReport& r) {
  os << "estimator,component,iab,avg_variance,avg_coverage\n";
  for (const auto& row : r.rows)
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& c = row.component[k];
      os << row.estimator << ',' << k + 1 << ',' << na(c.iab) << ',' << na(c.avg_variance) << ','
         << na(c.avg_coverage) << '\n';
    }
}

void write_power(std::ostream& os, const std::vector<PowerRow>& rows) {
  os << "estimator,hypothesis";
  for (double a : kNominalLevels) os << ",alpha_" << fmt(a);
  os << ",used,failures\n";
  for (const auto& row : rows) {
    os << row.estimator << ',' << row.hypothesis;
    for (double v : row.rejection) os << ',' << fmt(v);
    os << ',' << row.used << ',' << row.failures << '\n';
  }
}

json metrics_json(const MetricsReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json comps = json::array();
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& c = row.component[k];
      comps.push_back({{"component", k + 1},
                       {"truth", c.truth},
                       {"bias", c.bias},
                       {"emp_sd", c.emp_sd},
                       {"est_sd", c.est_sd},
                       {"coverage", c.coverage},
                       {"iab", c.iab},
                       {"avg_variance", c.avg_variance},
                       {"avg_coverage", c.avg_coverage}});
    }
    rows.push_back({{"estimator", row.estimator}, {"used", row.used}, {"failures", row.failures}, {"components", comps}});
  }
  return {{"experiment", r.experiment},
          {"pointwise_time", r.pointwise_time},
          {"censoring_upper", r.censoring_upper},
          {"realized_censoring", r.realized_censoring},
          {"rows", rows}};
}

json power_json(const std::vector<PowerRow>& rows) {
  json out = json::array();
  for (const auto& row : rows) {
    json rates;
    for (std::size_t a = 0; a < kNominalLevels.size(); ++a) rates[fmt(kNominalLevels[a])] = row.rejection[a];
    out.push_back({{"estimator", row.estimator},
                   {"hypothesis", row.hypothesis},
                   {"rejection", rates},
                   {"used", row.used},
                   {"failures", row.failures}});
  }
  return out;
}

int cmd_simulate(const Options& o, const CLI::App& sub, std::ostream& out) {
  SimulationSetup s;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config file '" + o.config + "'");
    std::map<std::string, std::string> kv;
    try {
      kv = parse_key_values(in);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(o.config + ": " + e.what());
    }
    for (const auto& [k, v] : kv) apply_setting(s, k, v);
  }
  // Explicit flags win over the config file.
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--perms")) s.permutations = o.perms;
  if (given("--boot")) s.bootstrap = o.boot;
  if (given("--level")) s.level = o.level;
  if (given("--max-iter")) s.max_iter = o.max_iter;
  if (given("--tol")) s.tol = o.tol;
  if (given("--init")) s.init = o.init;
  if (given("--method")) s.estimators = split(o.method, ',');
  if (o.seed) s.seed = *o.seed;
  else if (!s.seed) s.seed = resolve_seed(o);
  if (s.power_replicates == 0) s.power_replicates = s.replicates;

  ExperimentSpec spec;
  try {
    spec = experiment(s.experiment);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  spec.n = s.n;
  spec.censoring = s.censoring;
  spec.replicates = s.replicates;
  spec.seed = *s.seed;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  Options em_opts = o;
  em_opts.max_iter = s.max_iter;
  em_opts.tol = s.tol;
  em_opts.init = s.init;
  const EmConfig config = em_config(em_opts);
  std::vector<SimEstimator> estimators;
  for (const auto& tag : s.estimators) estimators.push_back(make_estimator(method_of(tag), config));
  if (s.bootstrap == 1) throw ConfigError("bootstrap must be 0 or >= 2");
  if (!(s.level > 0.0 && s.level < 1.0)) throw ConfigError("level must lie in (0,1)");

  const Settings settings = simulation_settings(s);
  if (!o.emit_sample.empty()) {
    const SimulatedData data = sample_experiment(spec, *s.seed);
    Sink sink(o.emit_sample, out);
    write_csv_header(sink.stream(), "simulate sample", settings);
    write_sample_csv(sink.stream(), data.sample);
    sink.close();
    return kOk;
  }

  MetricsConfig mc;
  mc.grid_points = s.grid_points;
  mc.bootstrap = s.bootstrap;
  mc.level = s.level;
  mc.jobs = resolve_jobs(o.jobs);
  const MetricsReport report = run_replications(spec, estimators, mc);

  std::vector<PowerRow> power;
  if (s.permutations > 0) {
    ExperimentSpec h0 = null_design(spec);
    ExperimentSpec h1 = spec;
    h0.replicates = h1.replicates = s.power_replicates;
    PowerConfig pc;
    pc.permutations = s.permutations;
    pc.jobs = mc.jobs;
    power = power_study(h0, h1, estimators, pc);
  }

  json manifest = settings_json("simulate", settings);
  manifest["censoring_upper"] = report.censoring_upper;
  manifest["realized_censoring"] = report.realized_censoring;
  manifest["pointwise_time"] = report.pointwise_time;

  if (o.format == "json") {
    json j = manifest;
    j["metrics"] = metrics_json(report);
    if (!power.empty()) j["power"] = power_json(power);
    const std::string path = o.output.empty() ? "" : (std::filesystem::path(o.output) / "report.json").string();
    if (!o.output.empty()) std::filesystem::create_directories(o.output);
    write_json(path, out, j);
    return kOk;
  }

  auto emit = [&](const std::string& name, auto&& body) {
    if (o.output.empty()) {
      out << "# table: " << name << '\n';
      write_csv_header(out, "simulate", settings);
      body(out);
      out << '\n';
      return;
    }
    Sink sink((std::filesystem::path(o.output) / (name + ".csv")).string(), out);
    write_csv_header(sink.stream(), "simulate", settings);
    body(sink.stream());
    sink.close();
  };
  if (!o.output.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(o.output, ec);
    if (ec) throw ConfigError("cannot create output directory '" + o.output + "'");
  }
  emit("pointwise", [&](std::ostream& os) { write_pointwise(os, report); });
  emit("range", [&](std::ostream& os) { write_range(os, report); });
  if (!power.empty()) emit("power", [&](std::ostream& os) { write_power(os, power); });
  if (!o.output.empty()) write_json((std::filesystem::path(o.output) / "manifest.json").string(), out, manifest);
  return kOk;
}

void add_estimation_flags(CLI::App* sub, Options& o, bool with_input = true) {
  if (with_input) sub->add_option("--input,-i", o.input, "Input CSV: time,status,q1[,q2,...]")->required();
  sub->add_option("--output,-o", o.output, "Output path (default: standard output)");
  sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--method,-m", o.method, "Estimator tag");
  sub->add_option("--grid", o.grid, "Grid: events or even:N:LO:HI");
  sub->add_option("--max-iter", o.max_iter, "EM iteration cap");
  sub->add_option("--tol", o.tol, "EM convergence tolerance (sup norm)");
  sub->add_option("--init", o.init, "EM start: pooled-km or uniform");
  sub->add_option("--seed", o.seed, "Random seed (fallback: ISOMIX_SEED)");
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    std::string cleaned;
    for (char c : value)
      if (c != '"' && c != '\'') cleaned += c;
    if (key.empty()) throw std::invalid_argument("line " + std::to_string(number) + ": empty key");
    kv[key] = trim(cleaned);
  }
  return kv;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Component CDF estimation for censored mixture data", "isomix"};
  app.require_subcommand(1);
  Options o;

  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate component CDFs");
  add_estimation_flags(estimate_cmd, o);
  estimate_cmd->add_option("--jobs", o.jobs, "Worker threads (unused)");

  auto* test_cmd = app.add_subcommand("test", "Permutation test of F1 = F2");
  add_estimation_flags(test_cmd, o);
  test_cmd->add_option("--perms,-K", o.perms, "Permutation replicates");
  test_cmd->add_option("--restrict", o.restrict_to, "Comma-separated times for the statistic");
  test_cmd->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");

  auto* boot_cmd = app.add_subcommand("bootstrap", "Bootstrap standard errors and percentile bands");
  add_estimation_flags(boot_cmd, o);
  boot_cmd->add_option("--boot,-B", o.boot, "Bootstrap replicates");
  boot_cmd->add_option("--level", o.level, "Band coverage level");
  boot_cmd->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");

  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study of the published designs");
  sim_cmd->add_option("--config,-c", o.config, "key = value experiment config");
  sim_cmd->add_option("--output,-o", o.output, "Output directory (default: standard output)");
  sim_cmd->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  sim_cmd->add_option("--method,-m", o.method, "Comma-separated estimator tags");
  sim_cmd->add_option("--max-iter", o.max_iter, "EM iteration cap");
  sim_cmd->add_option("--tol", o.tol, "EM convergence tolerance (sup norm)");
  sim_cmd->add_option("--init", o.init, "EM start: pooled-km or uniform");
  sim_cmd->add_option("--perms,-K", o.perms, "Permutations per power replicate (0 = skip power)");
  sim_cmd->add_option("--boot,-B", o.boot, "Bootstrap replicates per data set (0 = skip)");
  sim_cmd->add_option("--level", o.level, "Band coverage level");
  sim_cmd->add_option("--seed", o.seed, "Random seed (fallback: config, then ISOMIX_SEED)");
  sim_cmd->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");
  sim_cmd->add_option("--emit-sample", o.emit_sample, "Write one generated sample CSV and stop");

  auto* gof_cmd = app.add_subcommand("gof", "Kolmogorov-Smirnov distance to reference CDFs");
  add_estimation_flags(gof_cmd, o);
  gof_cmd->add_option("--cdf1", o.cdf1, "exp:SCALE[:UPPER], uniform:LO:HI or experiment:ID:K")->required();
  gof_cmd->add_option("--cdf2", o.cdf2, "Same forms as --cdf1")->required();
  o.format = "csv";

  std::vector<char*> argv;
  std::vector<std::string> storage(args);
  if (storage.empty()) storage.push_back("isomix");
  for (auto& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  if (gof_cmd->parsed() && gof_cmd->get_option("--format")->count() == 0) o.format = "json";
  if (test_cmd->parsed() && test_cmd->get_option("--format")->count() == 0) o.format = "json";

  try {
    if (estimate_cmd->parsed()) return cmd_estimate(o, out, err);
    if (test_cmd->parsed()) return cmd_test(o, out);
    if (boot_cmd->parsed()) return cmd_bootstrap(o, out, err);
    if (sim_cmd->parsed()) return cmd_simulate(o, *sim_cmd, out);
    if (gof_cmd->parsed()) return cmd_gof(o, out);
  } catch (const InputError& e) {
    err << "input error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return kInputError;
  } catch (const EstimationError& e) {
    err << "estimation error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return kEstimationError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace isomix::cli
