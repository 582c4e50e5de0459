#include "psgd/expcli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "psgd/compressors.hpp"
#include "psgd/numkernel.hpp"

namespace psgd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// 97.5% standard normal quantile; two-sided 95% confidence intervals.
constexpr double kZ95 = 1.959963984540054;
constexpr int kVarianceProbeSamples = 10000;

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "problem",    "schedule",   "N",           "m",
      "n",          "r",          "tau",         "eta",
      "mu",         "T",          "trials",      "master_seed",
      "sigma",      "target_seed", "noise_sigma", "force_xi0_ones",
      "x0"};
  return keys;
}

const std::set<std::string>& sweepable_keys() {
  static const std::set<std::string> keys = {
      "N",   "m",      "n",          "r",           "tau",
      "eta", "mu",     "T",          "trials",      "master_seed",
      "sigma", "noise_sigma", "target_seed", "schedule"};
  return keys;
}

[[noreturn]] void config_fail(const std::string& msg) {
  throw ConfigError("config: " + msg);
}

std::int64_t get_integer(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) config_fail("key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t get_seed(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!(v.is_number_integer() && v.get<std::int64_t>() >= 0) &&
      !v.is_number_unsigned()) {
    config_fail("key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_number(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_number()) config_fail("key '" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) config_fail("key '" + key + "' must be finite");
  return d;
}

std::string get_string(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_string()) config_fail("key '" + key + "' must be a string");
  return v.get<std::string>();
}

bool get_bool(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_boolean()) config_fail("key '" + key + "' must be a boolean");
  return v.get<bool>();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("malformed number in CSV: '" + s + "'");
  }
  return v;
}

std::string metrics_csv_text(const std::vector<MetricsRow>& rows) {
  std::string out =
      "step,loss,grad_sq_norm,comm_floats_cum,compression_err_rel,alignment,"
      "ef_norm_sq\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.step);
    out += ',';
    out += format_double(r.loss);
    out += ',';
    out += format_double(r.grad_sq_norm);
    out += ',';
    out += std::to_string(r.comm_floats_cum);
    out += ',';
    out += format_double(r.compression_err_rel);
    out += ',';
    out += format_double(r.alignment);
    out += ',';
    out += format_double(r.ef_norm_sq);
    out += '\n';
  }
  return out;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_fail(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) config_fail("top level must be a JSON object");

  for (const auto& item : j.items()) {
    if (known_config_keys().count(item.key()) == 0) {
      config_fail("unknown key '" + item.key() + "'");
    }
  }

  RunConfig c;
  if (!j.contains("problem")) config_fail("missing key 'problem'");
  c.problem = get_string(j, "problem");
  if (c.problem != "counterexample" && c.problem != "quadratic") {
    config_fail("problem must be 'counterexample' or 'quadratic'");
  }
  const bool is_quadratic = c.problem == "quadratic";

  if (!j.contains("schedule")) config_fail("missing key 'schedule'");
  try {
    c.schedule = schedule_from_name(get_string(j, "schedule"));
  } catch (const std::invalid_argument& e) {
    config_fail(e.what());
  }

  for (const char* key : {"N", "r", "eta", "mu", "T"}) {
    if (!j.contains(key)) config_fail(std::string("missing key '") + key + "'");
  }

  const std::int64_t n_nodes = get_integer(j, "N");
  if (n_nodes < 1 || n_nodes > 65535) config_fail("N must be in [1, 65535]");
  c.n_nodes = int(n_nodes);

  if (is_quadratic) {
    if (!j.contains("m") || !j.contains("n")) {
      config_fail("quadratic problem requires keys 'm' and 'n'");
    }
    c.m = Index(get_integer(j, "m"));
    c.n = Index(get_integer(j, "n"));
    if (c.n < 1 || c.m < c.n) config_fail("need m >= n >= 1");
    if (!j.contains("noise_sigma") || !j.contains("target_seed")) {
      config_fail("quadratic problem requires 'noise_sigma' and 'target_seed'");
    }
    c.noise_sigma = get_number(j, "noise_sigma");
    if (c.noise_sigma < 0.0) config_fail("noise_sigma must be >= 0");
    c.target_seed = get_seed(j, "target_seed");
    for (const char* key : {"sigma", "force_xi0_ones"}) {
      if (j.contains(key)) {
        config_fail(std::string("key '") + key +
                    "' applies to the counterexample problem only");
      }
    }
  } else {
    c.m = 2;
    c.n = 2;
    if (j.contains("m") && get_integer(j, "m") != 2) {
      config_fail("counterexample problem is 2x2; m must be 2");
    }
    if (j.contains("n") && get_integer(j, "n") != 2) {
      config_fail("counterexample problem is 2x2; n must be 2");
    }
    if (!j.contains("sigma")) {
      config_fail("counterexample problem requires key 'sigma'");
    }
    c.sigma = get_number(j, "sigma");
    if (c.sigma < 0.0) config_fail("sigma must be >= 0");
    if (j.contains("force_xi0_ones")) {
      c.force_xi0_ones = get_bool(j, "force_xi0_ones");
    }
    for (const char* key : {"noise_sigma", "target_seed"}) {
      if (j.contains(key)) {
        config_fail(std::string("key '") + key +
                    "' applies to the quadratic problem only");
      }
    }
  }

  c.rank = Index(get_integer(j, "r"));
  if (c.rank < 1 || c.rank > c.n) config_fail("r must be in [1, n]");

  if (j.contains("tau")) {
    c.tau = Index(get_integer(j, "tau"));
    if (c.tau < 1) config_fail("tau must be >= 1");
  } else if (c.schedule == Schedule::kPowerSgdPlus) {
    config_fail("schedule powersgd_plus requires key 'tau'");
  }

  if (j.at("eta").is_string()) {
    if (j.at("eta").get<std::string>() != "theoretical") {
      config_fail("eta must be a positive number or the string 'theoretical'");
    }
    c.eta_theoretical = true;
  } else {
    c.eta = get_number(j, "eta");
    if (c.eta <= 0.0) config_fail("eta must be > 0");
  }

  c.mu = get_number(j, "mu");
  if (c.mu < 0.0 || c.mu >= 1.0) config_fail("mu must be in [0, 1)");

  c.steps = get_integer(j, "T");
  if (c.steps < 0) config_fail("T must be >= 0");

  if (j.contains("trials")) {
    const std::int64_t trials = get_integer(j, "trials");
    if (trials < 1 || trials > 1000000) config_fail("trials must be in [1, 1e6]");
    c.trials = int(trials);
  }
  if (j.contains("master_seed")) c.master_seed = get_seed(j, "master_seed");

  if (j.contains("x0")) {
    const json& arr = j.at("x0");
    if (!arr.is_array() || Index(arr.size()) != c.m * c.n) {
      config_fail("x0 must be an array of m*n numbers (row-major)");
    }
    Matrix x0(c.m, c.n);
    Index idx = 0;
    for (const json& v : arr) {
      if (!v.is_number()) config_fail("x0 entries must be numbers");
      const double d = v.get<double>();
      if (!std::isfinite(d)) config_fail("x0 entries must be finite");
      x0(idx / c.n, idx % c.n) = d;
      ++idx;
    }
    c.x0 = std::move(x0);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

std::unique_ptr<Problem> make_problem(const RunConfig& c, bool honor_force) {
  if (c.problem == "quadratic") {
    return quadratic_problem(c.m, c.n, c.target_seed, c.noise_sigma);
  }
  return std::make_unique<CounterexampleProblem>(
      c.sigma, honor_force && c.force_xi0_ones);
}

TrainerOptions to_trainer_options(const RunConfig& c) {
  TrainerOptions o;
  o.schedule = c.schedule;
  o.n_nodes = c.n_nodes;
  o.rank = c.rank;
  o.tau = c.tau;
  o.eta = c.eta;
  o.mu = c.mu;
  o.steps = c.steps;
  o.master_seed = c.master_seed;
  o.x0 = c.x0;
  return o;
}

double resolve_eta(const RunConfig& c, const Problem& problem,
                   const Matrix& x0) {
  if (!c.eta_theoretical) return c.eta;
  const ProblemMetadata& meta = problem.metadata();
  if (!meta.smoothness_l || !meta.noise_sigma || !meta.g_sq || !meta.f_min) {
    config_fail(
        "eta 'theoretical' needs problem metadata (L, sigma, G, f_min); '" +
        c.problem + "' does not provide all of them");
  }
  if (c.steps < 1) config_fail("eta 'theoretical' requires T >= 1");
  const double delta_f = problem.loss(x0) - *meta.f_min;
  if (!(delta_f > 0.0)) {
    config_fail("eta 'theoretical' requires loss(x0) above the loss infimum");
  }
  const double delta = double(c.rank) / double(problem.cols());
  return theoretical_step_size(*meta.smoothness_l, *meta.noise_sigma,
                               c.n_nodes, c.steps, delta_f, c.tau,
                               std::sqrt(*meta.g_sq), delta, c.mu);
}

// Monte Carlo estimate of E||mean_i g_i(x0) - grad f(x0)||_F^2 over the
// node-mean oracle; uses dedicated probe streams so run streams are
// untouched, and ignores the forced-sign test hook.
double oracle_mean_variance_probe(const RunConfig& c, const Matrix& x0) {
  const std::unique_ptr<Problem> problem = make_problem(c, false);
  const Matrix grad = problem->full_grad(x0);
  std::vector<StreamRng> streams;
  streams.reserve(std::size_t(c.n_nodes));
  for (int i = 0; i < c.n_nodes; ++i) {
    streams.emplace_back(c.master_seed,
                         StreamRng::kProbeStreamBase + std::uint32_t(i));
  }
  double acc = 0.0;
  for (int s = 0; s < kVarianceProbeSamples; ++s) {
    Matrix mean = Matrix::Zero(problem->rows(), problem->cols());
    for (int i = 0; i < c.n_nodes; ++i) {
      mean += problem->stoch_grad(x0, i, streams[std::size_t(i)]);
    }
    mean /= double(c.n_nodes);
    acc += frobenius_sq((mean - grad).eval());
  }
  return acc / double(kVarianceProbeSamples);
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << text;
  out.close();
  if (!out) throw ConfigError("failed writing output file: " + path);
}

std::string trial_csv_path(const std::string& out_dir, int trial) {
  char name[32];
  std::snprintf(name, sizeof(name), "trial_%03d.csv", trial);
  return (fs::path(out_dir) / name).string();
}

std::string sanitize_detail(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

double sample_mean(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return xs.empty() ? 0.0 : acc / double(xs.size());
}

double ci_half_width_95(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / double(xs.size() - 1));
  return kZ95 * sd / std::sqrt(double(xs.size()));
}

struct MonitorAggregate {
  bool enabled = false;
  std::string skip_reason;
  double ef_bound = 0.0;
  double momentum_bound = 0.0;
  double max_ef = 0.0;
  double max_momentum_sq = 0.0;
  bool violated_ef = false;
  bool violated_momentum = false;
  std::string first_violation_ef;
  std::string first_violation_momentum;
};

void fold_monitor(MonitorAggregate& agg, const MonitorReport& mon, int trial) {
  if (!mon.enabled) {
    agg.skip_reason = mon.skip_reason;
    return;
  }
  agg.enabled = true;
  agg.ef_bound = mon.ef_bound;
  agg.momentum_bound = mon.momentum_bound;
  agg.max_ef = std::max(agg.max_ef, mon.max_ef);
  agg.max_momentum_sq = std::max(agg.max_momentum_sq, mon.max_momentum_sq);
  for (const MonitorViolation& v : mon.violations) {
    const std::string where =
        "trial=" + std::to_string(trial) + ";step=" + std::to_string(v.step);
    if (v.monitor == "ef_norm") {
      if (!agg.violated_ef) agg.first_violation_ef = where;
      agg.violated_ef = true;
    } else {
      if (!agg.violated_momentum) agg.first_violation_momentum = where;
      agg.violated_momentum = true;
    }
  }
}

std::string summary_csv_text(const StudySummary& s) {
  std::string out = "row_type,name,observed,bound,result,detail\n";
  auto meta = [&out](const std::string& name, const std::string& value) {
    out += "meta," + name + ",,,," + sanitize_detail(value) + "\n";
  };
  auto stat = [&out](const std::string& name, double value) {
    out += "stat," + name + "," + format_double(value) + ",,,\n";
  };
  meta("problem", s.problem);
  meta("schedule", s.schedule);
  stat("trials", double(s.trials));
  stat("steps", double(s.steps));
  stat("eta", s.eta_used);
  stat("mu", s.mu);
  stat("epsilon_zero", s.epsilon_zero);
  stat("mean_grad_sq_final", s.mean_grad_sq_final);
  stat("mean_grad_sq_final_ci_half", s.ci_half_width);
  stat("mean_grad_sq_timeavg", s.mean_grad_sq_timeavg);
  stat("window_avg_grad_sq", s.window_avg_grad_sq);
  stat("comm_total", double(s.comm_total));
  stat("comm_per_iter_exact", s.comm_per_iter_exact);
  stat("comm_per_iter_simplified", s.comm_per_iter_simplified);
  stat("oracle_mean_variance", s.oracle_mean_variance);
  for (const VerdictRow& v : s.verdicts) {
    out += "verdict," + v.name + "," + format_double(v.observed) + "," +
           format_double(v.bound) + "," + v.result + "," +
           sanitize_detail(v.detail) + "\n";
  }
  return out;
}

}  // namespace

bool StudySummary::all_pass() const {
  for (const VerdictRow& v : verdicts) {
    if (v.result == "fail") return false;
  }
  return true;
}

StudySummary run_study(const RunConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);

  const std::unique_ptr<Problem> problem = make_problem(config, true);
  const Matrix x0 =
      config.x0.has_value() ? *config.x0 : problem->default_x0();

  TrainerOptions options = to_trainer_options(config);
  options.eta = resolve_eta(config, *problem, x0);
  options.x0 = x0;

  StudySummary s;
  s.problem = config.problem;
  s.schedule = schedule_name(config.schedule);
  s.trials = config.trials;
  s.steps = config.steps;
  s.eta_used = options.eta;
  s.mu = config.mu;
  if (config.problem == "counterexample") {
    s.epsilon_zero = epsilon_zero(x0, config.n_nodes);
  }

  std::vector<double> finals, timeavgs, windows;
  MonitorAggregate mon;
  bool comm_consistent = true;

  for (int k = 0; k < config.trials; ++k) {
    options.master_seed = config.master_seed + std::uint64_t(k);
    RunResult res;
    try {
      res = run(options, *problem);
    } catch (const DivergenceError& e) {
      write_file(trial_csv_path(out_dir, k), metrics_csv_text(e.partial));
      throw;
    }
    write_file(trial_csv_path(out_dir, k), metrics_csv_text(res.metrics));

    if (!res.metrics.empty()) {
      finals.push_back(res.metrics.back().grad_sq_norm);
      double avg = 0.0;
      for (const MetricsRow& r : res.metrics) avg += r.grad_sq_norm;
      timeavgs.push_back(avg / double(res.metrics.size()));
      const std::size_t window =
          std::min<std::size_t>(200, res.metrics.size());
      double wavg = 0.0;
      for (std::size_t i = res.metrics.size() - window; i < res.metrics.size();
           ++i) {
        wavg += res.metrics[i].grad_sq_norm;
      }
      windows.push_back(wavg / double(window));
    }
    fold_monitor(mon, res.monitor, k);
    if (k == 0) {
      s.comm_total = res.comm.total();
    } else if (res.comm.total() != s.comm_total) {
      comm_consistent = false;
    }
  }

  s.mean_grad_sq_final = sample_mean(finals);
  s.ci_half_width = ci_half_width_95(finals);
  s.mean_grad_sq_timeavg = sample_mean(timeavgs);
  s.window_avg_grad_sq = sample_mean(windows);
  s.comm_per_iter_exact = expected_comm_per_iteration(
      config.schedule, config.m, config.n, config.rank, config.tau);
  s.comm_per_iter_simplified = simplified_comm_per_iteration(
      config.schedule, config.m, config.n, config.rank, config.tau);
  s.oracle_mean_variance = oracle_mean_variance_probe(config, x0);

  // Verdicts. Non-convergence floor: with enough trials the 95% lower
  // confidence bound of the final squared gradient norm must clear the
  // problem's lower bound.
  {
    VerdictRow v;
    v.name = "grad_lower_bound";
    if (config.problem == "counterexample" &&
        config.schedule == Schedule::kPowerSgd && config.trials >= 2 &&
        config.steps >= 1) {
      v.observed = s.mean_grad_sq_final - s.ci_half_width;
      v.bound = s.epsilon_zero;
      v.result = v.observed >= v.bound ? "pass" : "fail";
      v.detail = "mean=" + format_double(s.mean_grad_sq_final) +
                 ";half_width=" + format_double(s.ci_half_width);
    } else {
      v.result = "skip";
      v.detail =
          "applies to counterexample studies under powersgd with >= 2 trials";
    }
    s.verdicts.push_back(v);
  }
  {
    VerdictRow v;
    v.name = "convergence_window_avg";
    if (config.problem == "counterexample" &&
        config.schedule == Schedule::kPowerSgdPlus && config.steps >= 1) {
      v.observed = s.window_avg_grad_sq;
      v.bound = 0.1 * s.epsilon_zero;
      v.result = v.observed <= v.bound ? "pass" : "fail";
      v.detail = "time average over the final min(200; T) steps";
    } else {
      v.result = "skip";
      v.detail = "applies to counterexample studies under powersgd_plus";
    }
    s.verdicts.push_back(v);
  }
  {
    VerdictRow v;
    v.name = "convergence_final";
    if (config.problem == "quadratic" &&
        config.schedule == Schedule::kPowerSgdPlus &&
        config.noise_sigma == 0.0 && config.steps >= 1) {
      v.observed = s.mean_grad_sq_final;
      v.bound = 1e-6;
      v.result = v.observed <= v.bound ? "pass" : "fail";
      v.detail = "noiseless quadratic final squared gradient norm";
    } else {
      v.result = "skip";
      v.detail = "applies to noiseless quadratic studies under powersgd_plus";
    }
    s.verdicts.push_back(v);
  }
  {
    VerdictRow v;
    v.name = "ef_norm_monitor";
    if (mon.enabled) {
      v.observed = mon.max_ef;
      v.bound = mon.ef_bound;
      v.result = mon.violated_ef ? "fail" : "pass";
      v.detail = mon.violated_ef ? "first violation at " + mon.first_violation_ef
                                 : "max over all trials and steps";
    } else {
      v.result = "skip";
      v.detail = mon.skip_reason;
    }
    s.verdicts.push_back(v);
  }
  {
    VerdictRow v;
    v.name = "momentum_norm_monitor";
    if (mon.enabled) {
      v.observed = mon.max_momentum_sq;
      v.bound = mon.momentum_bound;
      v.result = mon.violated_momentum ? "fail" : "pass";
      v.detail = mon.violated_momentum
                     ? "first violation at " + mon.first_violation_momentum
                     : "max over all trials and steps";
    } else {
      v.result = "skip";
      v.detail = mon.skip_reason;
    }
    s.verdicts.push_back(v);
  }
  {
    VerdictRow v;
    v.name = "comm_total_exact";
    const std::int64_t expected = expected_comm_total(
        config.schedule, config.m, config.n, config.rank, config.tau,
        config.steps);
    v.observed = double(s.comm_total);
    v.bound = double(expected);
    v.result =
        (s.comm_total == expected && comm_consistent) ? "pass" : "fail";
    v.detail = "exact per-iter=" + format_double(s.comm_per_iter_exact) +
               ";simplified per-iter=" +
               format_double(s.comm_per_iter_simplified);
    if (!comm_consistent) v.detail += ";comm totals differ across trials";
    s.verdicts.push_back(v);
  }

  write_file((fs::path(out_dir) / "summary.csv").string(),
             summary_csv_text(s));
  return s;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

StudySummary read_summary_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open summary file: " + path);

  StudySummary s;
  std::string line;
  if (!std::getline(in, line) ||
      line != "row_type,name,observed,bound,result,detail") {
    throw ConfigError("unrecognized summary header in " + path);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 6) {
      throw ConfigError("malformed summary row in " + path + ": " + line);
    }
    const std::string& kind = f[0];
    const std::string& name = f[1];
    if (kind == "meta") {
      if (name == "problem") s.problem = f[5];
      if (name == "schedule") s.schedule = f[5];
    } else if (kind == "stat") {
      const double v = parse_double(f[2]);
      if (name == "trials") s.trials = int(v);
      else if (name == "steps") s.steps = std::int64_t(v);
      else if (name == "eta") s.eta_used = v;
      else if (name == "mu") s.mu = v;
      else if (name == "epsilon_zero") s.epsilon_zero = v;
      else if (name == "mean_grad_sq_final") s.mean_grad_sq_final = v;
      else if (name == "mean_grad_sq_final_ci_half") s.ci_half_width = v;
      else if (name == "mean_grad_sq_timeavg") s.mean_grad_sq_timeavg = v;
      else if (name == "window_avg_grad_sq") s.window_avg_grad_sq = v;
      else if (name == "comm_total") s.comm_total = std::int64_t(v);
      else if (name == "comm_per_iter_exact") s.comm_per_iter_exact = v;
      else if (name == "comm_per_iter_simplified") s.comm_per_iter_simplified = v;
      else if (name == "oracle_mean_variance") s.oracle_mean_variance = v;
      else throw ConfigError("unknown stat '" + name + "' in " + path);
    } else if (kind == "verdict") {
      VerdictRow v;
      v.name = name;
      v.observed = parse_double(f[2]);
      v.bound = parse_double(f[3]);
      v.result = f[4];
      v.detail = f[5];
      s.verdicts.push_back(v);
    } else {
      throw ConfigError("unknown row type '" + kind + "' in " + path);
    }
  }
  return s;
}

namespace {

void print_summary(const StudySummary& s, std::ostream& os) {
  os << "study: problem=" << s.problem << " schedule=" << s.schedule
     << " trials=" << s.trials << " T=" << s.steps
     << " eta=" << format_double(s.eta_used) << " mu=" << format_double(s.mu)
     << "\n";
  os << "  mean_grad_sq_final    = " << format_double(s.mean_grad_sq_final)
     << " (ci half-width " << format_double(s.ci_half_width) << ")\n";
  os << "  mean_grad_sq_timeavg  = " << format_double(s.mean_grad_sq_timeavg)
     << "\n";
  os << "  window_avg_grad_sq    = " << format_double(s.window_avg_grad_sq)
     << "\n";
  if (s.problem == "counterexample") {
    os << "  epsilon_zero          = " << format_double(s.epsilon_zero)
       << "\n";
  }
  os << "  comm_total            = " << s.comm_total
     << " floats/node (exact per-iter "
     << format_double(s.comm_per_iter_exact) << ", simplified "
     << format_double(s.comm_per_iter_simplified) << ")\n";
  os << "  oracle_mean_variance  = "
     << format_double(s.oracle_mean_variance) << "\n";
  os << "verdicts:\n";
  for (const VerdictRow& v : s.verdicts) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-24s %-5s observed=%-24s bound=%-24s",
                  v.name.c_str(), v.result.c_str(),
                  format_double(v.observed).c_str(),
                  format_double(v.bound).c_str());
    os << buf << " " << v.detail << "\n";
  }
}

int exit_code_for(const StudySummary& s) { return s.all_pass() ? 0 : 1; }

}  // namespace

int cli_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override) {
  try {
    RunConfig config = load_config(config_path);
    if (seed_override.has_value()) config.master_seed = *seed_override;
    const StudySummary s = run_study(config, out_dir);
    print_summary(s, std::cout);
    std::cout << "wrote " << (fs::path(out_dir) / "summary.csv").string()
              << "\n";
    return exit_code_for(s);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (partial metrics written)\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

namespace {

struct SweepAxis {
  std::string key;
  std::vector<json> values;
};

std::vector<SweepAxis> parse_sweep_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("sweep: not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.empty()) {
    throw ConfigError("sweep: spec must be a non-empty JSON object");
  }
  std::vector<SweepAxis> axes;
  for (const auto& item : j.items()) {
    if (sweepable_keys().count(item.key()) == 0) {
      throw ConfigError("sweep: key '" + item.key() + "' is not sweepable");
    }
    if (!item.value().is_array() || item.value().empty()) {
      throw ConfigError("sweep: key '" + item.key() +
                        "' must map to a non-empty array");
    }
    SweepAxis axis;
    axis.key = item.key();
    for (const json& v : item.value()) axis.values.push_back(v);
    axes.push_back(std::move(axis));
  }
  return axes;
}

std::string json_value_str(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number()) return format_double(v.get<double>());
  return v.dump();
}

}  // namespace

int cli_sweep(const std::string& config_path, const std::string& sweep_path,
              const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
  try {
    std::ifstream cin_file(config_path, std::ios::binary);
    if (!cin_file) throw ConfigError("cannot open config file: " + config_path);
    std::ostringstream css;
    css << cin_file.rdbuf();
    json base;
    try {
      base = json::parse(css.str());
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    parse_config_text(base.dump());  // validate the base config up front
    if (seed_override.has_value()) base["master_seed"] = *seed_override;

    std::ifstream sin(sweep_path, std::ios::binary);
    if (!sin) throw ConfigError("cannot open sweep file: " + sweep_path);
    std::ostringstream sss;
    sss << sin.rdbuf();
    const std::vector<SweepAxis> axes = parse_sweep_spec(sss.str());

    std::int64_t cells = 1;
    for (const SweepAxis& a : axes) cells *= std::int64_t(a.values.size());
    if (cells > 100000) throw ConfigError("sweep: grid too large");

    fs::create_directories(out_dir);
    std::string table =
        "cell,params,mean_grad_sq_final,ci_half_width,mean_grad_sq_timeavg,"
        "comm_total,oracle_mean_variance,failed_verdicts\n";

    bool any_fail = false;
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      json patched = base;
      std::string params;
      std::int64_t rem = cell;
      for (std::size_t a = axes.size(); a-- > 0;) {
        const SweepAxis& axis = axes[a];
        const std::size_t pick = std::size_t(rem % std::int64_t(axis.values.size()));
        rem /= std::int64_t(axis.values.size());
        patched[axis.key] = axis.values[pick];
      }
      for (const SweepAxis& axis : axes) {
        if (!params.empty()) params += ';';
        params += axis.key + "=" + json_value_str(patched[axis.key]);
      }

      const RunConfig config = parse_config_text(patched.dump());
      char cell_name[32];
      std::snprintf(cell_name, sizeof(cell_name), "cell_%03lld",
                    static_cast<long long>(cell));
      const std::string cell_dir = (fs::path(out_dir) / cell_name).string();
      const StudySummary s = run_study(config, cell_dir);

      int failed = 0;
      for (const VerdictRow& v : s.verdicts) {
        if (v.result == "fail") ++failed;
      }
      any_fail = any_fail || failed > 0;

      table += std::string(cell_name) + "," + params + "," +
               format_double(s.mean_grad_sq_final) + "," +
               format_double(s.ci_half_width) + "," +
               format_double(s.mean_grad_sq_timeavg) + "," +
               std::to_string(s.comm_total) + "," +
               format_double(s.oracle_mean_variance) + "," +
               std::to_string(failed) + "\n";
      std::cout << cell_name << ": " << params << " mean_grad_sq_final="
                << format_double(s.mean_grad_sq_final) << "\n";
    }
    write_file((fs::path(out_dir) / "sweep_summary.csv").string(), table);
    std::cout << "wrote "
              << (fs::path(out_dir) / "sweep_summary.csv").string() << "\n";
    return any_fail ? 1 : 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (partial metrics written)\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int cli_report(const std::string& summary_path) {
  try {
    const StudySummary s = read_summary_csv(summary_path);
    print_summary(s, std::cout);
    for (const VerdictRow& v : s.verdicts) {
      if (v.result == "fail") {
        std::cout << "FAILED: " << v.name << " (" << v.detail << ")\n";
      }
    }
    return exit_code_for(s);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace psgd
