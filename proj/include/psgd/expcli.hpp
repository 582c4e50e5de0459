#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psgd/problems.hpp"
#include "psgd/trainer.hpp"
#include "psgd/types.hpp"

namespace psgd {

// Raised for malformed configs, unknown keys, out-of-range values, missing
// files and similar usage errors; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A full study description parsed from a flat JSON config. Unknown keys are
// rejected.
struct RunConfig {
  std::string problem;  // "counterexample" | "quadratic"
  Schedule schedule = Schedule::kPowerSgd;
  int n_nodes = 1;              // key "N"
  Index m = 2;
  Index n = 2;
  Index rank = 1;               // key "r"
  Index tau = 1;
  bool eta_theoretical = false; // key "eta": number or "theoretical"
  double eta = 0.0;
  double mu = 0.0;
  std::int64_t steps = 0;       // key "T"
  int trials = 1;
  std::uint64_t master_seed = 0;
  double sigma = 0.0;           // counterexample oracle scale
  std::uint64_t target_seed = 0;  // quadratic target generator
  double noise_sigma = 0.0;       // quadratic oracle noise
  bool force_xi0_ones = false;    // counterexample test hook
  std::optional<Matrix> x0;       // row-major entries, defaults per problem
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

struct VerdictRow {
  std::string name;
  double observed = 0.0;
  double bound = 0.0;
  std::string result;  // "pass" | "fail" | "skip"
  std::string detail;
};

struct StudySummary {
  std::string problem;
  std::string schedule;
  int trials = 0;
  std::int64_t steps = 0;
  double eta_used = 0.0;
  double mu = 0.0;

  double mean_grad_sq_final = 0.0;   // over trials, at the last recorded step
  double ci_half_width = 0.0;        // 95% normal approximation, trials >= 2
  double mean_grad_sq_timeavg = 0.0; // over trials of the per-trial T-average
  double window_avg_grad_sq = 0.0;   // same, over the final min(200, T) steps
  double epsilon_zero = 0.0;         // 0 unless the problem defines it
  std::int64_t comm_total = 0;
  double comm_per_iter_exact = 0.0;
  double comm_per_iter_simplified = 0.0;
  double oracle_mean_variance = 0.0; // Monte Carlo at x0, 10^4 samples

  std::vector<VerdictRow> verdicts;

  bool all_pass() const;
};

// Runs config.trials independent runs seeded master_seed + k, writes
// trial_<k>.csv per trial plus summary.csv into out_dir, and returns the
// summary. Divergence writes the partial trial CSV before rethrowing.
StudySummary run_study(const RunConfig& config, const std::string& out_dir);

StudySummary read_summary_csv(const std::string& path);

// CLI entry points; return process exit codes (0 pass, 1 verdict failure,
// 2 usage/config error, 3 divergence).
int cli_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override);
int cli_sweep(const std::string& config_path, const std::string& sweep_path,
              const std::string& out_dir,
              std::optional<std::uint64_t> seed_override);
int cli_report(const std::string& summary_path);

// 17-significant-digit decimal form; round-trips doubles exactly.
std::string format_double(double v);
double parse_double(const std::string& s);

std::string metrics_csv_text(const std::vector<MetricsRow>& rows);

}  // namespace psgd
