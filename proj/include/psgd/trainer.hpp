#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psgd/cluster.hpp"
#include "psgd/problems.hpp"
#include "psgd/types.hpp"

namespace psgd {

struct TrainerOptions {
  Schedule schedule = Schedule::kPowerSgd;
  int n_nodes = 1;
  Index rank = 1;
  Index tau = 1;  // restart period of the periodic-SVD schedule
  double eta = 0.1;
  double mu = 0.0;
  std::int64_t steps = 0;
  std::uint64_t master_seed = 0;
  std::optional<Matrix> x0;  // defaults to the problem's canonical start
};

// One record per trainer step. Loss, gradient and error-feedback fields
// describe the state entering the step; comm_floats_cum includes the step's
// own reductions.
struct MetricsRow {
  std::int64_t step;
  double loss;
  double grad_sq_norm;
  std::int64_t comm_floats_cum;
  double compression_err_rel;  // ||C(mean delta) - mean delta||^2 / ||mean delta||^2
  double alignment;            // ||P P^T grad|| / ||grad||
  double ef_norm_sq;           // ||mean_i e_i||_F^2
};

struct MonitorViolation {
  std::int64_t step;
  std::string monitor;  // "ef_norm" or "momentum_norm"
  double observed;
  double bound;
};

// Norm monitors derived from the periodic-SVD analysis: the mean residual
// must satisfy ||mean e||^2 <= 45 tau^2 G^2 / delta^2 and the momentum
// ||m||^2 <= 92 tau^2 G^2 / ((1-mu)^2 delta^2), with delta = r/n. They apply
// to the periodic-SVD schedule on problems that publish G; other runs record
// a skip reason instead.
struct MonitorReport {
  bool enabled = false;
  std::string skip_reason;
  double ef_bound = 0.0;
  double momentum_bound = 0.0;
  double max_ef = 0.0;
  double max_momentum_sq = 0.0;
  std::vector<MonitorViolation> violations;
};

struct RunResult {
  std::vector<MetricsRow> metrics;
  Matrix x_final;
  MonitorReport monitor;
  CommAccountant comm;
};

// Raised when the iterate or momentum picks up a non-finite entry; carries
// the offending step and the metrics recorded up to and including it.
struct DivergenceError : std::runtime_error {
  DivergenceError(std::int64_t step_, std::vector<MetricsRow> partial_)
      : std::runtime_error("diverged at step " + std::to_string(step_)),
        step(step_),
        partial(std::move(partial_)) {}

  std::int64_t step;
  std::vector<MetricsRow> partial;
};

struct TrainerState {
  Matrix x;
  Matrix momentum;
  Matrix q_basis;  // n x r right basis carried between steps
  Matrix p_basis;  // left basis of the last compression; empty before it
  std::int64_t step = 0;
};

// Validates options against the problem and builds the initial state. The
// right basis is filled with i.i.d. standard normals drawn row-major from
// the master seed's basis stream; it is not orthogonalized.
TrainerState init_trainer(const TrainerOptions& options,
                          const Problem& problem);

std::vector<NodeState> init_nodes(const TrainerOptions& options,
                                  const Problem& problem);

// Executes one distributed step: per-node stochastic gradients plus carried
// residuals, compression per schedule, residual update, momentum accumulation
// and the iterate update. Returns the step's metrics row.
MetricsRow train_step(TrainerState& state, std::vector<NodeState>& nodes,
                      const Problem& problem, const TrainerOptions& options,
                      CommAccountant& comm);

// Runs `options.steps` steps from the configured initialization and collects
// metrics, the final iterate, the comm log and the monitor report.
RunResult run(const TrainerOptions& options, const Problem& problem);

// Step size that optimizes the convergence guarantee:
// 1 / (2L/(1-mu) + sqrt(L sigma^2 T / (2 (1-mu)^2 N deltaF))
//      + cbrt(274 L^2 tau^2 G^2 T / ((1-mu)^5 delta^2 deltaF))).
// Always <= (1-mu) / (2L). deltaF is loss(x0) - f_min, delta = r/n.
double theoretical_step_size(double l_smooth, double sigma, int n_nodes,
                             std::int64_t steps, double delta_f,
                             std::int64_t tau, double g_bound, double delta,
                             double mu);

struct RateBoundTerms {
  double stochastic;   // sqrt(32 L sigma^2 deltaF / (N T))
  double optimization; // 8 L deltaF / T
  double compression;  // 6 cbrt(274) (L tau G deltaF)^(2/3) / (T delta (1-mu))^(2/3)
  double total() const { return stochastic + optimization + compression; }
};

RateBoundTerms theoretical_rate_bound_terms(double l_smooth, double sigma,
                                            double g_bound, double delta_f,
                                            int n_nodes, std::int64_t steps,
                                            std::int64_t tau, double delta,
                                            double mu);

// Guaranteed bound on the T-averaged expected squared gradient norm under
// the theoretical step size.
double theoretical_rate_bound(double l_smooth, double sigma, double g_bound,
                              double delta_f, int n_nodes, std::int64_t steps,
                              std::int64_t tau, double delta, double mu);

}  // namespace psgd
