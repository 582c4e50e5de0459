#include "psgd/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "psgd/compressors.hpp"
#include "psgd/numkernel.hpp"

namespace psgd {

namespace {

void validate_options(const TrainerOptions& o, const Problem& p) {
  detail::require(o.n_nodes >= 1, "trainer: need at least one node");
  detail::require(o.rank >= 1 && o.rank <= p.cols(),
                  "trainer: rank must be in [1, cols]");
  detail::require(o.tau >= 1, "trainer: tau must be >= 1");
  detail::require(std::isfinite(o.eta) && o.eta > 0.0,
                  "trainer: eta must be positive and finite");
  detail::require(o.mu >= 0.0 && o.mu < 1.0, "trainer: mu must be in [0, 1)");
  detail::require(o.steps >= 0, "trainer: steps must be >= 0");
}

Matrix mean_ascending(const std::vector<Matrix>& ms) {
  Matrix sum = ms[0];
  for (std::size_t i = 1; i < ms.size(); ++i) sum += ms[i];
  return sum / double(ms.size());
}

}  // namespace

TrainerState init_trainer(const TrainerOptions& options,
                          const Problem& problem) {
  validate_options(options, problem);

  TrainerState s;
  if (options.x0.has_value()) {
    detail::require(options.x0->rows() == problem.rows() &&
                        options.x0->cols() == problem.cols(),
                    "trainer: x0 shape mismatch");
    require_finite(*options.x0, "trainer x0");
    s.x = *options.x0;
  } else {
    s.x = problem.default_x0();
  }
  s.momentum = Matrix::Zero(problem.rows(), problem.cols());

  StreamRng rng(options.master_seed, StreamRng::kBasisInitStream);
  s.q_basis = Matrix(problem.cols(), options.rank);
  for (Index i = 0; i < s.q_basis.rows(); ++i) {
    for (Index j = 0; j < s.q_basis.cols(); ++j) {
      s.q_basis(i, j) = rng.normal();
    }
  }
  s.p_basis = Matrix(problem.rows(), 0);
  return s;
}

std::vector<NodeState> init_nodes(const TrainerOptions& options,
                                  const Problem& problem) {
  std::vector<NodeState> nodes;
  nodes.reserve(std::size_t(options.n_nodes));
  for (int i = 0; i < options.n_nodes; ++i) {
    nodes.emplace_back(i, problem.rows(), problem.cols(), options.master_seed);
  }
  return nodes;
}

MetricsRow train_step(TrainerState& state, std::vector<NodeState>& nodes,
                      const Problem& problem, const TrainerOptions& options,
                      CommAccountant& comm) {
  MetricsRow row;
  row.step = state.step;
  row.loss = problem.loss(state.x);

  const Matrix grad = problem.full_grad(state.x);
  row.grad_sq_norm = frobenius_sq(grad);

  std::vector<Matrix> errors;
  errors.reserve(nodes.size());
  for (const NodeState& node : nodes) errors.push_back(node.error);
  row.ef_norm_sq = frobenius_sq(mean_ascending(errors));

  comm.begin_step(state.step);

  std::vector<Matrix> deltas;
  deltas.reserve(nodes.size());
  for (NodeState& node : nodes) {
    deltas.push_back(problem.stoch_grad(state.x, node.node_id, node.rng) +
                     node.error);
  }

  CompressedUpdate upd;
  switch (options.schedule) {
    case Schedule::kPowerSgd:
      upd = ssp_compress(state.q_basis, deltas, comm,
                         state.p_basis.cols() > 0 ? &state.p_basis : nullptr);
      break;
    case Schedule::kPowerSgdPlus:
      if (state.step % options.tau == 0) {
        upd = svd_compress(deltas, options.rank, comm);
      } else {
        upd = ssp_compress(state.q_basis, deltas, comm,
                           state.p_basis.cols() > 0 ? &state.p_basis : nullptr);
      }
      break;
    case Schedule::kUncompressed:
      upd = identity_compress(deltas, comm);
      break;
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].error = deltas[i] - upd.per_node_approx[i];
  }

  state.momentum = options.mu * state.momentum + upd.global_approx;
  state.x -= options.eta * state.momentum;
  if (upd.q_next.cols() > 0) {
    state.q_basis = upd.q_next;
    state.p_basis = upd.p_tilde;
  }

  const Matrix delta_mean = mean_ascending(deltas);
  const double delta_sq = frobenius_sq(delta_mean);
  row.compression_err_rel =
      delta_sq == 0.0
          ? 0.0
          : frobenius_sq((upd.global_approx - delta_mean).eval()) / delta_sq;
  row.alignment =
      row.grad_sq_norm == 0.0
          ? 0.0
          : std::sqrt(frobenius_sq(
                          (upd.p_tilde * (upd.p_tilde.transpose() * grad))
                              .eval()) /
                      row.grad_sq_norm);
  row.comm_floats_cum = comm.total();

  ++state.step;
  if (!state.x.allFinite() || !state.momentum.allFinite()) {
    throw DivergenceError(row.step, {row});
  }
  return row;
}

RunResult run(const TrainerOptions& options, const Problem& problem) {
  TrainerState state = init_trainer(options, problem);
  std::vector<NodeState> nodes = init_nodes(options, problem);

  RunResult res;
  res.metrics.reserve(std::size_t(options.steps));

  MonitorReport& mon = res.monitor;
  if (options.schedule != Schedule::kPowerSgdPlus) {
    mon.skip_reason = "norm monitors apply to the powersgd_plus schedule";
  } else if (!problem.metadata().g_sq.has_value()) {
    mon.skip_reason = "problem metadata has no gradient second-moment bound";
  } else {
    mon.enabled = true;
    const double g_sq = *problem.metadata().g_sq;
    const double delta = double(options.rank) / double(problem.cols());
    const double tau_sq = double(options.tau) * double(options.tau);
    mon.ef_bound = 45.0 * tau_sq * g_sq / (delta * delta);
    mon.momentum_bound = 92.0 * tau_sq * g_sq /
                         ((1.0 - options.mu) * (1.0 - options.mu) * delta * delta);
  }

  for (std::int64_t t = 0; t < options.steps; ++t) {
    MetricsRow row;
    try {
      row = train_step(state, nodes, problem, options, res.comm);
    } catch (DivergenceError& e) {
      std::vector<MetricsRow> partial = res.metrics;
      partial.insert(partial.end(), e.partial.begin(), e.partial.end());
      throw DivergenceError(e.step, std::move(partial));
    }
    res.metrics.push_back(row);

    if (mon.enabled) {
      mon.max_ef = std::max(mon.max_ef, row.ef_norm_sq);
      if (row.ef_norm_sq > mon.ef_bound) {
        mon.violations.push_back(
            {row.step, "ef_norm", row.ef_norm_sq, mon.ef_bound});
      }
      const double mom_sq = frobenius_sq(state.momentum);
      mon.max_momentum_sq = std::max(mon.max_momentum_sq, mom_sq);
      if (mom_sq > mon.momentum_bound) {
        mon.violations.push_back(
            {row.step, "momentum_norm", mom_sq, mon.momentum_bound});
      }
    }
  }
  res.x_final = state.x;
  return res;
}

double theoretical_step_size(double l_smooth, double sigma, int n_nodes,
                             std::int64_t steps, double delta_f,
                             std::int64_t tau, double g_bound, double delta,
                             double mu) {
  detail::require(l_smooth > 0.0, "theoretical_step_size: L must be > 0");
  detail::require(sigma >= 0.0, "theoretical_step_size: sigma must be >= 0");
  detail::require(n_nodes >= 1, "theoretical_step_size: N must be >= 1");
  detail::require(steps >= 1, "theoretical_step_size: T must be >= 1");
  detail::require(delta_f > 0.0, "theoretical_step_size: deltaF must be > 0");
  detail::require(tau >= 1, "theoretical_step_size: tau must be >= 1");
  detail::require(g_bound > 0.0, "theoretical_step_size: G must be > 0");
  detail::require(delta > 0.0 && delta <= 1.0,
                  "theoretical_step_size: delta must be in (0, 1]");
  detail::require(mu >= 0.0 && mu < 1.0,
                  "theoretical_step_size: mu must be in [0, 1)");

  const double one_minus_mu = 1.0 - mu;
  const double t = double(steps);
  const double curvature = 2.0 * l_smooth / one_minus_mu;
  const double stochastic =
      std::sqrt(l_smooth * sigma * sigma * t /
                (2.0 * one_minus_mu * one_minus_mu * double(n_nodes) * delta_f));
  const double compression =
      std::cbrt(274.0 * l_smooth * l_smooth * double(tau) * double(tau) *
                g_bound * g_bound * t /
                (std::pow(one_minus_mu, 5) * delta * delta * delta_f));
  return 1.0 / (curvature + stochastic + compression);
}

RateBoundTerms theoretical_rate_bound_terms(double l_smooth, double sigma,
                                            double g_bound, double delta_f,
                                            int n_nodes, std::int64_t steps,
                                            std::int64_t tau, double delta,
                                            double mu) {
  detail::require(l_smooth > 0.0, "theoretical_rate_bound: L must be > 0");
  detail::require(sigma >= 0.0, "theoretical_rate_bound: sigma must be >= 0");
  detail::require(g_bound > 0.0, "theoretical_rate_bound: G must be > 0");
  detail::require(delta_f > 0.0, "theoretical_rate_bound: deltaF must be > 0");
  detail::require(n_nodes >= 1, "theoretical_rate_bound: N must be >= 1");
  detail::require(steps >= 1, "theoretical_rate_bound: T must be >= 1");
  detail::require(tau >= 1, "theoretical_rate_bound: tau must be >= 1");
  detail::require(delta > 0.0 && delta <= 1.0,
                  "theoretical_rate_bound: delta must be in (0, 1]");
  detail::require(mu >= 0.0 && mu < 1.0,
                  "theoretical_rate_bound: mu must be in [0, 1)");

  const double t = double(steps);
  RateBoundTerms terms;
  terms.stochastic = std::sqrt(32.0 * l_smooth * sigma * sigma * delta_f /
                               (double(n_nodes) * t));
  terms.optimization = 8.0 * l_smooth * delta_f / t;
  terms.compression =
      6.0 * std::cbrt(274.0) *
      std::pow(l_smooth * double(tau) * g_bound * delta_f, 2.0 / 3.0) /
      (std::pow(t, 2.0 / 3.0) * std::pow(delta, 2.0 / 3.0) *
       std::pow(1.0 - mu, 2.0 / 3.0));
  return terms;
}

double theoretical_rate_bound(double l_smooth, double sigma, double g_bound,
                              double delta_f, int n_nodes, std::int64_t steps,
                              std::int64_t tau, double delta, double mu) {
  return theoretical_rate_bound_terms(l_smooth, sigma, g_bound, delta_f,
                                      n_nodes, steps, tau, delta, mu)
      .total();
}

}  // namespace psgd
