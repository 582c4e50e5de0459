#pragma once

#include <memory>
#include <optional>

#include "psgd/rng.hpp"
#include "psgd/types.hpp"

namespace psgd {

// Analytic constants of a problem, when known. Used to resolve the
// theoretical step size and to evaluate the norm monitors; absent fields
// disable those features for the problem.
struct ProblemMetadata {
  std::optional<double> smoothness_l;  // gradient Lipschitz constant
  std::optional<double> noise_sigma;   // bound on E||g - grad f||_F^2, squared root
  std::optional<double> g_sq;          // bound on E||mean_i g_i||_F^2
  std::optional<double> f_min;         // infimum of the loss
};

// A distributed optimization problem over m x n iterates: a common loss with
// per-node stochastic gradient oracles. Evaluation is pure given the iterate,
// the node id and the node's draw index.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual double loss(const Matrix& x) const = 0;
  virtual Matrix full_grad(const Matrix& x) const = 0;
  virtual Matrix stoch_grad(const Matrix& x, int node_id,
                            StreamRng& rng) const = 0;
  virtual const ProblemMetadata& metadata() const = 0;
  virtual Matrix default_x0() const = 0;
};

// Piecewise loss underlying the hard instance: quadratic inside [-1, 1],
// linear growth outside. Continuously differentiable with |psi'| <= 2.
double psi(double x);
double psi_prime(double x);

// Two-node-structure 2x2 hard instance.
//
// The loss is f(X) = psi(<A, X>) with A = [[1,-1],[-1,1]], so the full
// gradient is psi'(s) * A for s = x00 - x01 - x10 + x11. The stochastic
// oracle returns grad + xi * (sigma * B - grad) with B = [[1,1],[1,1]] and a
// Rademacher xi per (node, step); its two outcomes average to the full
// gradient exactly. Because A and B are orthogonal and B annihilates s, runs
// whose transmitted updates stay in span(B) keep the gradient norm frozen.
class CounterexampleProblem : public Problem {
 public:
  explicit CounterexampleProblem(double sigma, bool force_first_draw_plus = false);

  Index rows() const override { return 2; }
  Index cols() const override { return 2; }
  double loss(const Matrix& x) const override;
  Matrix full_grad(const Matrix& x) const override;
  Matrix stoch_grad(const Matrix& x, int node_id,
                    StreamRng& rng) const override;
  const ProblemMetadata& metadata() const override { return meta_; }
  Matrix default_x0() const override;

  double sigma() const { return sigma_; }

 private:
  double sigma_;
  bool force_first_draw_plus_;  // test hook: pins each node's step-0 sign to +1
  ProblemMetadata meta_;
};

// s(X) = <A, X> for the hard instance.
double counterexample_s(const Matrix& x);

// Lower bound on the expected squared gradient norm that survives for all
// time under single-step power compression started at x0 with N nodes:
// psi'(s(x0))^2 / 2^(N-2), the frozen norm paid with the probability that
// all step-0 signs come up +1.
double epsilon_zero(const Matrix& x0, int n_nodes);

// Quadratic sanity problem: loss(X) = 0.5 * ||X - target||_F^2 with additive
// Gaussian oracle noise scaled so E||g - grad||_F^2 = noise_sigma^2.
class QuadraticProblem : public Problem {
 public:
  QuadraticProblem(Matrix target, double noise_sigma);

  Index rows() const override { return target_.rows(); }
  Index cols() const override { return target_.cols(); }
  double loss(const Matrix& x) const override;
  Matrix full_grad(const Matrix& x) const override;
  Matrix stoch_grad(const Matrix& x, int node_id,
                    StreamRng& rng) const override;
  const ProblemMetadata& metadata() const override { return meta_; }
  Matrix default_x0() const override;

  const Matrix& target() const { return target_; }

 private:
  Matrix target_;
  double noise_sigma_;
  ProblemMetadata meta_;
};

// Gaussian m x n target generated from `target_seed`.
std::unique_ptr<QuadraticProblem> quadratic_problem(Index m, Index n,
                                                    std::uint64_t target_seed,
                                                    double noise_sigma);

}  // namespace psgd
