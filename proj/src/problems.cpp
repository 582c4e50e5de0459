#include "psgd/problems.hpp"

#include <cmath>

#include "psgd/numkernel.hpp"

namespace psgd {

double psi(double x) {
  const double a = std::abs(x);
  return a <= 1.0 ? x * x : 2.0 * a - 1.0;
}

double psi_prime(double x) {
  if (std::abs(x) <= 1.0) return 2.0 * x;
  return x > 0.0 ? 2.0 : -2.0;
}

namespace {

Matrix make_a() {
  Matrix a(2, 2);
  a << 1.0, -1.0, -1.0, 1.0;
  return a;
}

Matrix make_b() {
  Matrix b(2, 2);
  b << 1.0, 1.0, 1.0, 1.0;
  return b;
}

}  // namespace

double counterexample_s(const Matrix& x) {
  detail::require(x.rows() == 2 && x.cols() == 2,
                  "counterexample: iterate must be 2x2");
  return x(0, 0) - x(0, 1) - x(1, 0) + x(1, 1);
}

CounterexampleProblem::CounterexampleProblem(double sigma,
                                             bool force_first_draw_plus)
    : sigma_(sigma), force_first_draw_plus_(force_first_draw_plus) {
  detail::require(sigma >= 0.0, "counterexample: sigma must be >= 0");
  // Smoothness: |psi''| <= 2 composed with <A, .> gives L = 2 * ||A||_F^2.
  meta_.smoothness_l = 8.0;
  // Oracle variance: g - grad = xi (sigma B - grad) and <A, B> = 0, so
  // E||g - grad||^2 = sigma^2 ||B||^2 + psi'^2 ||A||^2 <= 4 sigma^2 + 16.
  meta_.noise_sigma = std::sqrt(4.0 * sigma * sigma + 16.0);
  // Second moment of the node-mean gradient: E||mean g||^2 =
  // ||grad||^2 + E[xi_bar^2] ||sigma B - grad||^2 <= 16 + (4 sigma^2 + 16).
  meta_.g_sq = 4.0 * sigma * sigma + 32.0;
  meta_.f_min = 0.0;
}

double CounterexampleProblem::loss(const Matrix& x) const {
  return psi(counterexample_s(x));
}

Matrix CounterexampleProblem::full_grad(const Matrix& x) const {
  return psi_prime(counterexample_s(x)) * make_a();
}

Matrix CounterexampleProblem::stoch_grad(const Matrix& x, int /*node_id*/,
                                         StreamRng& rng) const {
  const Matrix grad = full_grad(x);
  int xi = rng.sign();
  if (force_first_draw_plus_ && rng.draws() == 1) xi = 1;
  return grad + double(xi) * (sigma_ * make_b() - grad);
}

Matrix CounterexampleProblem::default_x0() const {
  return Matrix::Identity(2, 2);
}

double epsilon_zero(const Matrix& x0, int n_nodes) {
  detail::require(n_nodes >= 1, "epsilon_zero: need at least one node");
  const double p = psi_prime(counterexample_s(x0));
  return std::ldexp(p * p, 2 - n_nodes);  // p^2 / 2^(N-2)
}

QuadraticProblem::QuadraticProblem(Matrix target, double noise_sigma)
    : target_(std::move(target)), noise_sigma_(noise_sigma) {
  detail::require(noise_sigma >= 0.0, "quadratic: noise_sigma must be >= 0");
  require_finite(target_, "quadratic target");
  meta_.smoothness_l = 1.0;
  meta_.noise_sigma = noise_sigma_;
  // No uniform bound on E||mean g||^2 exists for an unbounded quadratic, so
  // g_sq stays unset and the norm monitors are skipped for this problem.
  meta_.f_min = 0.0;
}

double QuadraticProblem::loss(const Matrix& x) const {
  return 0.5 * frobenius_sq((x - target_).eval());
}

Matrix QuadraticProblem::full_grad(const Matrix& x) const {
  return x - target_;
}

Matrix QuadraticProblem::stoch_grad(const Matrix& x, int /*node_id*/,
                                    StreamRng& rng) const {
  Matrix g = full_grad(x);
  if (noise_sigma_ > 0.0) {
    // Entrywise sd noise_sigma / sqrt(mn) makes E||noise||_F^2 = noise_sigma^2.
    const double sd =
        noise_sigma_ / std::sqrt(double(g.rows()) * double(g.cols()));
    for (Index i = 0; i < g.rows(); ++i) {
      for (Index j = 0; j < g.cols(); ++j) {
        g(i, j) += sd * rng.normal();
      }
    }
  }
  return g;
}

Matrix QuadraticProblem::default_x0() const {
  return Matrix::Zero(target_.rows(), target_.cols());
}

std::unique_ptr<QuadraticProblem> quadratic_problem(Index m, Index n,
                                                    std::uint64_t target_seed,
                                                    double noise_sigma) {
  detail::require(m >= n && n >= 1, "quadratic: need rows >= cols >= 1");
  StreamRng rng(target_seed, StreamRng::kTargetStream);
  Matrix target(m, n);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      target(i, j) = rng.normal();
    }
  }
  return std::make_unique<QuadraticProblem>(std::move(target), noise_sigma);
}

}  // namespace psgd
