#include "psgd/compressors.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "psgd/numkernel.hpp"
#include "psgd/types.hpp"

using psgd::CommAccountant;
using psgd::CompressedUpdate;
using psgd::CompressorFamily;
using psgd::CompressorKind;
using psgd::Index;
using psgd::Matrix;
using psgd::Vector;

namespace {

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(Index(rows.size()), Index(rows.begin()->size()));
  Index i = 0;
  for (const auto& row : rows) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix mean_of(const std::vector<Matrix>& xs) {
  Matrix m = Matrix::Zero(xs[0].rows(), xs[0].cols());
  for (const Matrix& x : xs) m += x;
  return m / double(xs.size());
}

}  // namespace

TEST_CASE("power step reproduces a symmetric rank-1 update exactly") {
  // All-ones update: the sketch direction is the normalized ones vector and
  // one power step reconstructs the matrix with zero error.
  const Matrix b = from_rows({{1.0, 1.0}, {1.0, 1.0}});
  Matrix q_prev(2, 1);
  q_prev << 1.0, 0.0;
  const std::vector<Matrix> deltas = {b};
  CommAccountant comm;
  const CompressedUpdate cu = psgd::ssp_compress(q_prev, deltas, comm);

  const double inv_sqrt2 = std::sqrt(0.5);
  CHECK(cu.p_tilde(0, 0) == doctest::Approx(inv_sqrt2).epsilon(1e-15));
  CHECK(cu.p_tilde(1, 0) == doctest::Approx(inv_sqrt2).epsilon(1e-15));
  CHECK((cu.global_approx - b).norm() <= 1e-14);
  CHECK(comm.total() == 2 * 1 + 2 * 1);  // mr + nr

  // Same story for the checkerboard matrix, whose sketch direction flips
  // signs. One power step captures any rank-1 matrix it does not annihilate.
  const Matrix a = from_rows({{1.0, -1.0}, {-1.0, 1.0}});
  CommAccountant comm2;
  const std::vector<Matrix> deltas2 = {a};
  const CompressedUpdate cu2 = psgd::ssp_compress(q_prev, deltas2, comm2);
  CHECK((cu2.global_approx - a).norm() <= 1e-14);
}

TEST_CASE("power step with a dead sketch falls back to the hint basis") {
  // q_prev in the kernel of the update gives a zero sketch; the previous
  // basis (the hint) must carry the projector unchanged.
  const Matrix w = from_rows({{2.0, 0.0}, {0.0, 0.0}});
  Matrix q_prev(2, 1);
  q_prev << 0.0, 1.0;  // w q_prev = 0
  Matrix p_prev(2, 1);
  p_prev << 0.0, 1.0;
  const std::vector<Matrix> deltas = {w};
  CommAccountant comm;
  const CompressedUpdate cu =
      psgd::ssp_compress(q_prev, deltas, comm, &p_prev);
  CHECK((cu.p_tilde - p_prev).norm() <= 1e-15);
  // The carried basis annihilates this particular update entirely.
  CHECK(cu.global_approx.norm() <= 1e-15);
  CHECK(psgd::frobenius_sq(cu.q_next) <= 1e-30);

  // Without the hint, completion snaps to e0, which captures the update.
  CommAccountant comm2;
  const CompressedUpdate cu2 = psgd::ssp_compress(q_prev, deltas, comm2);
  CHECK(cu2.p_tilde(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK((cu2.global_approx - w).norm() <= 1e-14);
}

TEST_CASE("power compression satisfies the Pythagorean split") {
  std::mt19937_64 gen(2024);
  const Index shapes[][3] = {{4, 3, 1}, {8, 5, 2}, {16, 16, 4}};
  for (const auto& s : shapes) {
    for (int t = 0; t < 100; ++t) {
      std::vector<Matrix> deltas;
      for (int i = 0; i < 3; ++i) {
        deltas.push_back(oracles::random_matrix(gen, s[0], s[1]));
      }
      const Matrix q_prev = oracles::random_matrix(gen, s[1], s[2]);
      CommAccountant comm;
      const CompressedUpdate cu = psgd::ssp_compress(q_prev, deltas, comm);

      const Matrix mean = mean_of(deltas);
      const double lhs = psgd::frobenius_sq(mean);
      const double rhs = psgd::frobenius_sq(cu.global_approx) +
                         psgd::frobenius_sq((mean - cu.global_approx).eval());
      CHECK(std::abs(lhs - rhs) <= 1e-9 * lhs);

      // The same split holds per node (same orthogonal projector)...
      for (std::size_t i = 0; i < deltas.size(); ++i) {
        const double li = psgd::frobenius_sq(deltas[i]);
        const double ri =
            psgd::frobenius_sq(cu.per_node_approx[i]) +
            psgd::frobenius_sq((deltas[i] - cu.per_node_approx[i]).eval());
        CHECK(std::abs(li - ri) <= 1e-9 * li);
      }
      // ... and the node approximations average to the global one.
      CHECK((mean_of(cu.per_node_approx) - cu.global_approx).norm() <=
            1e-12 * (1.0 + cu.global_approx.norm()));

      // Contractivity both ways.
      CHECK(psgd::frobenius_sq(cu.global_approx) <= lhs * (1.0 + 1e-12));
      CHECK(psgd::frobenius_sq((mean - cu.global_approx).eval()) <=
            lhs * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("svd compression hits the optimal truncation error") {
  std::mt19937_64 gen(4096);
  const Index shapes[][3] = {{4, 3, 1}, {8, 5, 2}, {16, 16, 4}};
  for (const auto& s : shapes) {
    for (int t = 0; t < 60; ++t) {
      std::vector<Matrix> deltas;
      for (int i = 0; i < 2; ++i) {
        deltas.push_back(oracles::random_matrix(gen, s[0], s[1]));
      }
      CommAccountant comm;
      const CompressedUpdate cu = psgd::svd_compress(deltas, s[2], comm);
      const Matrix mean = mean_of(deltas);

      const double lhs = psgd::frobenius_sq(mean);
      const double err =
          psgd::frobenius_sq((mean - cu.global_approx).eval());
      CHECK(std::abs(lhs - (psgd::frobenius_sq(cu.global_approx) + err)) <=
            1e-9 * lhs);

      // Independent route: the optimal rank-r error is the tail eigenvalue
      // sum of mean^T mean, computed by the Jacobi oracle.
      const double best = oracles::truncation_error_sq(mean, s[2]);
      CHECK(std::abs(err - best) <= 1e-8 * (1.0 + lhs));

      // And it obeys the uniform contraction bound (1 - r/n) ||mean||^2.
      const double delta = double(s[2]) / double(s[1]);
      CHECK(err <= (1.0 - delta) * lhs * (1.0 + 1e-12));

      CHECK(comm.total() == s[0] * s[1] + s[1] * s[2]);
    }
  }
}

TEST_CASE("svd compression of the identity keeps exactly rank r") {
  const std::vector<Matrix> deltas = {Matrix::Identity(2, 2)};
  CommAccountant comm;
  const CompressedUpdate cu = psgd::svd_compress(deltas, 1, comm);
  const double err =
      psgd::frobenius_sq((Matrix::Identity(2, 2) - cu.global_approx).eval());
  CHECK(err == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(psgd::frobenius_sq(cu.global_approx) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identity compression is exact and charges the full payload") {
  std::mt19937_64 gen(55);
  std::vector<Matrix> deltas;
  for (int i = 0; i < 3; ++i) deltas.push_back(oracles::random_matrix(gen, 4, 3));
  CommAccountant comm;
  const CompressedUpdate cu = psgd::identity_compress(deltas, comm);
  CHECK((cu.global_approx - mean_of(deltas)).norm() <= 1e-14);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    CHECK((cu.per_node_approx[i] - deltas[i]).norm() == 0.0);
  }
  CHECK(cu.q_next.cols() == 0);
  CHECK((cu.p_tilde - Matrix::Identity(4, 4)).norm() == 0.0);
  CHECK(comm.total() == 12);
}

TEST_CASE("relative compression error of a fixed diagonal") {
  // For w = diag(2, 1): projecting onto e1 keeps the unit part and drops the
  // part of norm 4, so the relative squared error is 4/5.
  const Matrix w = from_rows({{2.0, 0.0}, {0.0, 1.0}});
  Matrix q_prev(2, 1);
  q_prev << 0.0, 1.0;
  const std::vector<Matrix> deltas = {w};
  CommAccountant comm;
  const CompressedUpdate cu = psgd::ssp_compress(q_prev, deltas, comm);
  const double rel = psgd::frobenius_sq((w - cu.global_approx).eval()) /
                     psgd::frobenius_sq(w);
  CHECK(rel == doctest::Approx(0.8).epsilon(1e-14));

  // The SVD compressor picks the dominant direction instead: error 1/5.
  CommAccountant comm2;
  const CompressedUpdate cu2 = psgd::svd_compress(deltas, 1, comm2);
  const double rel2 = psgd::frobenius_sq((w - cu2.global_approx).eval()) /
                      psgd::frobenius_sq(w);
  CHECK(rel2 == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("contractive_check stays within [0, 1] across families") {
  std::mt19937_64 gen(808);
  const Matrix w = oracles::random_matrix(gen, 6, 4);
  for (CompressorFamily fam :
       {CompressorFamily::kSsp, CompressorFamily::kSvd,
        CompressorFamily::kIdentity}) {
    for (Index r = 1; r <= 4; ++r) {
      const double worst =
          psgd::contractive_check(CompressorKind{fam, r}, w, 50, 9);
      CHECK(worst >= 0.0);
      CHECK(worst <= 1.0 + 1e-12);
      if (fam == CompressorFamily::kIdentity) CHECK(worst == 0.0);
    }
  }
  CHECK(psgd::contractive_check(CompressorKind{CompressorFamily::kSsp, 2},
                                Matrix::Zero(3, 3), 10, 1) == 0.0);
}

TEST_CASE("compressor input validation") {
  CommAccountant comm;
  const std::vector<Matrix> empty;
  Matrix q(3, 1);
  q.setOnes();
  CHECK_THROWS_AS((void)psgd::ssp_compress(q, empty, comm),
                  std::invalid_argument);
  const std::vector<Matrix> deltas = {Matrix::Zero(4, 3)};
  CHECK_THROWS_AS((void)psgd::svd_compress(deltas, 0, comm),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)psgd::svd_compress(deltas, 4, comm),
                  std::invalid_argument);
  Matrix q_bad(2, 1);  // wrong row count against 4x3 updates
  q_bad.setOnes();
  CHECK_THROWS_AS((void)psgd::ssp_compress(q_bad, deltas, comm),
                  std::invalid_argument);
  const std::vector<Matrix> ragged = {Matrix::Zero(4, 3), Matrix::Zero(4, 2)};
  CHECK_THROWS_AS((void)psgd::svd_compress(ragged, 1, comm),
                  std::invalid_argument);
}
