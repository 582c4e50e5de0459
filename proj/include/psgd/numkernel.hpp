#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>

#include "psgd/types.hpp"

namespace psgd {

// Squared Frobenius norm of any dense expression.
template <typename Derived>
typename Derived::Scalar frobenius_sq(const Eigen::MatrixBase<Derived>& a) {
  return a.squaredNorm();
}

namespace detail {

// First canonical basis direction of length `rows` that still has a
// significant component outside span(q.leftCols(j_filled)). Guaranteed to
// exist while j_filled < rows; scanning ascending makes the choice
// deterministic.
template <typename Scalar>
DenseVector<Scalar> canonical_completion(const DenseMatrix<Scalar>& q,
                                         Index j_filled) {
  const Index rows = q.rows();
  const Scalar accept = Scalar(0.5) / std::sqrt(Scalar(rows));
  for (Index k = 0; k < rows; ++k) {
    DenseVector<Scalar> v = DenseVector<Scalar>::Zero(rows);
    v(k) = Scalar(1);
    for (int pass = 0; pass < 2; ++pass) {
      for (Index c = 0; c < j_filled; ++c) {
        v -= (q.col(c).dot(v)) * q.col(c);
      }
    }
    const Scalar n = v.norm();
    if (n >= accept) {
      v /= n;
      if (v(k) < Scalar(0)) v = -v;  // orient deterministically
      return v;
    }
  }
  throw NumericalError("qr_economic: no canonical completion direction found");
}

}  // namespace detail

// Economic QR factor of `a` (rows >= cols): returns Q with orthonormal
// columns such that R = Q^T a is upper triangular with non-negative diagonal.
//
// Built as Gram-Schmidt with a second orthogonalization pass per column,
// which keeps Q^T Q = I at machine precision even for ill-conditioned input.
// Columns whose residual norm after orthogonalization against the previous
// columns falls to or below 1e-12 * ||a||_F are rank-deficient; each such
// column is replaced deterministically, first from the unused columns of
// `completion_hint` (if given; it must have `a.rows()` rows and orthonormal-
// ish columns, e.g. the previous step's basis) and otherwise by the canonical
// basis vector of lowest index not yet represented, then orthogonalized.
template <typename Scalar>
DenseMatrix<Scalar> qr_economic(
    const DenseMatrix<Scalar>& a,
    const DenseMatrix<Scalar>* completion_hint = nullptr) {
  detail::require(a.rows() >= a.cols(),
                  "qr_economic: input must have rows >= cols");
  require_finite(a, "qr_economic");
  if (completion_hint != nullptr) {
    detail::require(completion_hint->rows() == a.rows(),
                    "qr_economic: completion hint row count mismatch");
  }

  const Index rows = a.rows();
  const Index cols = a.cols();
  const Scalar replace_at = Scalar(1e-12) * a.norm();
  const Scalar hint_accept = Scalar(1e-6);

  DenseMatrix<Scalar> q(rows, cols);
  Index hint_next = 0;

  for (Index j = 0; j < cols; ++j) {
    DenseVector<Scalar> v = a.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Index c = 0; c < j; ++c) {
        v -= (q.col(c).dot(v)) * q.col(c);
      }
    }
    const Scalar n = v.norm();
    if (n > replace_at) {
      q.col(j) = v / n;  // r_jj = n > 0, diagonal convention holds
      continue;
    }

    bool filled = false;
    if (completion_hint != nullptr) {
      for (; hint_next < completion_hint->cols() && !filled; ++hint_next) {
        DenseVector<Scalar> h = completion_hint->col(hint_next);
        for (int pass = 0; pass < 2; ++pass) {
          for (Index c = 0; c < j; ++c) {
            h -= (q.col(c).dot(h)) * q.col(c);
          }
        }
        const Scalar hn = h.norm();
        if (hn >= hint_accept) {
          q.col(j) = h / hn;
          filled = true;
        }
      }
    }
    if (!filled) {
      q.col(j) = detail::canonical_completion(q, j);
    }
  }
  return q;
}

// Thin singular value decomposition a = u * sigma.asDiagonal() * v^T for
// rows >= cols: u is rows x cols with orthonormal columns, sigma holds the
// singular values in non-increasing order, v is cols x cols orthogonal.
template <typename Scalar>
struct ThinSvd {
  DenseMatrix<Scalar> u;
  DenseVector<Scalar> sigma;
  DenseMatrix<Scalar> v;
};

// Computes the thin SVD with a deterministic sign convention: in each column
// of u the entry of largest magnitude (ties resolved to the lowest row
// index) is non-negative, with the matching column of v negated to
// compensate. Backed by Eigen's two-sided Jacobi SVD; a kernel failure
// raises NumericalError.
template <typename Scalar>
ThinSvd<Scalar> thin_svd(const DenseMatrix<Scalar>& a) {
  detail::require(a.rows() >= a.cols(),
                  "thin_svd: input must have rows >= cols");
  require_finite(a, "thin_svd");

  Eigen::JacobiSVD<DenseMatrix<Scalar>> svd(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericalError("thin_svd: Jacobi iteration did not converge");
  }

  ThinSvd<Scalar> out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  for (Index j = 0; j < out.u.cols(); ++j) {
    Index imax = 0;
    Scalar best = std::abs(out.u(0, j));
    for (Index i = 1; i < out.u.rows(); ++i) {
      const Scalar m = std::abs(out.u(i, j));
      if (m > best) {
        best = m;
        imax = i;
      }
    }
    if (out.u(imax, j) < Scalar(0)) {
      out.u.col(j) = -out.u.col(j);
      out.v.col(j) = -out.v.col(j);
    }
  }
  return out;
}

}  // namespace psgd
