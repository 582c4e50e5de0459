#include "psgd/compressors.hpp"

#include <algorithm>
#include <vector>

#include "psgd/numkernel.hpp"
#include "psgd/rng.hpp"

namespace psgd {

namespace {

void check_deltas(std::span<const Matrix> deltas, Index rank) {
  detail::require(!deltas.empty(), "compress: no node updates");
  const Index m = deltas[0].rows();
  const Index n = deltas[0].cols();
  detail::require(m >= n, "compress: updates must have rows >= cols");
  detail::require(rank >= 1 && rank <= n, "compress: rank must be in [1, cols]");
  for (const Matrix& d : deltas) {
    detail::require(d.rows() == m && d.cols() == n,
                    "compress: update shape mismatch across nodes");
    require_finite(d, "compress");
  }
}

// Right-factor step shared by the power and SVD paths: per-node n x r
// factors against the common left basis, their all-reduce, and the resulting
// approximations.
CompressedUpdate finish_with_left_basis(const Matrix& p_tilde,
                                        std::span<const Matrix> deltas,
                                        CommAccountant& comm,
                                        const std::string& reduce_tag) {
  CompressedUpdate out;
  out.p_tilde = p_tilde;

  std::vector<Matrix> q_local;
  q_local.reserve(deltas.size());
  for (const Matrix& d : deltas) {
    q_local.push_back(d.transpose() * p_tilde);
  }
  out.q_next = all_reduce_mean(q_local, comm, reduce_tag);

  out.per_node_approx.reserve(deltas.size());
  for (const Matrix& q : q_local) {
    out.per_node_approx.push_back(p_tilde * q.transpose());
  }
  out.global_approx = p_tilde * out.q_next.transpose();
  return out;
}

}  // namespace

CompressedUpdate ssp_compress(const Matrix& q_prev,
                              std::span<const Matrix> deltas,
                              CommAccountant& comm, const Matrix* p_prev) {
  check_deltas(deltas, q_prev.cols());
  const Index m = deltas[0].rows();
  const Index n = deltas[0].cols();
  detail::require(q_prev.rows() == n, "ssp_compress: q_prev row count mismatch");
  require_finite(q_prev, "ssp_compress");
  if (p_prev != nullptr) {
    detail::require(p_prev->rows() == m && p_prev->cols() == q_prev.cols(),
                    "ssp_compress: p_prev shape mismatch");
  }

  std::vector<Matrix> p_local;
  p_local.reserve(deltas.size());
  for (const Matrix& d : deltas) {
    p_local.push_back(d * q_prev);
  }
  const Matrix p = all_reduce_mean(p_local, comm, "ssp.p");
  const Matrix p_tilde = qr_economic(p, p_prev);

  return finish_with_left_basis(p_tilde, deltas, comm, "ssp.q");
}

CompressedUpdate svd_compress(std::span<const Matrix> deltas, Index rank,
                              CommAccountant& comm) {
  check_deltas(deltas, rank);

  const Matrix mean_delta = all_reduce_mean(deltas, comm, "svd.delta");
  const ThinSvd<double> svd = thin_svd(mean_delta);
  const Matrix p_tilde = svd.u.leftCols(rank);

  return finish_with_left_basis(p_tilde, deltas, comm, "svd.q");
}

CompressedUpdate identity_compress(std::span<const Matrix> deltas,
                                   CommAccountant& comm) {
  detail::require(!deltas.empty(), "identity_compress: no node updates");
  const Index m = deltas[0].rows();
  const Index n = deltas[0].cols();
  for (const Matrix& d : deltas) {
    detail::require(d.rows() == m && d.cols() == n,
                    "identity_compress: update shape mismatch across nodes");
    require_finite(d, "identity_compress");
  }

  CompressedUpdate out;
  out.q_next = Matrix(n, 0);
  out.p_tilde = Matrix::Identity(m, m);
  out.per_node_approx.assign(deltas.begin(), deltas.end());
  out.global_approx = all_reduce_mean(deltas, comm, "identity.delta");
  return out;
}

double contractive_check(const CompressorKind& kind, const Matrix& w,
                         int trials, std::uint64_t seed) {
  detail::require(trials >= 1, "contractive_check: trials must be >= 1");
  const double w_sq = frobenius_sq(w);
  if (w_sq == 0.0) return 0.0;

  const Matrix deltas[1] = {w};
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    CommAccountant scratch;
    CompressedUpdate upd;
    switch (kind.family) {
      case CompressorFamily::kSsp: {
        StreamRng rng(seed, StreamRng::kProbeStreamBase + std::uint32_t(t));
        Matrix q_prev(w.cols(), kind.rank);
        for (Index i = 0; i < q_prev.rows(); ++i) {
          for (Index j = 0; j < q_prev.cols(); ++j) {
            q_prev(i, j) = rng.normal();
          }
        }
        upd = ssp_compress(q_prev, deltas, scratch);
        break;
      }
      case CompressorFamily::kSvd:
        upd = svd_compress(deltas, kind.rank, scratch);
        break;
      case CompressorFamily::kIdentity:
        upd = identity_compress(deltas, scratch);
        break;
    }
    const double err = frobenius_sq((upd.global_approx - w).eval());
    worst = std::max(worst, err / w_sq);
  }
  return worst;
}

}  // namespace psgd
