#pragma once

#include <cstdint>
#include <span>

#include "psgd/cluster.hpp"
#include "psgd/types.hpp"

namespace psgd {

enum class CompressorFamily { kSsp, kSvd, kIdentity };

// A compressor family together with the target rank r.
struct CompressorKind {
  CompressorFamily family;
  Index rank;
};

// Result of one distributed compression round.
//
//   q_next          next n x r right basis (empty n x 0 for the identity
//                   compressor, which leaves the caller's basis untouched)
//   p_tilde         orthonormal left basis actually used for projection
//                   (m x r; the identity compressor reports I_m)
//   per_node_approx per-node approximations, mean equals global_approx
//   global_approx   approximation of the node-mean update
struct CompressedUpdate {
  Matrix q_next;
  Matrix p_tilde;
  std::vector<Matrix> per_node_approx;
  Matrix global_approx;
};

// Single-step power compression: one power iteration against q_prev, an
// all-reduce of the m x r sketch, orthogonalization, then an all-reduce of
// the n x r right factor. Charges mr + nr floats.
//
// `p_prev` optionally supplies the previous step's left basis. When the
// reduced sketch has (near-)zero columns the power step carries no direction
// of its own; completing from the previous basis keeps the projector
// continuous across such steps instead of jumping to canonical axes. Without
// a hint the deterministic canonical completion applies.
CompressedUpdate ssp_compress(const Matrix& q_prev,
                              std::span<const Matrix> deltas,
                              CommAccountant& comm,
                              const Matrix* p_prev = nullptr);

// Rank-r truncated SVD of the all-reduced mean update: charges mn for the
// mean reduction plus nr for the right-factor reduction.
CompressedUpdate svd_compress(std::span<const Matrix> deltas, Index rank,
                              CommAccountant& comm);

// No compression: the global approximation is the exact all-reduced mean
// (mn floats) and every per-node approximation is the node's own update, so
// error feedback stays zero.
CompressedUpdate identity_compress(std::span<const Matrix> deltas,
                                   CommAccountant& comm);

// Applies the compressor of `kind` to the single matrix w `trials` times and
// returns the largest observed relative squared compression error
// ||C(w) - w||_F^2 / ||w||_F^2 (0 for w = 0). The power compressor draws a
// fresh Gaussian q_prev per trial from `seed`; the other families are
// deterministic in w, making the maximum the common value.
double contractive_check(const CompressorKind& kind, const Matrix& w,
                         int trials, std::uint64_t seed = 0);

}  // namespace psgd
