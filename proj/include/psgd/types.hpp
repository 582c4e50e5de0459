#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace psgd {

// Dense row-major matrices of a given scalar; the simulator runs everything
// in double precision.
template <typename Scalar>
using DenseMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = DenseMatrix<double>;
using Vector = DenseVector<double>;
using Index = Eigen::Index;

// Which update rule the trainer runs. PowerSgd compresses with a single
// power-iteration step every iteration, PowerSgdPlus replaces that step by a
// truncated SVD of the averaged update every tau-th iteration, and
// Uncompressed transmits raw updates.
enum class Schedule { kPowerSgd, kPowerSgdPlus, kUncompressed };

std::string schedule_name(Schedule s);
Schedule schedule_from_name(const std::string& name);

// Raised when an iterative numerical kernel fails to converge or an input
// violates a numeric precondition that is not a plain usage error.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

// User-supplied matrices must be finite; throws std::invalid_argument.
template <typename Scalar>
void require_finite(const DenseMatrix<Scalar>& a, const char* what) {
  if (!a.allFinite()) {
    throw std::invalid_argument(std::string(what) +
                                ": matrix has non-finite entries");
  }
}

}  // namespace psgd
