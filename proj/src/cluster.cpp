#include "psgd/cluster.hpp"

namespace psgd {

std::string schedule_name(Schedule s) {
  switch (s) {
    case Schedule::kPowerSgd:
      return "powersgd";
    case Schedule::kPowerSgdPlus:
      return "powersgd_plus";
    case Schedule::kUncompressed:
      return "uncompressed";
  }
  throw std::invalid_argument("schedule_name: unknown schedule");
}

Schedule schedule_from_name(const std::string& name) {
  if (name == "powersgd") return Schedule::kPowerSgd;
  if (name == "powersgd_plus") return Schedule::kPowerSgdPlus;
  if (name == "uncompressed") return Schedule::kUncompressed;
  throw std::invalid_argument("unknown schedule: " + name);
}

Matrix all_reduce_mean(std::span<const Matrix> tensors, CommAccountant& comm,
                       const std::string& tag) {
  detail::require(!tensors.empty(), "all_reduce_mean: no tensors");
  const Index rows = tensors[0].rows();
  const Index cols = tensors[0].cols();
  for (const Matrix& t : tensors) {
    detail::require(t.rows() == rows && t.cols() == cols,
                    "all_reduce_mean: shape mismatch across nodes");
  }
  Matrix sum = tensors[0];
  for (std::size_t i = 1; i < tensors.size(); ++i) {
    sum += tensors[i];
  }
  comm.charge(tag, std::int64_t(rows) * std::int64_t(cols));
  return sum / double(tensors.size());
}

double expected_comm_per_iteration(Schedule schedule, Index m, Index n,
                                   Index r, Index tau) {
  detail::require(m > 0 && n > 0 && r > 0 && tau > 0,
                  "expected_comm_per_iteration: dimensions must be positive");
  const double mr = double(m) * double(r);
  const double nr = double(n) * double(r);
  const double mn = double(m) * double(n);
  switch (schedule) {
    case Schedule::kPowerSgd:
      return mr + nr;
    case Schedule::kPowerSgdPlus:
      return (double(tau - 1) * (mr + nr) + (mn + nr)) / double(tau);
    case Schedule::kUncompressed:
      return mn;
  }
  throw std::invalid_argument("expected_comm_per_iteration: unknown schedule");
}

double simplified_comm_per_iteration(Schedule schedule, Index m, Index n,
                                     Index r, Index tau) {
  detail::require(m > 0 && n > 0 && r > 0 && tau > 0,
                  "simplified_comm_per_iteration: dimensions must be positive");
  const double mr = double(m) * double(r);
  const double nr = double(n) * double(r);
  const double mn = double(m) * double(n);
  switch (schedule) {
    case Schedule::kPowerSgd:
      return mr + nr;
    case Schedule::kPowerSgdPlus:
      return nr + mr + mn / double(tau);
    case Schedule::kUncompressed:
      return mn;
  }
  throw std::invalid_argument("simplified_comm_per_iteration: unknown schedule");
}

std::int64_t expected_comm_total(Schedule schedule, Index m, Index n, Index r,
                                 Index tau, std::int64_t steps) {
  detail::require(steps >= 0, "expected_comm_total: negative step count");
  detail::require(m > 0 && n > 0 && r > 0 && tau > 0,
                  "expected_comm_total: dimensions must be positive");
  const std::int64_t mr = std::int64_t(m) * r;
  const std::int64_t nr = std::int64_t(n) * r;
  const std::int64_t mn = std::int64_t(m) * n;
  switch (schedule) {
    case Schedule::kPowerSgd:
      return steps * (mr + nr);
    case Schedule::kPowerSgdPlus: {
      const std::int64_t svd_steps = (steps + tau - 1) / tau;  // ceil(T/tau)
      return svd_steps * (mn + nr) + (steps - svd_steps) * (mr + nr);
    }
    case Schedule::kUncompressed:
      return steps * mn;
  }
  throw std::invalid_argument("expected_comm_total: unknown schedule");
}

}  // namespace psgd
