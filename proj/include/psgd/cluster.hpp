#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "psgd/rng.hpp"
#include "psgd/types.hpp"

namespace psgd {

struct CommEvent {
  std::int64_t step;        // trainer step the charge happened in (-1 outside a run)
  std::string tag;          // e.g. "ssp.p", "svd.delta"
  std::int64_t elements;    // floats sent per node in this reduction
};

// Tracks the simulated communication volume: cumulative floats communicated
// per node, plus an event log. Counts are integers, so totals are exact.
class CommAccountant {
 public:
  void begin_step(std::int64_t step) { step_ = step; }

  void charge(const std::string& tag, std::int64_t elements) {
    detail::require(elements >= 0, "CommAccountant: negative charge");
    total_ += elements;
    events_.push_back(CommEvent{step_, tag, elements});
  }

  std::int64_t total() const { return total_; }
  const std::vector<CommEvent>& events() const { return events_; }

 private:
  std::int64_t total_ = 0;
  std::int64_t step_ = -1;
  std::vector<CommEvent> events_;
};

// Per-node trainer state: the node id, the error-feedback residual carried
// between steps, and the node's private random stream.
struct NodeState {
  int node_id;
  Matrix error;
  StreamRng rng;

  NodeState(int id, Index rows, Index cols, std::uint64_t master_seed)
      : node_id(id),
        error(Matrix::Zero(rows, cols)),
        rng(master_seed, std::uint32_t(id)) {}
};

// Entrywise mean of one equally shaped tensor per node. Summation runs in
// ascending node-id order so results are bit-reproducible, and the
// accountant is charged rows*cols floats once (per-node all-reduce payload).
Matrix all_reduce_mean(std::span<const Matrix> tensors, CommAccountant& comm,
                       const std::string& tag);

// Average floats communicated per node per iteration under `schedule`. The
// periodic-SVD schedule amortizes exactly: ((tau-1)(mr+nr) + (mn+nr)) / tau.
double expected_comm_per_iteration(Schedule schedule, Index m, Index n,
                                   Index r, Index tau);

// The commonly quoted simplification of the same budget, nr + mr + mn/tau
// for the periodic-SVD schedule; reported alongside the exact value.
double simplified_comm_per_iteration(Schedule schedule, Index m, Index n,
                                     Index r, Index tau);

// Exact total floats per node after `steps` iterations under `schedule`.
std::int64_t expected_comm_total(Schedule schedule, Index m, Index n, Index r,
                                 Index tau, std::int64_t steps);

}  // namespace psgd
