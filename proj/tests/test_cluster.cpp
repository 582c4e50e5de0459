#include "psgd/cluster.hpp"

#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "psgd/types.hpp"

using psgd::CommAccountant;
using psgd::Index;
using psgd::Matrix;
using psgd::Schedule;

TEST_CASE("schedule names round-trip") {
  CHECK(psgd::schedule_name(Schedule::kPowerSgd) == "powersgd");
  CHECK(psgd::schedule_name(Schedule::kPowerSgdPlus) == "powersgd_plus");
  CHECK(psgd::schedule_name(Schedule::kUncompressed) == "uncompressed");
  for (Schedule s : {Schedule::kPowerSgd, Schedule::kPowerSgdPlus,
                     Schedule::kUncompressed}) {
    CHECK(psgd::schedule_from_name(psgd::schedule_name(s)) == s);
  }
  CHECK_THROWS_AS((void)psgd::schedule_from_name("powersgd++"),
                  std::invalid_argument);
}

TEST_CASE("all_reduce_mean on a fixed pair") {
  Matrix a(1, 1), b(1, 1);
  a(0, 0) = 1.0;
  b(0, 0) = 2.0;
  const std::vector<Matrix> xs = {a, b};
  CommAccountant comm;
  comm.begin_step(7);
  const Matrix mean = psgd::all_reduce_mean(xs, comm, "test.pair");
  CHECK(mean(0, 0) == doctest::Approx(1.5).epsilon(1e-16));
  CHECK(comm.total() == 1);
  REQUIRE(comm.events().size() == 1);
  CHECK(comm.events()[0].tag == "test.pair");
  CHECK(comm.events()[0].step == 7);
  CHECK(comm.events()[0].elements == 1);
}

TEST_CASE("all_reduce_mean is bit-deterministic and near the compensated mean") {
  std::mt19937_64 gen(31337);
  for (int t = 0; t < 100; ++t) {
    std::vector<Matrix> xs;
    const int n = 2 + int(gen() % 7);
    for (int i = 0; i < n; ++i) xs.push_back(oracles::random_matrix(gen, 5, 4));

    CommAccountant c1, c2;
    const Matrix m1 = psgd::all_reduce_mean(xs, c1, "t");
    const Matrix m2 = psgd::all_reduce_mean(xs, c2, "t");
    CHECK(std::memcmp(m1.data(), m2.data(),
                      sizeof(double) * std::size_t(m1.size())) == 0);
    CHECK(c1.total() == 20);

    const Matrix ref = oracles::kahan_mean(xs);
    CHECK((m1 - ref).norm() <= 1e-12 * (1.0 + ref.norm()));
  }
}

TEST_CASE("all_reduce_mean validation") {
  CommAccountant comm;
  const std::vector<Matrix> empty;
  CHECK_THROWS_AS((void)psgd::all_reduce_mean(empty, comm, "t"),
                  std::invalid_argument);
  const std::vector<Matrix> ragged = {Matrix::Zero(2, 2), Matrix::Zero(2, 3)};
  CHECK_THROWS_AS((void)psgd::all_reduce_mean(ragged, comm, "t"),
                  std::invalid_argument);
}

TEST_CASE("accountant rejects negative charges") {
  CommAccountant comm;
  CHECK_THROWS_AS(comm.charge("bad", -1), std::invalid_argument);
  comm.charge("ok", 3);
  comm.charge("ok", 4);
  CHECK(comm.total() == 7);
}

TEST_CASE("per-iteration communication of each schedule") {
  // m=8, n=4, r=2: factors cost mr + nr = 24, a raw update costs mn = 32.
  CHECK(psgd::expected_comm_per_iteration(Schedule::kPowerSgd, 8, 4, 2, 1) ==
        doctest::Approx(24.0).epsilon(1e-16));
  CHECK(psgd::expected_comm_per_iteration(Schedule::kUncompressed, 8, 4, 2, 1) ==
        doctest::Approx(32.0).epsilon(1e-16));
  // Periodic SVD with tau=4: three power steps at 24 plus one SVD step at
  // mn + nr = 40, averaged: 112/4 = 28.
  CHECK(psgd::expected_comm_per_iteration(Schedule::kPowerSgdPlus, 8, 4, 2, 4) ==
        doctest::Approx(28.0).epsilon(1e-16));
  // The simplified form nr + mr + mn/tau over-counts slightly: 8+16+8 = 32.
  CHECK(psgd::simplified_comm_per_iteration(Schedule::kPowerSgdPlus, 8, 4, 2, 4) ==
        doctest::Approx(32.0).epsilon(1e-16));
  CHECK(psgd::simplified_comm_per_iteration(Schedule::kPowerSgd, 8, 4, 2, 4) ==
        doctest::Approx(24.0).epsilon(1e-16));
}

TEST_CASE("total communication is exact over a horizon") {
  CHECK(psgd::expected_comm_total(Schedule::kPowerSgd, 8, 4, 2, 1, 100) == 2400);
  CHECK(psgd::expected_comm_total(Schedule::kPowerSgdPlus, 8, 4, 2, 4, 100) ==
        2800);
  // 101 steps: ceil(101/4) = 26 SVD steps, 75 power steps.
  CHECK(psgd::expected_comm_total(Schedule::kPowerSgdPlus, 8, 4, 2, 4, 101) ==
        26 * 40 + 75 * 24);
  CHECK(psgd::expected_comm_total(Schedule::kUncompressed, 8, 4, 2, 1, 100) ==
        3200);
  CHECK(psgd::expected_comm_total(Schedule::kPowerSgd, 8, 4, 2, 1, 0) == 0);
}
