#pragma once

#include <cmath>
#include <cstdint>

namespace psgd {

// Counter-based random stream keyed by (master_seed, stream_id).
//
// The generator is SplitMix64 over a per-stream state derived from the key,
// so the k-th raw draw of a stream depends only on (master_seed, stream_id,
// k). This keeps every run bit-reproducible regardless of how node loops are
// ordered, and the sequence is stable across platforms and versions because
// no standard-library distribution is involved.
//
// Stream ids 0..N-1 belong to the simulated nodes. Ids >= 0xFFFF0000 are
// reserved for auxiliary streams (basis initialization, target generation,
// probes); see the named constants below.
class StreamRng {
 public:
  StreamRng(std::uint64_t master_seed, std::uint32_t stream_id)
      : state_(mix(master_seed ^
                   (0x9E3779B97F4A7C15ULL * (std::uint64_t(stream_id) + 1)))) {}

  // Next raw 64-bit draw (SplitMix64).
  std::uint64_t raw() {
    ++draws_;
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    return mix(z);
  }

  // Uniform double in [0, 1), 53 random bits. Consumes one raw draw.
  double uniform() { return double(raw() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes exactly two raw draws.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  // Rademacher draw, +1 or -1 with equal probability; consumes one raw draw.
  int sign() { return (raw() >> 63) ? 1 : -1; }

  // Number of raw draws consumed so far.
  std::uint64_t draws() const { return draws_; }

  static constexpr std::uint32_t kBasisInitStream = 0xFFFFFFFFu;
  static constexpr std::uint32_t kTargetStream = 0xFFFFFFFEu;
  static constexpr std::uint32_t kProbeStreamBase = 0xFFFF0000u;

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  std::uint64_t draws_ = 0;
};

}  // namespace psgd
