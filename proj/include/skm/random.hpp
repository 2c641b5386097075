#pragma once

#include <cstdint>
#include <vector>

namespace skm {

// Counter-based random numbers built on the SplitMix64 finalizer.
//
// Every draw is a pure function of (seed, stream, a, b), so a sketch entry
// (i, j) can be regenerated independently of generation order. The
// algorithm is fixed: changing it changes every seeded artifact.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t a, std::uint64_t b);

// Maps 64 random bits to [0, 1) with 53 bits of resolution.
double to_unit(std::uint64_t bits);
// Maps 64 random bits to (0, 1).
double to_open_unit(std::uint64_t bits);

// Standard normal from the Box-Muller transform of two counter draws.
double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                      std::uint64_t b);

// Uniform integer in [0, bound) by Lemire's multiply-shift with rejection;
// retries consume consecutive values of the last counter word.
std::uint64_t counter_below(std::uint64_t bound, std::uint64_t seed,
                            std::uint64_t stream, std::uint64_t a);

// Sequential view over a counter stream.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return counter_hash(seed_, stream_, counter_++, 0); }
  double uniform() { return to_unit(next_u64()); }
  double normal();
  std::uint64_t below(std::uint64_t bound);

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<std::uint64_t> permutation(std::uint64_t n);
  // k distinct values of 0..n-1 in increasing order.
  std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n,
                                                        std::uint64_t k);

  // Independent child stream, e.g. one per replicate.
  static std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace skm
