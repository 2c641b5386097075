#include "skm/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace skm {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = mix64(seed ^ mix64(stream * 0xD6E8FEB86659FD93ULL + 1));
  h = mix64(h ^ (a * 0xA0761D6478BD642FULL));
  h = mix64(h ^ (b * 0xE7037ED1A0B428DBULL + 0x8EBC6AF09C88C6E3ULL));
  return h;
}

double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

namespace {
double box_muller(std::uint64_t h1, std::uint64_t h2) {
  const double u1 = to_open_unit(h1);
  const double u2 = to_unit(h2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}
}  // namespace

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                      std::uint64_t b) {
  return box_muller(counter_hash(seed, stream, a, 2 * b),
                    counter_hash(seed, stream, a, 2 * b + 1));
}

std::uint64_t counter_below(std::uint64_t bound, std::uint64_t seed,
                            std::uint64_t stream, std::uint64_t a) {
  if (bound == 0) throw std::invalid_argument("counter_below: bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t x = counter_hash(seed, stream, a, attempt);
    const unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) {
      return static_cast<std::uint64_t>(m >> 64);
    }
  }
}

double Rng::normal() {
  const std::uint64_t h1 = next_u64();
  const std::uint64_t h2 = next_u64();
  return box_muller(h1, h2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) {
      return static_cast<std::uint64_t>(m >> 64);
    }
  }
}

std::vector<std::uint64_t> Rng::permutation(std::uint64_t n) {
  std::vector<std::uint64_t> p(n);
  for (std::uint64_t i = 0; i < n; ++i) p[i] = i;
  for (std::uint64_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[below(i)]);
  }
  return p;
}

std::vector<std::uint64_t> Rng::sample_without_replacement(std::uint64_t n,
                                                           std::uint64_t k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::uint64_t> p(n);
  for (std::uint64_t i = 0; i < n; ++i) p[i] = i;
  // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
  for (std::uint64_t i = 0; i < k; ++i) {
    std::swap(p[i], p[i + below(n - i)]);
  }
  p.resize(k);
  std::sort(p.begin(), p.end());
  return p;
}

std::uint64_t Rng::derive_seed(std::uint64_t base, std::uint64_t index) {
  return counter_hash(base, 0x5EED5EED5EED5EEDULL, index, 0);
}

}  // namespace skm
