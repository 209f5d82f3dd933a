#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace safe {

/// Seeded pseudo-random stream.
///
/// Uniform bits come from std::mt19937_64, whose output sequence is fixed by
/// the standard. Gaussian samples use the Box-Muller transform implemented
/// here rather than std::normal_distribution, so the sample stream does not
/// depend on the standard library vendor. Independent sub-streams are keyed
/// with derive(), which mixes a path of integers into a new seed via
/// splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n) without modulo bias. n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal sample.
  double normal();

  /// Seed of the sub-stream addressed by `path` under `seed`.
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);
  Rng fork(std::initializer_list<std::uint64_t> path) const { return Rng(derive(seed_, path)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by Rng::below.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
  }
}

}  // namespace safe
