#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace prognosis {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

/// Seed for a named sub-stream, e.g. derive_seed(seed, 3, 1) for split (3, 1).
template <typename... Ints>
std::uint64_t derive_seed(std::uint64_t seed, Ints... parts) noexcept {
  std::uint64_t h = mix_seed(seed);
  ((h = mix_seed(h ^ (static_cast<std::uint64_t>(parts) + 0x9e3779b97f4a7c15ULL))), ...);
  return h;
}

/// Portable sampling helpers on top of mt19937_64 (the standard library's
/// distributions are implementation-defined, which would break cross-build
/// reproducibility of datasets and splits).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  double exponential();

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace prognosis
