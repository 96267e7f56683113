#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace flicker {

/// SplitMix64 finalizer; used to derive independent per-iteration seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for iteration `index` of a stream rooted at `master`. Depends only on
/// (master, index), so results do not change with the number of worker threads.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Stream tags keep the seeds of different pipeline stages apart.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
  return derive_seed(derive_seed(master, stream), index);
}

/// Portable random source. std::mt19937_64 output is fully specified by the
/// standard; the distributions below are written out so that draws are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::size_t index(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return static_cast<std::size_t>(r % bound);
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  template <class T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  template <class T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

  /// n draws with replacement from [0, n).
  std::vector<std::size_t> resample_indices(std::size_t n) {
    std::vector<std::size_t> out(n);
    for (auto& v : out) v = index(n);
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace flicker
