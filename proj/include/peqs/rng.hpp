#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace peqs {

/// SplitMix64 finalizer (Stafford variant 13). This mixer is frozen: every
/// recorded seed lineage depends on these exact constants.
inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Folds a list of identifiers into one key. The fold is ordered, so
/// derive_key({a,b}) and derive_key({b,a}) are unrelated streams.
inline std::uint64_t derive_key(std::initializer_list<std::uint64_t> ids) noexcept {
  std::uint64_t k = 0x243F6A8885A308D3ull;
  for (std::uint64_t id : ids) {
    k = mix64(k + 0x9E3779B97F4A7C15ull) ^ mix64(id + 0x7F4A7C15F39CC060ull);
  }
  return mix64(k);
}

/// Counter-based stream: the n-th draw is a pure function of (key, n), so
/// streams for distinct keys can be generated in any order, on any worker,
/// with bit-identical results.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : state_(key) {}

  std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  /// Uniform draw in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace peqs
