#pragma once

#include <cstdint>
#include <string_view>

namespace exposure {

/// SplitMix64 (Steele, Lea & Flood). Portable and fully specified, so every
/// implementation of the toolkit draws the same numbers for the same seed.
class SplitMix64 {
 public:
  static constexpr std::string_view kName = "splitmix64";

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by rejection, bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % bound;
  }

  bool coin() noexcept { return (next() >> 63) != 0; }

 private:
  std::uint64_t state_;
};

/// FNV-1a 64 over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xCBF29CE484222325ULL) noexcept;

/// Per-dialogue stream key: hash(global_seed, id, purpose). Choices for a
/// dialogue depend only on these three values, never on iteration order.
std::uint64_t stream_key(std::uint64_t seed, std::string_view id, std::string_view purpose) noexcept;

inline SplitMix64 stream_for(std::uint64_t seed, std::string_view id, std::string_view purpose) noexcept {
  return SplitMix64(stream_key(seed, id, purpose));
}

/// First uniform draw of a keyed stream.
inline double keyed_uniform(std::uint64_t seed, std::string_view id, std::string_view purpose) noexcept {
  return stream_for(seed, id, purpose).uniform();
}

}  // namespace exposure
