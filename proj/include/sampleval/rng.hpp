#pragma once

#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <string_view>

namespace sampleval {

/// SplitMix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a, 64 bit. Used for stable, platform-independent string tags.
constexpr std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

constexpr std::uint64_t tag_word(std::string_view s) noexcept { return hash_string(s); }
constexpr std::uint64_t tag_word(const char* s) noexcept { return hash_string(s); }
template <std::integral T>
constexpr std::uint64_t tag_word(T v) noexcept {
  return static_cast<std::uint64_t>(v);
}
inline std::uint64_t tag_word(double v) noexcept { return std::bit_cast<std::uint64_t>(v); }

}  // namespace detail

/// Counter-based seed derivation: every random stream in the system is named
/// by its parent seed and a tuple of tags (scenario hash, user, purpose...), so
/// draws never depend on scheduling order.
template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t parent, const Tags&... tags) noexcept {
  std::uint64_t s = mix64(parent ^ 0x5851f42d4c957f2dULL);
  ((s = mix64(s ^ mix64(detail::tag_word(tags) + 0x2545f4914f6cdd1dULL))), ...);
  return s;
}

/// Maps a 64-bit word to the open interval (0, 1).
constexpr double to_unit_open(std::uint64_t x) noexcept {
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

/// xoshiro256** seeded through SplitMix64. Satisfies
/// UniformRandomBitGenerator, but callers should use the member helpers: the
/// std:: distributions are not bit-reproducible across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t x = seed;
    for (auto& w : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      w = mix64(x);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on (0, 1).
  double uniform() noexcept { return to_unit_open((*this)()); }

  /// Uniform integer in [0, n); Lemire's nearly-divisionless method.
  std::uint64_t below(std::uint64_t n) noexcept {
    __uint128_t m = static_cast<__uint128_t>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<__uint128_t>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename Container>
  void shuffle(Container& c) noexcept {
    for (std::size_t i = c.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(c[i - 1], c[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace sampleval
