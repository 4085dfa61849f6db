#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace alba {

// splitmix64 stream. Deliberately self-contained: std:: distributions are
// implementation-defined, and corpus generation must be byte-identical for a
// given seed on every machine running the same build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  float uniform_f(float lo, float hi) {
    return static_cast<float>(uniform(static_cast<double>(lo), static_cast<double>(hi)));
  }

  // Box-Muller; two u64 draws per sample, no cached state.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  float normal_f() { return static_cast<float>(normal()); }

  // Uniform index in [0, n). Modulo bias is irrelevant at the n we use.
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// Derives an independent stream for (seed, key); used to key speaker and token
// specs off the corpus seed.
inline Rng keyed_rng(std::uint64_t seed, std::string_view key) {
  Rng mix(seed ^ fnv1a64(key));
  // burn a couple of outputs so nearby seeds decorrelate
  mix.next_u64();
  mix.next_u64();
  return mix;
}

}  // namespace alba
