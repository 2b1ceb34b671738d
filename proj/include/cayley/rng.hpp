#pragma once

#include <string_view>

#include "cayley/common.hpp"

// Deterministic randomness. Everything derives from a single root seed via
// named streams, so any component can be re-run in isolation and reproduce
// the exact byte stream it saw inside a larger run. No std:: distributions
// are used anywhere: their output is implementation-defined, and results
// here must be bit-identical across standard libraries.

namespace cayley {

// Finalizer from splitmix64; full-avalanche 64-bit mixer.
constexpr u64 mix64(u64 x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct SplitMix64 {
  u64 state = 0;

  constexpr explicit SplitMix64(u64 seed = 0) : state(seed) {}

  constexpr u64 next() {
    state += 0x9e3779b97f4a7c15ull;
    u64 x = state;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  u64 bounded(u64 bound) {
    if (bound == 0) throw NumericError("SplitMix64::bounded: bound must be positive");
    while (true) {
      u64 x = next();
      __uint128_t m = static_cast<__uint128_t>(x) * bound;
      u64 lo = static_cast<u64>(m);
      if (lo >= bound || lo >= (0 - bound) % bound) return static_cast<u64>(m >> 64);
    }
  }

  // Uniform in [0, 1) with 24 bits of precision; enough for weight init.
  float uniform_float() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

  // Uniform in [-a, a].
  float symmetric_float(float a) { return (2.0f * uniform_float() - 1.0f) * a; }

  double uniform_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

// Named seed derivation: hashes (root, tag, index) into a new 64-bit seed.
// Distinct tags give statistically independent streams.
inline u64 derive_seed(u64 root, std::string_view tag, u64 index = 0) {
  u64 h = mix64(root ^ 0x6a09e667f3bcc908ull);
  for (unsigned char c : tag) h = mix64(h ^ c);
  h = mix64(h ^ mix64(index));
  return h;
}

// Seeded hash of a byte buffer (8 bytes per mix round, zero-padded tail).
// Used for state hashing everywhere; quality over speed is fine here because
// collisions cost correctness-adjacent retries, not just time.
inline u64 hash_bytes(const void* data, size_t len, u64 seed) {
  const u8* p = static_cast<const u8*>(data);
  u64 h = mix64(seed ^ (0x9e3779b97f4a7c15ull + len));
  size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    u64 w;
    __builtin_memcpy(&w, p + i, 8);
    h = mix64(h ^ w);
  }
  if (i < len) {
    u64 w = 0;
    __builtin_memcpy(&w, p + i, len - i);
    h = mix64(h ^ w);
  }
  return h;
}

}  // namespace cayley
