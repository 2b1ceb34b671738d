#pragma once

#include <vector>

#include "cayley/common.hpp"

// Permutations, labeled states, and feature encoding.
//
// Conventions (fixed across the whole project):
//  * A Permutation is stored gather-style: after applying p to a state s,
//    position i shows the label that s had at position p.map[i]:
//        apply(p, s)[i] == s[p.map[i]]
//  * compose(p, q) is "p then q": applying the composite equals applying p
//    first and q second, which in gather form is
//        compose(p, q).map[i] == p.map[q.map[i]]

namespace cayley {

struct Permutation {
  std::vector<u16> map;

  size_t size() const { return map.size(); }
  bool operator==(const Permutation&) const = default;

  static Permutation identity(size_t n) {
    Permutation p;
    p.map.resize(n);
    for (size_t i = 0; i < n; ++i) p.map[i] = static_cast<u16>(i);
    return p;
  }
  bool is_identity() const {
    for (size_t i = 0; i < map.size(); ++i)
      if (map[i] != i) return false;
    return true;
  }
};

// True iff map is a bijection on [0, n).
bool is_permutation(const std::vector<u16>& map);

Permutation compose(const Permutation& p, const Permutation& q);
Permutation inverse(const Permutation& p);

// Labels on n positions; num_labels tracks the alphabet size (labels are
// validated to be < num_labels when states enter through parsers). The
// alphabet is capped at 256 so states pack one byte per position.
struct StateVector {
  std::vector<u8> labels;
  u16 num_labels = 0;

  size_t size() const { return labels.size(); }
  bool operator==(const StateVector&) const = default;
};

StateVector apply(const Permutation& p, const StateVector& s);

// Raw-buffer form used by hot loops; in and out must not alias.
inline void apply_into(const Permutation& p, const u8* in, u8* out) {
  const u16* m = p.map.data();
  size_t n = p.map.size();
  for (size_t i = 0; i < n; ++i) out[i] = in[m[i]];
}

enum class EncodeMode { OneHot, Raw };

// Feature width of an encoded state.
inline i64 feature_dim(i64 n, i64 num_labels, EncodeMode mode) {
  return mode == EncodeMode::OneHot ? n * num_labels : n;
}

// One-hot: n blocks of num_labels entries, block i has a single 1 at the
// label of position i. Raw: the label values themselves, in position order
// (for pure Cayley graphs where labels are already a permutation).
std::vector<float> encode(const StateVector& s, EncodeMode mode);

// Same encoding written as bytes into dst (size feature_dim(...)); one-hot
// blocks are 0/1 bytes. Used to build training batches without float blowup.
void encode_into_u8(const StateVector& s, EncodeMode mode, u8* dst);

}  // namespace cayley
