#include "cayley/perm.hpp"

#include <cstring>
#include <string>

namespace cayley {

bool is_permutation(const std::vector<u16>& map) {
  size_t n = map.size();
  std::vector<bool> seen(n, false);
  for (u16 v : map) {
    if (v >= n || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

Permutation compose(const Permutation& p, const Permutation& q) {
  if (p.size() != q.size())
    throw DimensionError("compose: size mismatch (" + std::to_string(p.size()) + " vs " +
                         std::to_string(q.size()) + ")");
  Permutation r;
  r.map.resize(p.size());
  for (size_t i = 0; i < p.size(); ++i) r.map[i] = p.map[q.map[i]];
  return r;
}

Permutation inverse(const Permutation& p) {
  Permutation r;
  r.map.resize(p.size());
  for (size_t i = 0; i < p.size(); ++i) r.map[p.map[i]] = static_cast<u16>(i);
  return r;
}

StateVector apply(const Permutation& p, const StateVector& s) {
  if (p.size() != s.size())
    throw DimensionError("apply: permutation size " + std::to_string(p.size()) +
                         " vs state size " + std::to_string(s.size()));
  StateVector out;
  out.num_labels = s.num_labels;
  out.labels.resize(s.size());
  apply_into(p, s.labels.data(), out.labels.data());
  return out;
}

std::vector<float> encode(const StateVector& s, EncodeMode mode) {
  std::vector<float> out(feature_dim(static_cast<i64>(s.size()), s.num_labels, mode), 0.0f);
  if (mode == EncodeMode::Raw) {
    for (size_t i = 0; i < s.size(); ++i) out[i] = static_cast<float>(s.labels[i]);
  } else {
    for (size_t i = 0; i < s.size(); ++i) {
      if (s.labels[i] >= s.num_labels)
        throw DimensionError("encode: label " + std::to_string(s.labels[i]) + " at position " +
                             std::to_string(i) + " exceeds num_labels " +
                             std::to_string(s.num_labels));
      out[i * s.num_labels + s.labels[i]] = 1.0f;
    }
  }
  return out;
}

void encode_into_u8(const StateVector& s, EncodeMode mode, u8* dst) {
  if (mode == EncodeMode::Raw) {
    std::memcpy(dst, s.labels.data(), s.size());
    return;
  }
  std::memset(dst, 0, s.size() * s.num_labels);
  for (size_t i = 0; i < s.size(); ++i) dst[i * s.num_labels + s.labels[i]] = 1;
}

}  // namespace cayley
