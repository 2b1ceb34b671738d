#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "cayley/puzzle.hpp"
#include "cayley/rng.hpp"

// Exact breadth-first search over a puzzle's reachable states. This is the
// ground-truth oracle the learned components are judged against, so it is
// deliberately simple: packed states in a flat open-addressing map, serial
// level-by-level expansion, and hard memory budgets with actionable errors.

namespace cayley {

// Flat hash map from packed states to (index, depth). States pack at 5 bits
// per label when num_labels <= 32, else 8; packed keys live in one arena in
// insertion order, so BFS levels are contiguous index ranges.
class PackedStateMap {
 public:
  PackedStateMap() = default;  // empty sentinel; insert requires the real ctor
  PackedStateMap(int n, u16 num_labels, u64 mem_budget);

  static int bits_for(u16 num_labels) { return num_labels <= 32 ? 5 : 8; }
  int words() const { return words_; }

  void pack(const u8* labels, u64* out) const;
  void unpack(u64 idx, u8* labels) const;

  // Inserts at the given depth unless present; returns (index, inserted).
  // Throws CapacityError when the memory budget would be exceeded.
  std::pair<u64, bool> insert(const u8* labels, u8 depth);
  // Index of a state, or -1.
  i64 find(const u8* labels) const;

  u64 size() const { return count_; }
  u8 depth(u64 idx) const { return depths_[idx]; }
  u64 bytes() const;

 private:
  u64 hash_key(const u64* key) const;
  void grow();

  int n_ = 0;
  int bits_ = 0, words_ = 0;
  u64 budget_ = 0;
  std::vector<u64> arena_;
  std::vector<u8> depths_;
  std::vector<u32> slots_;  // entry index + 1; 0 = empty
  u64 mask_ = 0;
  u64 count_ = 0;
};

struct EnumerateOptions {
  // Explore only to this depth when >= 0 (the table is then marked partial).
  int depth_limit = -1;
  u64 mem_budget = u64(3500) * 1000 * 1000;
};

struct DistanceTable {
  int n = 0;
  u16 num_labels = 0;
  PackedStateMap map;
  std::vector<u64> histogram;  // histogram[d] = number of states at depth d
  int diameter = 0;
  double mean_depth = 0.0;
  bool complete = false;  // false when a depth_limit cut the search short

  u64 size() const { return map.size(); }
  std::optional<int> lookup(const StateVector& s) const;
  StateVector state(u64 idx) const;
  int depth(u64 idx) const { return map.depth(idx); }

  // Uniform over all enumerated states.
  StateVector sample_state(SplitMix64& rng) const;

  // Binary dump of sorted (64-bit state hash, depth) pairs; the hash seed is
  // recorded in the header. CSV is "depth,count" per row.
  void dump(const std::string& path, u64 hash_seed) const;
  void write_histogram_csv(const std::string& path) const;
};

// Full (or depth-limited) BFS from the solved state.
DistanceTable enumerate(const PuzzleDef& def, const EnumerateOptions& opts = {});

// Exact distance from `start` to solved via bidirectional level-synchronous
// BFS; far cheaper than enumerate for single states. Throws Error when the
// state is not reachable, CapacityError when the budget is hit first.
int optimal_length(const PuzzleDef& def, const StateVector& start,
                   u64 mem_budget = u64(3500) * 1000 * 1000);

}  // namespace cayley
