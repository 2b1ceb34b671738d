#pragma once

#include <string>
#include <vector>

#include "cayley/bfs.hpp"
#include "cayley/puzzle.hpp"

// Beam search over a puzzle graph guided by a learned (or exact) scorer.
// Each round expands every kept state by every generator, deduplicates the
// children against the current layer and everything kept before, scores the
// survivors, and keeps the `width` best. The goal test runs on every child
// before any deduplication or pruning, so a reachable solved state is never
// discarded by a hash accident or a hostile score.

namespace cayley {

// Maps raw label rows (count x state_size) to scores; lower means closer to
// solved. Implementations must be pure functions of the states.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual int state_size() const = 0;
  virtual void score(const u8* states, i64 count, float* out) const = 0;
};

// Exact-distance scorer backed by a BFS table; unknown states score +inf.
// The reference scorer: beam search under it returns optimal solutions.
class TableScorer : public Scorer {
 public:
  explicit TableScorer(const DistanceTable& table) : table_(&table) {}
  int state_size() const override { return table_->n; }
  void score(const u8* states, i64 count, float* out) const override;

 private:
  const DistanceTable* table_;
};

// 64-bit state fingerprint; seed-keyed, never returns zero.
u64 hash_state(const u8* labels, int n, u64 seed);

// Open-addressing set of nonzero 64-bit fingerprints.
class HashSet64 {
 public:
  explicit HashSet64(u64 expect = 64);
  // h must be nonzero; returns true when freshly inserted.
  bool insert(u64 h);
  bool contains(u64 h) const;
  u64 size() const { return count_; }

 private:
  void grow();
  std::vector<u64> slots_;
  u64 mask_ = 0;
  u64 count_ = 0;
};

struct BeamConfig {
  i64 width = i64(1) << 12;
  int max_steps = 200;
  u64 hash_seed = 0xbea7c0defull;
  // Deduplicate on full states instead of fingerprints. Memory-hungry and
  // slower; exists to prove fingerprint runs match exact runs.
  bool exact_dedup = false;
  bool keep_trace = false;
};

struct StepTrace {
  int step = 0;        // 1-based expansion round
  i64 generated = 0;   // children produced this round
  i64 after_dedup = 0; // children surviving dedup
  i64 kept = 0;        // children kept after pruning to width
  float best = 0.0f;   // best (lowest) kept score
  float worst = 0.0f;  // worst kept score
};

struct BeamResult {
  bool solved = false;
  std::vector<u16> moves;  // generator indices; solves `start` when solved
  int steps_taken = 0;     // expansion rounds run; equals moves.size() on success
  i64 nodes_scored = 0;
  std::vector<StepTrace> trace;  // filled when keep_trace
};

BeamResult beam_search(const PuzzleDef& def, const StateVector& start, const Scorer& scorer,
                       const BeamConfig& cfg);

// Replays result.moves from `start` and checks it lands on solved.
bool verify_result(const PuzzleDef& def, const StateVector& start, const BeamResult& result);

}  // namespace cayley
