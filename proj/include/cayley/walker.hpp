#pragma once

#include <string>
#include <vector>

#include "cayley/puzzle.hpp"

// Training-data generation: non-backtracking random walks from the solved
// state. Walk w at step j yields the sample (state, j), so targets are the
// walk depth, uniformly distributed over 1..k_max. The walk depth is only an
// upper bound on the true distance; the regression target is the expected
// first-visit depth, which is what makes beam search rank states correctly.

namespace cayley {

struct WalkConfig {
  int k_max = 26;
  i64 num_walks = 1;
  u64 seed = 0;
  // Never play the inverse of the previous move. Keeps walks from stalling
  // near the start and sharpens the depth signal.
  bool non_backtracking = true;
  EncodeMode encode = EncodeMode::OneHot;
  bool record_moves = false;  // keep per-sample move indices (tests, audits)
};

struct TrainBatch {
  i64 num_samples = 0;
  i64 feature_dim = 0;
  int n = 0;  // positions per state
  std::vector<u8> features;  // num_samples x feature_dim; 0/1 bytes (one-hot) or labels (raw)
  std::vector<u16> targets;  // num_samples; depth in moves, 1..k_max
  std::vector<u8> states;    // num_samples x n raw labels; feeds the sparse kernels
  std::vector<u16> moves;    // num_samples when record_moves, else empty
};

// Deterministic in cfg.seed: walk w draws from its own stream derived as
// (seed, "walk", w), so batches are identical for any scheduling.
TrainBatch generate(const PuzzleDef& def, const WalkConfig& cfg);

// Fresh batch per epoch; epoch e uses seed derive_seed(cfg.seed, "epoch", e),
// so any epoch can be regenerated in isolation.
class EpochStream {
 public:
  EpochStream(const PuzzleDef& def, const WalkConfig& cfg) : def_(&def), cfg_(cfg) {}
  TrainBatch batch_for_epoch(i64 epoch) const;
  TrainBatch next() { return batch_for_epoch(next_epoch_++); }

 private:
  const PuzzleDef* def_;
  WalkConfig cfg_;
  i64 next_epoch_ = 0;
};

// Binary dump for offline inspection: magic "CBTB", u32 n, u32 feature_dim,
// u64 num_samples, u16 targets, u8 features; little-endian throughout.
void dump_batch(const TrainBatch& batch, const std::string& path);
TrainBatch load_batch(const std::string& path, EncodeMode encode, u16 num_labels);

}  // namespace cayley
