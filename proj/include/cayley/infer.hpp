#pragma once

#include <vector>

#include "cayley/beam.hpp"
#include "cayley/net.hpp"

// Fast eval-mode scorer over trained models. Single-hidden-layer one-hot
// models take a fused path: the batch norm affine folds into the first
// layer, whose rows are repacked into 16-column panels so the per-state row
// gathers stream through cache instead of thrashing one set. Deeper or
// raw-encoded models fall back to the dense reference forward. Either way
// the scores match ResMLP::predict_states up to float rounding.
//
// The engine keeps a pointer to the model (for the dense path); the model
// must outlive it. Scoring is chunked through parallel_chunks with disjoint
// output ranges, so results are identical at any thread count.

namespace cayley {

class InferenceEngine : public Scorer {
 public:
  explicit InferenceEngine(const ResMLP<float>& model);

  int state_size() const override { return static_cast<int>(cfg_.n_positions); }
  void score(const u8* states, i64 count, float* out) const override;
  bool fused() const { return fused_; }

 private:
  void score_fused(const u8* states, i64 begin, i64 end, float* out) const;
  void score_dense(const u8* states, i64 begin, i64 end, float* out) const;

  const ResMLP<float>* model_;
  ResMLPConfig cfg_;
  bool fused_ = false;
  i64 n1p_ = 0;                // n1 rounded up to whole panels
  std::vector<float> packed_;  // [panel][input row][32], batch-norm folded
  std::vector<float> bias_;    // folded first-layer bias, padded
  std::vector<float> head_;    // head weights, zero-padded
  float head_bias_ = 0.0f;
};

}  // namespace cayley
