#include "cayley/infer.hpp"

#include <cmath>
#include <cstring>

#include "cayley/parallel.hpp"

namespace cayley {

namespace {
constexpr i64 kPanel = 16;   // columns per packed panel; one 64-byte line / zmm
constexpr i64 kGroup = 8;    // states accumulated together (independent chains)
constexpr i64 kTile = 4096;  // states per scoring chunk
}  // namespace

InferenceEngine::InferenceEngine(const ResMLP<float>& model)
    : model_(&model), cfg_(model.config()) {
  fused_ = cfg_.n2 == 0 && cfg_.encode == EncodeMode::OneHot;
  if (!fused_) return;

  const i64 in = cfg_.input_dim();
  const i64 n1 = cfg_.n1;
  n1p_ = (n1 + kPanel - 1) / kPanel * kPanel;
  const auto& l1 = model.l1();
  const auto& bn = model.bn1();
  const auto& head = model.head();

  // Fold the batch norm affine into the layer: relu(s*(Wx+b) + t) with
  // s = gamma/sqrt(var+eps), t = beta - s*mean becomes relu(Wf*x + bf).
  std::vector<float> scale(n1), shift(n1);
  for (i64 j = 0; j < n1; ++j) {
    double s = bn.gamma.v[j] / std::sqrt(static_cast<double>(bn.running_var[j]) + cfg_.bn_eps);
    scale[j] = static_cast<float>(s);
    shift[j] = static_cast<float>(bn.beta.v[j] - s * bn.running_mean[j]);
  }
  bias_.assign(n1p_, 0.0f);
  head_.assign(n1p_, 0.0f);
  for (i64 j = 0; j < n1; ++j) {
    bias_[j] = l1.b.v[j] * scale[j] + shift[j];
    head_[j] = head.w.v[j];
  }
  head_bias_ = head.b.v[0];

  // Panel packing: panel p holds a 16-column slice of every input row
  // contiguously. A panel is well under L1 size even for wide one-hot inputs,
  // so the row gathers of a whole tile of states hit cache.
  packed_.assign(static_cast<size_t>(n1p_ / kPanel) * in * kPanel, 0.0f);
  for (i64 p = 0; p < n1p_ / kPanel; ++p)
    for (i64 r = 0; r < in; ++r)
      for (i64 c = 0; c < kPanel; ++c) {
        i64 j = p * kPanel + c;
        if (j < n1) packed_[(p * in + r) * kPanel + c] = l1.w.v[r * n1 + j] * scale[j];
      }
}

void InferenceEngine::score_fused(const u8* states, i64 begin, i64 end, float* out) const {
  const i64 npos = cfg_.n_positions;
  const i64 labels = cfg_.num_labels;
  const i64 panels = n1p_ / kPanel;
  const i64 in = cfg_.input_dim();

  std::vector<float> sums;
  std::vector<u32> rows;
  for (i64 t0 = begin; t0 < end; t0 += kTile) {
    const i64 m = std::min(kTile, end - t0);
    sums.assign(m, head_bias_);
    rows.resize(m * npos);
    for (i64 i = 0; i < m; ++i) {
      const u8* st = states + (t0 + i) * npos;
      for (i64 p = 0; p < npos; ++p) rows[i * npos + p] = static_cast<u32>(p * labels + st[p]);
    }
    for (i64 pan = 0; pan < panels; ++pan) {
      const float* base = packed_.data() + pan * in * kPanel;
      const float* b = bias_.data() + pan * kPanel;
      const float* h = head_.data() + pan * kPanel;
      i64 i = 0;
      // Eight states at once: eight independent accumulator vectors keep the
      // gather loads pipelined instead of serialized on one add chain.
      for (; i + kGroup <= m; i += kGroup) {
        float acc[kGroup][kPanel];
        const u32* rw[kGroup];
        for (i64 k = 0; k < kGroup; ++k) {
          std::memcpy(acc[k], b, kPanel * sizeof(float));
          rw[k] = rows.data() + (i + k) * npos;
        }
        for (i64 p = 0; p < npos; ++p) {
#pragma GCC unroll 8
          for (i64 k = 0; k < kGroup; ++k) {
            const float* w = base + static_cast<i64>(rw[k][p]) * kPanel;
#pragma GCC unroll 16
            for (i64 c = 0; c < kPanel; ++c) acc[k][c] += w[c];
          }
        }
        for (i64 k = 0; k < kGroup; ++k) {
          float dot = 0.0f;
          for (i64 c = 0; c < kPanel; ++c) dot += (acc[k][c] > 0.0f ? acc[k][c] : 0.0f) * h[c];
          sums[i + k] += dot;
        }
      }
      for (; i < m; ++i) {
        float acc[kPanel];
        const u32* rw = rows.data() + i * npos;
        std::memcpy(acc, b, sizeof acc);
        for (i64 p = 0; p < npos; ++p) {
          const float* w = base + static_cast<i64>(rw[p]) * kPanel;
          for (i64 c = 0; c < kPanel; ++c) acc[c] += w[c];
        }
        float dot = 0.0f;
        for (i64 c = 0; c < kPanel; ++c) dot += (acc[c] > 0.0f ? acc[c] : 0.0f) * h[c];
        sums[i] += dot;
      }
    }
    for (i64 i = 0; i < m; ++i) out[t0 + i] = sums[i];
  }
}

void InferenceEngine::score_dense(const u8* states, i64 begin, i64 end, float* out) const {
  const i64 npos = cfg_.n_positions;
  for (i64 off = begin; off < end; off += kTile) {
    const i64 m = std::min(kTile, end - off);
    std::vector<float> pred = model_->predict_states(states + off * npos, m);
    std::memcpy(out + off, pred.data(), m * sizeof(float));
  }
}

void InferenceEngine::score(const u8* states, i64 count, float* out) const {
  parallel_chunks(count, kTile, [&](i64 begin, i64 end) {
    if (fused_)
      score_fused(states, begin, end, out);
    else
      score_dense(states, begin, end, out);
  });
}

}  // namespace cayley
