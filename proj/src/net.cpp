#include "cayley/net.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "cayley/binio.hpp"
#include "cayley/linalg.hpp"
#include "cayley/rng.hpp"

namespace cayley {

// --- config -------------------------------------------------------------------

i64 ResMLPConfig::param_count() const {
  const i64 in = input_dim();
  i64 p = in * n1 + n1 + 2 * n1;  // l1 + bn1 affine
  if (n2 > 0) {
    p += n1 * n2 + n2 + 2 * n2;           // l2 + bn2 affine
    p += nr * 2 * (n2 * n2 + n2 + 2 * n2);  // two linear+bn pairs per block
  }
  p += trunk_width() + 1;  // head
  return p;
}

void ResMLPConfig::validate() const {
  if (n_positions < 1) throw DimensionError("model config: n_positions must be >= 1");
  if (num_labels < 1 || num_labels > 256)
    throw DimensionError("model config: num_labels must be in [1, 256]");
  if (n1 < 1) throw DimensionError("model config: n1 must be >= 1");
  if (n2 < 0 || nr < 0) throw DimensionError("model config: n2 and nr must be >= 0");
  if (nr > 0 && n2 == 0)
    throw DimensionError("model config: residual blocks (nr > 0) require n2 > 0");
  if (!(bn_eps > 0)) throw NumericError("model config: bn_eps must be positive");
  if (!(bn_momentum > 0) || bn_momentum > 1)
    throw NumericError("model config: bn_momentum must be in (0, 1]");
}

// --- init helpers ---------------------------------------------------------------

namespace {

template <class T>
void init_linear(LinearLayer<T>& l, i64 in, i64 out, const std::string& prefix, SplitMix64& rng) {
  l.in = in;
  l.out = out;
  l.w.name = prefix + ".w";
  l.w.shape = {in, out};
  l.w.v.resize(in * out);
  l.b.name = prefix + ".b";
  l.b.shape = {out};
  l.b.v.resize(out);
  const float bound = 1.0f / std::sqrt(static_cast<float>(in));
  for (auto& v : l.w.v) v = static_cast<T>(rng.symmetric_float(bound));
  for (auto& v : l.b.v) v = static_cast<T>(rng.symmetric_float(bound));
}

template <class T>
void init_bn(BatchNormLayer<T>& bn, i64 dim, const std::string& prefix) {
  bn.dim = dim;
  bn.gamma.name = prefix + ".gamma";
  bn.gamma.shape = {dim};
  bn.gamma.v.assign(dim, T(1));
  bn.beta.name = prefix + ".beta";
  bn.beta.shape = {dim};
  bn.beta.v.assign(dim, T(0));
  bn.running_mean.assign(dim, T(0));
  bn.running_var.assign(dim, T(1));
}

// --- elementwise and batch-norm kernels -----------------------------------------

template <class T>
void add_bias_rows(T* z, const T* b, i64 batch, i64 dim) {
  for (i64 s = 0; s < batch; ++s) {
    T* row = z + s * dim;
    for (i64 f = 0; f < dim; ++f) row[f] += b[f];
  }
}

// z (batch x dim) is normalized in place to xhat; running stats updated,
// invstd cached for backward. Statistics accumulate in double so results do
// not depend on how the batch might be split elsewhere.
template <class T>
void bn_forward_train(BatchNormLayer<T>& bn, T* z, i64 batch, float eps, float momentum) {
  const i64 F = bn.dim;
  if (batch < 2) throw NumericError("batch norm: training requires batch size >= 2");
  std::vector<double> sum(F, 0.0), sumsq(F, 0.0);
  for (i64 s = 0; s < batch; ++s) {
    const T* row = z + s * F;
    for (i64 f = 0; f < F; ++f) {
      double v = row[f];
      sum[f] += v;
      sumsq[f] += v * v;
    }
  }
  bn.invstd.resize(F);
  std::vector<T> mean(F);
  const double inv_b = 1.0 / batch;
  const double unbias = static_cast<double>(batch) / (batch - 1);
  for (i64 f = 0; f < F; ++f) {
    double mu = sum[f] * inv_b;
    double var = sumsq[f] * inv_b - mu * mu;
    if (!std::isfinite(mu) || !std::isfinite(var))
      throw NumericError("batch norm: non-finite activation statistics in feature " +
                         std::to_string(f) + " (exploding or invalid inputs)");
    if (var < 0) var = 0;
    mean[f] = static_cast<T>(mu);
    bn.invstd[f] = static_cast<T>(1.0 / std::sqrt(var + eps));
    bn.running_mean[f] =
        static_cast<T>((1.0 - momentum) * bn.running_mean[f] + momentum * mu);
    bn.running_var[f] =
        static_cast<T>((1.0 - momentum) * bn.running_var[f] + momentum * var * unbias);
  }
  for (i64 s = 0; s < batch; ++s) {
    T* row = z + s * F;
    for (i64 f = 0; f < F; ++f) row[f] = (row[f] - mean[f]) * bn.invstd[f];
  }
}

// out = relu(gamma * xhat + beta)
template <class T>
void affine_relu(const T* xhat, const BatchNormLayer<T>& bn, T* out, i64 batch) {
  const i64 F = bn.dim;
  const T* g = bn.gamma.v.data();
  const T* b = bn.beta.v.data();
  for (i64 s = 0; s < batch; ++s) {
    const T* x = xhat + s * F;
    T* o = out + s * F;
    for (i64 f = 0; f < F; ++f) {
      T v = g[f] * x[f] + b[f];
      o[f] = v > T(0) ? v : T(0);
    }
  }
}

// dy (batch x dim) is transformed in place into dz (gradient wrt the
// pre-norm input); accumulates gamma/beta gradients.
template <class T>
void bn_backward(BatchNormLayer<T>& bn, const T* xhat, T* dy, i64 batch) {
  const i64 F = bn.dim;
  std::vector<double> sdy(F, 0.0), sdyx(F, 0.0);
  for (i64 s = 0; s < batch; ++s) {
    const T* d = dy + s * F;
    const T* x = xhat + s * F;
    for (i64 f = 0; f < F; ++f) {
      sdy[f] += d[f];
      sdyx[f] += static_cast<double>(d[f]) * x[f];
    }
  }
  for (i64 f = 0; f < F; ++f) {
    bn.gamma.g[f] += static_cast<T>(sdyx[f]);
    bn.beta.g[f] += static_cast<T>(sdy[f]);
  }
  const double inv_b = 1.0 / batch;
  std::vector<T> mdy(F), mdyx(F);
  for (i64 f = 0; f < F; ++f) {
    mdy[f] = static_cast<T>(sdy[f] * inv_b);
    mdyx[f] = static_cast<T>(sdyx[f] * inv_b);
  }
  const T* g = bn.gamma.v.data();
  for (i64 s = 0; s < batch; ++s) {
    T* d = dy + s * F;
    const T* x = xhat + s * F;
    for (i64 f = 0; f < F; ++f)
      d[f] = g[f] * bn.invstd[f] * (d[f] - mdy[f] - x[f] * mdyx[f]);
  }
}

template <class T>
void relu_backward_inplace(T* d, const T* activation, i64 count) {
  for (i64 i = 0; i < count; ++i)
    if (!(activation[i] > T(0))) d[i] = T(0);
}

// z (batch x n1) = b1 + sum over positions of the W1 row picked by each
// label. This is the one-hot product without materializing features.
template <class T>
void gather_forward(const LinearLayer<T>& l1, const u8* states, i64 batch, i64 npos, i64 labels,
                    T* z) {
  const i64 n1 = l1.out;
  for (i64 s = 0; s < batch; ++s) {
    T* row = z + s * n1;
    std::memcpy(row, l1.b.v.data(), n1 * sizeof(T));
    const u8* st = states + s * npos;
    for (i64 p = 0; p < npos; ++p) {
      const T* w = l1.w.v.data() + (p * labels + st[p]) * n1;
      for (i64 j = 0; j < n1; ++j) row[j] += w[j];
    }
  }
}

// Transpose of gather_forward: dW1 rows accumulate dz rows.
template <class T>
void scatter_grad(LinearLayer<T>& l1, const u8* states, const T* dz, i64 batch, i64 npos,
                  i64 labels) {
  const i64 n1 = l1.out;
  for (i64 s = 0; s < batch; ++s) {
    const T* d = dz + s * n1;
    const u8* st = states + s * npos;
    for (i64 p = 0; p < npos; ++p) {
      T* g = l1.w.g.data() + (p * labels + st[p]) * n1;
      for (i64 j = 0; j < n1; ++j) g[j] += d[j];
    }
    for (i64 j = 0; j < n1; ++j) l1.b.g[j] += d[j];
  }
}

template <class T>
void linear_forward(const LinearLayer<T>& l, const T* x, i64 batch, T* z) {
  gemm(false, false, batch, l.out, l.in, T(1), x, l.in, l.w.v.data(), l.out, T(0), z, l.out);
  add_bias_rows(z, l.b.v.data(), batch, l.out);
}

// Accumulates dW and db; optionally emits dx.
template <class T>
void linear_backward(LinearLayer<T>& l, const T* x, const T* dz, i64 batch, T* dx) {
  gemm(true, false, l.in, l.out, batch, T(1), x, l.in, dz, l.out, T(1), l.w.g.data(), l.out);
  for (i64 s = 0; s < batch; ++s) {
    const T* d = dz + s * l.out;
    for (i64 f = 0; f < l.out; ++f) l.b.g[f] += d[f];
  }
  if (dx)
    gemm(false, true, batch, l.in, l.out, T(1), dz, l.out, l.w.v.data(), l.out, T(0), dx, l.in);
}

}  // namespace

// --- model ---------------------------------------------------------------------

template <class T>
ResMLP<T>::ResMLP(const ResMLPConfig& cfg, u64 seed) : cfg_(cfg) {
  cfg_.validate();
  SplitMix64 rng(derive_seed(seed, "init"));
  init_linear(l1_, cfg_.input_dim(), cfg_.n1, "l1", rng);
  init_bn(bn1_, cfg_.n1, "bn1");
  if (cfg_.n2 > 0) {
    init_linear(l2_, cfg_.n1, cfg_.n2, "l2", rng);
    init_bn(bn2_, cfg_.n2, "bn2");
    blocks_.resize(cfg_.nr);
    for (i64 i = 0; i < cfg_.nr; ++i) {
      std::string prefix = "block" + std::to_string(i);
      init_linear(blocks_[i].la, cfg_.n2, cfg_.n2, prefix + ".la", rng);
      init_bn(blocks_[i].bna, cfg_.n2, prefix + ".bna");
      init_linear(blocks_[i].lb, cfg_.n2, cfg_.n2, prefix + ".lb", rng);
      init_bn(blocks_[i].bnb, cfg_.n2, prefix + ".bnb");
    }
  }
  init_linear(head_, cfg_.trunk_width(), 1, "head", rng);
}

template <class T>
std::vector<Param<T>*> ResMLP<T>::trainables() {
  std::vector<Param<T>*> out{&l1_.w, &l1_.b, &bn1_.gamma, &bn1_.beta};
  if (cfg_.n2 > 0) {
    out.insert(out.end(), {&l2_.w, &l2_.b, &bn2_.gamma, &bn2_.beta});
    for (auto& blk : blocks_)
      out.insert(out.end(), {&blk.la.w, &blk.la.b, &blk.bna.gamma, &blk.bna.beta, &blk.lb.w,
                             &blk.lb.b, &blk.bnb.gamma, &blk.bnb.beta});
  }
  out.push_back(&head_.w);
  out.push_back(&head_.b);
  return out;
}

template <class T>
std::vector<const Param<T>*> ResMLP<T>::trainables() const {
  auto list = const_cast<ResMLP<T>*>(this)->trainables();
  return {list.begin(), list.end()};
}

template <class T>
std::vector<std::pair<std::string, std::vector<T>*>> ResMLP<T>::buffers() {
  std::vector<std::pair<std::string, std::vector<T>*>> out{
      {"bn1.running_mean", &bn1_.running_mean}, {"bn1.running_var", &bn1_.running_var}};
  if (cfg_.n2 > 0) {
    out.emplace_back("bn2.running_mean", &bn2_.running_mean);
    out.emplace_back("bn2.running_var", &bn2_.running_var);
    for (size_t i = 0; i < blocks_.size(); ++i) {
      std::string prefix = "block" + std::to_string(i);
      out.emplace_back(prefix + ".bna.running_mean", &blocks_[i].bna.running_mean);
      out.emplace_back(prefix + ".bna.running_var", &blocks_[i].bna.running_var);
      out.emplace_back(prefix + ".bnb.running_mean", &blocks_[i].bnb.running_mean);
      out.emplace_back(prefix + ".bnb.running_var", &blocks_[i].bnb.running_var);
    }
  }
  return out;
}

template <class T>
std::vector<std::pair<std::string, const std::vector<T>*>> ResMLP<T>::buffers() const {
  auto list = const_cast<ResMLP<T>*>(this)->buffers();
  std::vector<std::pair<std::string, const std::vector<T>*>> out;
  out.reserve(list.size());
  for (auto& [name, vec] : list) out.emplace_back(name, vec);
  return out;
}

template <class T>
i64 ResMLP<T>::param_count() const {
  i64 total = 0;
  for (const Param<T>* p : trainables()) total += p->size();
  return total;
}

// --- eval forward -----------------------------------------------------------------

namespace {

// out = relu(scale * z + shift) (or no relu for the last bn of a block,
// where the skip is added first).
template <class T>
void eval_scale_shift(const BatchNormLayer<T>& bn, float eps, const T* z, T* out, i64 batch,
                      bool relu, const T* skip) {
  const i64 F = bn.dim;
  std::vector<T> scale(F), shift(F);
  for (i64 f = 0; f < F; ++f) {
    scale[f] = bn.gamma.v[f] / static_cast<T>(std::sqrt(static_cast<double>(bn.running_var[f]) + eps));
    shift[f] = bn.beta.v[f] - bn.running_mean[f] * scale[f];
  }
  for (i64 s = 0; s < batch; ++s) {
    const T* zr = z + s * F;
    T* o = out + s * F;
    for (i64 f = 0; f < F; ++f) {
      T v = scale[f] * zr[f] + shift[f];
      if (skip) v += skip[s * F + f];
      o[f] = relu && v < T(0) ? T(0) : v;
    }
  }
}

}  // namespace

template <class T>
void ResMLP<T>::forward_eval_tile(const T* x, i64 batch, std::vector<T>& out) const {
  const i64 n1 = cfg_.n1, n2 = cfg_.n2;
  std::vector<T> z1(batch * n1), a1(batch * n1);
  const T* no_skip = nullptr;
  linear_forward(l1_, x, batch, z1.data());
  eval_scale_shift(bn1_, cfg_.bn_eps, z1.data(), a1.data(), batch, true, no_skip);
  std::vector<T> trunk;
  const T* t = a1.data();
  if (n2 > 0) {
    std::vector<T> z2(batch * n2);
    trunk.resize(batch * n2);
    linear_forward(l2_, a1.data(), batch, z2.data());
    eval_scale_shift(bn2_, cfg_.bn_eps, z2.data(), trunk.data(), batch, true, no_skip);
    std::vector<T> za(batch * n2), ha(batch * n2), zb(batch * n2);
    for (const auto& blk : blocks_) {
      linear_forward(blk.la, trunk.data(), batch, za.data());
      eval_scale_shift(blk.bna, cfg_.bn_eps, za.data(), ha.data(), batch, true, no_skip);
      linear_forward(blk.lb, ha.data(), batch, zb.data());
      // bnb output + skip, then relu, written back into the trunk
      eval_scale_shift(blk.bnb, cfg_.bn_eps, zb.data(), ha.data(), batch, false, trunk.data());
      for (i64 i = 0; i < batch * n2; ++i) trunk[i] = ha[i] > T(0) ? ha[i] : T(0);
    }
    t = trunk.data();
  }
  out.resize(batch);
  gemm(false, false, batch, 1, cfg_.trunk_width(), T(1), t, cfg_.trunk_width(), head_.w.v.data(),
       1, T(0), out.data(), 1);
  for (i64 s = 0; s < batch; ++s) out[s] += head_.b.v[0];
}

template <class T>
std::vector<T> ResMLP<T>::predict(const T* x, i64 batch) const {
  std::vector<T> out;
  out.reserve(batch);
  const i64 tile = 8192;
  std::vector<T> part;
  for (i64 off = 0; off < batch; off += tile) {
    i64 bs = std::min(tile, batch - off);
    forward_eval_tile(x + off * cfg_.input_dim(), bs, part);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

template <class T>
std::vector<T> ResMLP<T>::predict_states(const u8* states, i64 batch) const {
  const i64 in = cfg_.input_dim();
  const i64 npos = cfg_.n_positions;
  std::vector<T> out;
  out.reserve(batch);
  const i64 tile = 8192;
  std::vector<T> x;
  std::vector<T> part;
  StateVector view;
  view.num_labels = static_cast<u16>(cfg_.num_labels);
  view.labels.resize(npos);
  std::vector<u8> row(in);
  for (i64 off = 0; off < batch; off += tile) {
    i64 bs = std::min(tile, batch - off);
    x.assign(bs * in, T(0));
    for (i64 s = 0; s < bs; ++s) {
      std::memcpy(view.labels.data(), states + (off + s) * npos, npos);
      encode_into_u8(view, cfg_.encode, row.data());
      for (i64 f = 0; f < in; ++f) x[s * in + f] = static_cast<T>(row[f]);
    }
    forward_eval_tile(x.data(), bs, part);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

// --- training forward/backward -----------------------------------------------------

template <class T>
T ResMLP<T>::run_training_batch(const T* x_dense, const u8* states, const T* targets, i64 batch) {
  const i64 n1 = cfg_.n1, n2 = cfg_.n2, width = cfg_.trunk_width();
  const i64 maxw = std::max(n1, n2);
  for (Param<T>* p : trainables()) p->g.assign(p->v.size(), T(0));

  ws_.xh1.resize(batch * n1);
  ws_.a1.resize(batch * n1);
  if (n2 > 0) {
    ws_.xh2.resize(batch * n2);
    ws_.a2.resize(batch * n2);
    ws_.xa.resize(blocks_.size());
    ws_.aa.resize(blocks_.size());
    ws_.xb.resize(blocks_.size());
    ws_.tout.resize(blocks_.size());
    for (size_t i = 0; i < blocks_.size(); ++i) {
      ws_.xa[i].resize(batch * n2);
      ws_.aa[i].resize(batch * n2);
      ws_.xb[i].resize(batch * n2);
      ws_.tout[i].resize(batch * n2);
    }
  }
  ws_.pred.resize(batch);
  ws_.dpred.resize(batch);
  ws_.g0.resize(batch * maxw);
  ws_.g1.resize(batch * maxw);
  ws_.g2.resize(batch * maxw);

  // forward
  if (states)
    gather_forward(l1_, states, batch, cfg_.n_positions, cfg_.num_labels, ws_.xh1.data());
  else
    linear_forward(l1_, x_dense, batch, ws_.xh1.data());
  bn_forward_train(bn1_, ws_.xh1.data(), batch, cfg_.bn_eps, cfg_.bn_momentum);
  affine_relu(ws_.xh1.data(), bn1_, ws_.a1.data(), batch);

  T* trunk = ws_.a1.data();
  if (n2 > 0) {
    linear_forward(l2_, ws_.a1.data(), batch, ws_.xh2.data());
    bn_forward_train(bn2_, ws_.xh2.data(), batch, cfg_.bn_eps, cfg_.bn_momentum);
    affine_relu(ws_.xh2.data(), bn2_, ws_.a2.data(), batch);
    trunk = ws_.a2.data();
    for (size_t i = 0; i < blocks_.size(); ++i) {
      auto& blk = blocks_[i];
      linear_forward(blk.la, trunk, batch, ws_.xa[i].data());
      bn_forward_train(blk.bna, ws_.xa[i].data(), batch, cfg_.bn_eps, cfg_.bn_momentum);
      affine_relu(ws_.xa[i].data(), blk.bna, ws_.aa[i].data(), batch);
      linear_forward(blk.lb, ws_.aa[i].data(), batch, ws_.xb[i].data());
      bn_forward_train(blk.bnb, ws_.xb[i].data(), batch, cfg_.bn_eps, cfg_.bn_momentum);
      const T* gb = blk.bnb.gamma.v.data();
      const T* bb = blk.bnb.beta.v.data();
      for (i64 s = 0; s < batch; ++s) {
        const T* xh = ws_.xb[i].data() + s * n2;
        const T* sk = trunk + s * n2;
        T* o = ws_.tout[i].data() + s * n2;
        for (i64 f = 0; f < n2; ++f) {
          T v = gb[f] * xh[f] + bb[f] + sk[f];
          o[f] = v > T(0) ? v : T(0);
        }
      }
      trunk = ws_.tout[i].data();
    }
  }
  gemm(false, false, batch, 1, width, T(1), trunk, width, head_.w.v.data(), 1, T(0),
       ws_.pred.data(), 1);

  double sse = 0;
  for (i64 s = 0; s < batch; ++s) {
    ws_.pred[s] += head_.b.v[0];
    double d = static_cast<double>(ws_.pred[s]) - static_cast<double>(targets[s]);
    sse += d * d;
    ws_.dpred[s] = static_cast<T>(2.0 * d / batch);
  }
  T loss = static_cast<T>(sse / batch);
  if (!std::isfinite(static_cast<double>(loss)))
    throw NumericError("training produced a non-finite loss");

  // backward
  T* no_dx = nullptr;
  linear_backward(head_, trunk, ws_.dpred.data(), batch, no_dx);
  // head_ is width x 1; its dW/db were just accumulated. Gradient wrt trunk:
  gemm(false, true, batch, width, 1, T(1), ws_.dpred.data(), 1, head_.w.v.data(), 1, T(0),
       ws_.g0.data(), width);

  if (n2 > 0) {
    for (i64 i = static_cast<i64>(blocks_.size()) - 1; i >= 0; --i) {
      auto& blk = blocks_[i];
      const T* block_in = (i == 0) ? ws_.a2.data() : ws_.tout[i - 1].data();
      // through the final relu of the block
      relu_backward_inplace(ws_.g0.data(), ws_.tout[i].data(), batch * n2);
      // bnb branch
      std::memcpy(ws_.g1.data(), ws_.g0.data(), batch * n2 * sizeof(T));
      bn_backward(blk.bnb, ws_.xb[i].data(), ws_.g1.data(), batch);
      linear_backward(blk.lb, ws_.aa[i].data(), ws_.g1.data(), batch, ws_.g2.data());
      relu_backward_inplace(ws_.g2.data(), ws_.aa[i].data(), batch * n2);
      bn_backward(blk.bna, ws_.xa[i].data(), ws_.g2.data(), batch);
      linear_backward(blk.la, block_in, ws_.g2.data(), batch, ws_.g1.data());
      // skip connection adds straight through
      for (i64 j = 0; j < batch * n2; ++j) ws_.g0[j] += ws_.g1[j];
    }
    relu_backward_inplace(ws_.g0.data(), ws_.a2.data(), batch * n2);
    bn_backward(bn2_, ws_.xh2.data(), ws_.g0.data(), batch);
    linear_backward(l2_, ws_.a1.data(), ws_.g0.data(), batch, ws_.g1.data());
    std::swap(ws_.g0, ws_.g1);
  }
  relu_backward_inplace(ws_.g0.data(), ws_.a1.data(), batch * n1);
  bn_backward(bn1_, ws_.xh1.data(), ws_.g0.data(), batch);
  if (states)
    scatter_grad(l1_, states, ws_.g0.data(), batch, cfg_.n_positions, cfg_.num_labels);
  else
    linear_backward(l1_, x_dense, ws_.g0.data(), batch, no_dx);
  return loss;
}

template <class T>
T ResMLP<T>::loss_and_grads(const T* x, const T* targets, i64 batch) {
  return run_training_batch(x, nullptr, targets, batch);
}

template <class T>
T ResMLP<T>::loss_and_grads_states(const u8* states, const T* targets, i64 batch) {
  if (cfg_.encode != EncodeMode::OneHot)
    throw DimensionError("loss_and_grads_states requires one-hot encoding");
  return run_training_batch(nullptr, states, targets, batch);
}

template <class T>
void ResMLP<T>::adam_step(AdamState& opt) {
  opt.t += 1;
  const double b1 = opt.cfg.beta1, b2 = opt.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
  const double lr = opt.cfg.lr, eps = opt.cfg.eps;
  for (Param<T>* p : trainables()) {
    if (p->m.empty()) {
      p->m.assign(p->v.size(), T(0));
      p->u.assign(p->v.size(), T(0));
    }
    for (size_t i = 0; i < p->v.size(); ++i) {
      double g = p->g[i];
      double m = b1 * p->m[i] + (1.0 - b1) * g;
      double u = b2 * p->u[i] + (1.0 - b2) * g * g;
      p->m[i] = static_cast<T>(m);
      p->u[i] = static_cast<T>(u);
      p->v[i] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(u / bc2) + eps));
    }
  }
}

// --- serialization -------------------------------------------------------------

namespace {
constexpr u32 kWeightVersion = 1;
constexpr u32 kFlagAdam = 1u << 0;

u8 encode_tag(EncodeMode m) { return m == EncodeMode::OneHot ? 0 : 1; }
EncodeMode encode_from_tag(u8 t, const std::string& path) {
  if (t == 0) return EncodeMode::OneHot;
  if (t == 1) return EncodeMode::Raw;
  throw ChecksumError(path + ": unknown encode tag " + std::to_string(t));
}
}  // namespace

void save_model(const ResMLP<float>& model, const std::string& path, bool include_adam,
                u64 adam_t, i64 epochs_completed) {
  const ResMLPConfig& cfg = model.config();
  struct Entry {
    std::string name;
    std::vector<i64> shape;
    const std::vector<float>* data;
  };
  std::vector<Entry> tensors;
  for (const Param<float>* p : model.trainables()) tensors.push_back({p->name, p->shape, &p->v});
  for (const auto& [name, vec] : model.buffers())
    tensors.push_back({name, {static_cast<i64>(vec->size())}, vec});
  if (include_adam)
    for (const Param<float>* p : model.trainables()) {
      if (p->m.empty())
        throw Error("save_model: Adam state requested but the optimizer has not stepped yet");
      tensors.push_back({"adam.m." + p->name, p->shape, &p->m});
      tensors.push_back({"adam.v." + p->name, p->shape, &p->u});
    }

  ByteWriter w;
  w.put_bytes("CBNN", 4);
  w.put_u32(kWeightVersion);
  w.put_u32(include_adam ? kFlagAdam : 0);
  w.put_u32(static_cast<u32>(cfg.n_positions));
  w.put_u32(static_cast<u32>(cfg.num_labels));
  w.put_u8(encode_tag(cfg.encode));
  w.put_u32(static_cast<u32>(cfg.n1));
  w.put_u32(static_cast<u32>(cfg.n2));
  w.put_u32(static_cast<u32>(cfg.nr));
  w.put_f32(cfg.bn_eps);
  w.put_f32(cfg.bn_momentum);
  w.put_u64(static_cast<u64>(epochs_completed));
  w.put_u64(adam_t);
  w.put_u32(static_cast<u32>(tensors.size()));
  u64 offset = 0;
  for (const auto& t : tensors) {
    w.put_str(t.name);
    w.put_u8(static_cast<u8>(t.shape.size()));
    for (i64 d : t.shape) w.put_u32(static_cast<u32>(d));
    w.put_u64(offset);
    w.put_u64(t.data->size());
    offset += t.data->size();
  }
  for (const auto& t : tensors)
    for (float v : *t.data) w.put_f32(v);
  w.put_u32(crc32(w.bytes().data(), w.size()));
  write_file_atomic(path, w.bytes());
}

LoadedModel load_model(const std::string& path) {
  std::string data = read_file(path);
  if (data.size() < 8) throw ChecksumError(path + ": file too small to be a weight file");
  u32 stored;
  std::memcpy(&stored, data.data() + data.size() - 4, 4);
  // stored little-endian by the writer; reassemble portably
  {
    const u8* p = reinterpret_cast<const u8*>(data.data()) + data.size() - 4;
    stored = u32(p[0]) | u32(p[1]) << 8 | u32(p[2]) << 16 | u32(p[3]) << 24;
  }
  if (crc32(data.data(), data.size() - 4) != stored)
    throw ChecksumError(path + ": CRC mismatch (truncated or corrupted weight file)");

  ByteReader r(data.data(), data.size() - 4, path);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, "CBNN", 4) != 0) throw ChecksumError(path + ": bad magic");
  u32 version = r.get_u32();
  if (version != kWeightVersion)
    throw ChecksumError(path + ": unsupported weight file version " + std::to_string(version));
  u32 flags = r.get_u32();

  ResMLPConfig cfg;
  cfg.n_positions = r.get_u32();
  cfg.num_labels = r.get_u32();
  cfg.encode = encode_from_tag(r.get_u8(), path);
  cfg.n1 = r.get_u32();
  cfg.n2 = r.get_u32();
  cfg.nr = r.get_u32();
  cfg.bn_eps = r.get_f32();
  cfg.bn_momentum = r.get_f32();

  LoadedModel out{ResMLP<float>(cfg, 0), false, 0, 0};
  out.epochs_completed = static_cast<i64>(r.get_u64());
  out.adam_t = r.get_u64();
  out.has_adam = (flags & kFlagAdam) != 0;

  u32 count = r.get_u32();
  struct Entry {
    std::string name;
    std::vector<i64> shape;
    u64 offset, numel;
  };
  std::vector<Entry> entries(count);
  for (auto& e : entries) {
    e.name = r.get_str();
    u8 nd = r.get_u8();
    e.shape.resize(nd);
    for (auto& d : e.shape) d = r.get_u32();
    e.offset = r.get_u64();
    e.numel = r.get_u64();
  }
  size_t payload_start = r.pos();

  // Destination map: every tensor the model expects, by name.
  std::vector<std::pair<std::string, std::vector<float>*>> dest;
  for (Param<float>* p : out.model.trainables()) dest.emplace_back(p->name, &p->v);
  for (auto& [name, vec] : out.model.buffers()) dest.emplace_back(name, vec);
  if (out.has_adam)
    for (Param<float>* p : out.model.trainables()) {
      p->m.assign(p->v.size(), 0.0f);
      p->u.assign(p->v.size(), 0.0f);
      dest.emplace_back("adam.m." + p->name, &p->m);
      dest.emplace_back("adam.v." + p->name, &p->u);
    }
  if (dest.size() != entries.size())
    throw ChecksumError(path + ": tensor count " + std::to_string(entries.size()) +
                        " does not match the configuration (expected " +
                        std::to_string(dest.size()) + ")");

  for (const auto& e : entries) {
    std::vector<float>* target = nullptr;
    for (auto& [name, vec] : dest)
      if (name == e.name) {
        target = vec;
        break;
      }
    if (!target) throw ChecksumError(path + ": unexpected tensor '" + e.name + "'");
    if (target->size() != e.numel)
      throw DimensionError(path + ": tensor '" + e.name + "' has " + std::to_string(e.numel) +
                           " values, expected " + std::to_string(target->size()));
    size_t byte_off = payload_start + e.offset * 4;
    if (byte_off + e.numel * 4 > data.size() - 4)
      throw ChecksumError(path + ": tensor '" + e.name + "' extends past end of payload");
    ByteReader tr(data.data() + byte_off, e.numel * 4, path);
    for (u64 i = 0; i < e.numel; ++i) (*target)[i] = tr.get_f32();
  }
  return out;
}

// --- training loop ---------------------------------------------------------------

ResMLP<float> train(const PuzzleDef& def, const ResMLPConfig& mcfg, const WalkConfig& wcfg_in,
                    const TrainOptions& opts, const TrainCallback& callback) {
  mcfg.validate();
  if (mcfg.n_positions != def.n || mcfg.num_labels != def.num_labels)
    throw DimensionError("train: model config does not match puzzle '" + def.name + "' (" +
                         std::to_string(mcfg.n_positions) + "x" + std::to_string(mcfg.num_labels) +
                         " vs " + std::to_string(def.n) + "x" + std::to_string(def.num_labels) +
                         ")");
  if (opts.minibatch < 2) throw NumericError("train: minibatch must be >= 2");

  WalkConfig wcfg = wcfg_in;
  wcfg.seed = opts.seed;
  wcfg.num_walks = (opts.samples_per_epoch + wcfg.k_max - 1) / wcfg.k_max;

  ResMLP<float> model(mcfg, opts.seed);
  AdamState opt{opts.adam, 0};
  i64 start_epoch = 0;
  if (!opts.resume_from.empty()) {
    LoadedModel lm = load_model(opts.resume_from);
    if (!(lm.model.config() == mcfg))
      throw DimensionError(opts.resume_from + ": checkpoint configuration differs from the run");
    if (!lm.has_adam)
      throw ChecksumError(opts.resume_from + ": checkpoint has no optimizer state; cannot resume");
    model = std::move(lm.model);
    opt.t = lm.adam_t;
    start_epoch = lm.epochs_completed;
  }

  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);
  EpochStream stream(def, wcfg);
  std::vector<float> targets;
  for (i64 e = start_epoch; e < opts.epochs; ++e) {
    auto t0 = std::chrono::steady_clock::now();
    TrainBatch batch = stream.batch_for_epoch(e);
    double sse = 0;
    i64 done = 0;
    while (done < batch.num_samples) {
      i64 bs = std::min(opts.minibatch, batch.num_samples - done);
      targets.resize(bs);
      for (i64 s = 0; s < bs; ++s) targets[s] = static_cast<float>(batch.targets[done + s]);
      float loss;
      try {
        if (mcfg.encode == EncodeMode::OneHot) {
          loss = model.loss_and_grads_states(batch.states.data() + done * batch.n, targets.data(),
                                             bs);
        } else {
          std::vector<float> x(bs * batch.feature_dim);
          const u8* src = batch.features.data() + done * batch.feature_dim;
          for (i64 i = 0; i < bs * batch.feature_dim; ++i) x[i] = static_cast<float>(src[i]);
          loss = model.loss_and_grads(x.data(), targets.data(), bs);
        }
      } catch (const NumericError& err) {
        throw NumericError(std::string(err.what()) + " (epoch " + std::to_string(e + 1) +
                           ", sample offset " + std::to_string(done) + ")");
      }
      model.adam_step(opt);
      sse += static_cast<double>(loss) * bs;
      done += bs;
    }
    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();
    TrainLogEntry entry{e + 1, sse / batch.num_samples,
                        secs > 0 ? batch.num_samples / secs : 0.0};
    if (callback) callback(entry);
    if (!opts.out_dir.empty()) {
      char line[96];
      std::snprintf(line, sizeof line, "%lld,%.9g\n", static_cast<long long>(entry.epoch),
                    entry.loss);
      std::FILE* f = std::fopen((opts.out_dir + "/train_log.csv").c_str(), "a");
      if (f) {
        std::fputs(line, f);
        std::fclose(f);
      }
      for (i64 mark : opts.checkpoint_epochs)
        if (mark == e + 1)
          save_model(model, opts.out_dir + "/checkpoint_" + std::to_string(e + 1) + ".cbnn", true,
                     opt.t, e + 1);
    }
  }
  if (!opts.out_dir.empty()) save_model(model, opts.out_dir + "/model.cbnn", false, 0, opts.epochs);
  return model;
}

template class ResMLP<float>;
template class ResMLP<double>;

}  // namespace cayley
