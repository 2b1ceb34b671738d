#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cayley/walker.hpp"

// Residual MLP distance regressor and its trainer.
//
// Architecture, in forward order (widths in brackets):
//   input [F] -> linear [n1] -> batchnorm -> relu
//   when n2 > 0: -> linear [n2] -> batchnorm -> relu
//   nr residual blocks on width n2:
//       t -> linear [n2] -> bn -> relu -> linear [n2] -> bn -> (+t) -> relu
//   -> linear [1] head (no norm) -> predicted distance
//
// Batch norm keeps running statistics for inference (momentum 0.1, eps 1e-5,
// biased batch variance in the normalizer, unbiased in the running update)
// and the optimizer is Adam with bias correction. Training minimizes mean
// squared error against walk depths. All randomness flows from named seed
// derivations, so a (config, seed) pair pins every weight bit.

namespace cayley {

struct ResMLPConfig {
  i64 n_positions = 0;  // state length n
  i64 num_labels = 0;   // label alphabet; one-hot input width is n * labels
  EncodeMode encode = EncodeMode::OneHot;
  i64 n1 = 0;
  i64 n2 = 0;  // 0 = single hidden layer (head reads the n1 trunk)
  i64 nr = 0;  // residual blocks; requires n2 > 0
  float bn_eps = 1e-5f;
  float bn_momentum = 0.1f;

  i64 input_dim() const { return feature_dim(n_positions, num_labels, encode); }
  i64 trunk_width() const { return n2 > 0 ? n2 : n1; }
  int hidden_layer_count() const { return n2 > 0 ? static_cast<int>(2 + 2 * nr) : 1; }
  // Closed-form trainable parameter count (weights, biases, bn affine).
  i64 param_count() const;
  void validate() const;
  bool operator==(const ResMLPConfig&) const = default;
};

template <class T>
struct Param {
  std::string name;
  std::vector<T> v;  // values
  std::vector<T> g;  // gradient, same shape
  std::vector<T> m, u;  // Adam moments, allocated on first step
  std::vector<i64> shape;

  i64 size() const { return static_cast<i64>(v.size()); }
};

template <class T>
struct LinearLayer {
  Param<T> w;  // [in][out] row-major
  Param<T> b;  // [out]
  i64 in = 0, out = 0;
};

template <class T>
struct BatchNormLayer {
  Param<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  i64 dim = 0;
  // training-forward cache consumed by backward
  std::vector<T> invstd;
};

template <class T>
struct ResBlockLayer {
  LinearLayer<T> la, lb;
  BatchNormLayer<T> bna, bnb;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg{};
  u64 t = 0;  // completed steps
};

template <class T>
class ResMLP {
 public:
  ResMLP() = default;
  ResMLP(const ResMLPConfig& cfg, u64 seed);

  const ResMLPConfig& config() const { return cfg_; }
  // Actual trainable scalar count; equals config().param_count().
  i64 param_count() const;

  // Eval-mode forward (running statistics); reference implementation.
  std::vector<T> predict(const T* x, i64 batch) const;
  // Same, from raw label rows (batch x n_positions), encoded per config.
  std::vector<T> predict_states(const u8* states, i64 batch) const;

  // Train-mode forward + backward; fills parameter gradients and returns the
  // pre-update mean squared error. Dense input is batch x input_dim.
  T loss_and_grads(const T* x, const T* targets, i64 batch);
  // One-hot fast path from raw label rows; avoids materializing features.
  T loss_and_grads_states(const u8* states, const T* targets, i64 batch);

  // Applies one Adam update from the stored gradients.
  void adam_step(AdamState& opt);

  // Trainable parameters in canonical order (the serialization order).
  std::vector<Param<T>*> trainables();
  std::vector<const Param<T>*> trainables() const;
  // Non-trained persistent state (batch norm running stats), canonical order.
  std::vector<std::pair<std::string, std::vector<T>*>> buffers();
  std::vector<std::pair<std::string, const std::vector<T>*>> buffers() const;

  // Layer access for the inference engine and tests.
  const LinearLayer<T>& l1() const { return l1_; }
  const BatchNormLayer<T>& bn1() const { return bn1_; }
  const LinearLayer<T>& l2() const { return l2_; }
  const BatchNormLayer<T>& bn2() const { return bn2_; }
  const std::vector<ResBlockLayer<T>>& blocks() const { return blocks_; }
  const LinearLayer<T>& head() const { return head_; }

 private:
  T run_training_batch(const T* x_dense, const u8* states, const T* targets, i64 batch);
  void forward_eval_tile(const T* x, i64 batch, std::vector<T>& out) const;

  ResMLPConfig cfg_;
  LinearLayer<T> l1_;
  BatchNormLayer<T> bn1_;
  LinearLayer<T> l2_;
  BatchNormLayer<T> bn2_;
  std::vector<ResBlockLayer<T>> blocks_;
  LinearLayer<T> head_;

  // Reused training workspace (lazily sized to the batch).
  struct Workspace {
    std::vector<T> xh1, a1, xh2, a2;
    std::vector<std::vector<T>> xa, aa, xb, tout;  // per block
    std::vector<T> pred, dpred, g0, g1, g2;
  } ws_;
};

// --- serialization ----------------------------------------------------------
// "CBNN" container: version, config, named-tensor directory, f32 payload,
// trailing CRC-32. Loading verifies the CRC before touching any payload and
// never yields a partially filled model.

void save_model(const ResMLP<float>& model, const std::string& path, bool include_adam = false,
                u64 adam_t = 0, i64 epochs_completed = 0);

struct LoadedModel {
  ResMLP<float> model;
  bool has_adam = false;
  u64 adam_t = 0;
  i64 epochs_completed = 0;
};

LoadedModel load_model(const std::string& path);

// --- training loop -----------------------------------------------------------

struct TrainOptions {
  i64 epochs = 64;
  i64 samples_per_epoch = 100000;  // rounded up to a whole number of walks
  i64 minibatch = 16384;
  AdamConfig adam{};
  u64 seed = 0;  // drives init and all walk generation
  std::vector<i64> checkpoint_epochs;
  std::string out_dir;      // checkpoints + train_log.csv; empty = keep in memory
  std::string resume_from;  // checkpoint file to continue from
};

struct TrainLogEntry {
  i64 epoch = 0;  // 1-based, after completion
  double loss = 0.0;
  double samples_per_sec = 0.0;
};

using TrainCallback = std::function<void(const TrainLogEntry&)>;

// Trains a fresh model (or resumes) with a fresh batch of walks every epoch.
// Deterministic in (configs, seed): separate runs agree bit-for-bit, and a
// resumed run reproduces the uninterrupted one exactly.
ResMLP<float> train(const PuzzleDef& def, const ResMLPConfig& mcfg, const WalkConfig& wcfg,
                    const TrainOptions& opts, const TrainCallback& callback = {});

}  // namespace cayley
