#include "cayley/walker.hpp"

#include <cstring>

#include "cayley/binio.hpp"
#include "cayley/rng.hpp"

namespace cayley {

TrainBatch generate(const PuzzleDef& def, const WalkConfig& cfg) {
  if (cfg.k_max < 1) throw NumericError("walker: k_max must be >= 1");
  if (cfg.num_walks < 1) throw NumericError("walker: num_walks must be >= 1");
  const int n = def.n;
  const int gens = def.gen_count();
  const i64 walks = cfg.num_walks;

  TrainBatch batch;
  batch.n = n;
  batch.num_samples = walks * cfg.k_max;
  batch.feature_dim = feature_dim(n, def.num_labels, cfg.encode);
  batch.features.resize(batch.num_samples * batch.feature_dim);
  batch.targets.resize(batch.num_samples);
  batch.states.resize(batch.num_samples * n);
  if (cfg.record_moves) batch.moves.resize(batch.num_samples);

  // All walks advance one step per outer iteration (column order), keeping
  // the per-step generator tables hot; results depend only on the per-walk
  // streams, so this ordering is free to change without breaking seeds.
  std::vector<u8> cur(walks * n);
  for (i64 w = 0; w < walks; ++w)
    std::memcpy(cur.data() + w * n, def.solved.labels.data(), n);
  std::vector<SplitMix64> rng;
  rng.reserve(walks);
  for (i64 w = 0; w < walks; ++w) rng.emplace_back(derive_seed(cfg.seed, "walk", w));
  std::vector<int> prev(walks, -1);
  std::vector<u8> scratch(n);

  StateVector view;
  view.num_labels = def.num_labels;
  view.labels.resize(n);
  for (int j = 1; j <= cfg.k_max; ++j) {
    for (i64 w = 0; w < walks; ++w) {
      int excl = (cfg.non_backtracking && prev[w] >= 0) ? def.inverse_index[prev[w]] : -1;
      int g;
      if (excl < 0) {
        g = static_cast<int>(rng[w].bounded(gens));
      } else if (gens == 1) {
        throw Error("walker: walk " + std::to_string(w) + " stuck at step " + std::to_string(j) +
                    ": the only generator is the inverse of the previous move");
      } else {
        g = static_cast<int>(rng[w].bounded(gens - 1));
        if (g >= excl) ++g;
      }
      u8* state = cur.data() + w * n;
      apply_into(def.generators[g].perm, state, scratch.data());
      std::memcpy(state, scratch.data(), n);
      prev[w] = g;

      i64 sample = w * cfg.k_max + (j - 1);
      batch.targets[sample] = static_cast<u16>(j);
      std::memcpy(batch.states.data() + sample * n, state, n);
      std::memcpy(view.labels.data(), state, n);
      encode_into_u8(view, cfg.encode, batch.features.data() + sample * batch.feature_dim);
      if (cfg.record_moves) batch.moves[sample] = static_cast<u16>(g);
    }
  }
  return batch;
}

TrainBatch EpochStream::batch_for_epoch(i64 epoch) const {
  WalkConfig cfg = cfg_;
  cfg.seed = derive_seed(cfg_.seed, "epoch", static_cast<u64>(epoch));
  return generate(*def_, cfg);
}

void dump_batch(const TrainBatch& batch, const std::string& path) {
  ByteWriter w;
  w.put_bytes("CBTB", 4);
  w.put_u32(static_cast<u32>(batch.n));
  w.put_u32(static_cast<u32>(batch.feature_dim));
  w.put_u64(static_cast<u64>(batch.num_samples));
  for (u16 t : batch.targets) w.put_u16(t);
  w.put_bytes(batch.features.data(), batch.features.size());
  write_file_atomic(path, w.bytes());
}

TrainBatch load_batch(const std::string& path, EncodeMode encode, u16 num_labels) {
  std::string data = read_file(path);
  ByteReader r(data, path);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, "CBTB", 4) != 0)
    throw ChecksumError(path + ": not a training batch file (bad magic)");
  TrainBatch batch;
  batch.n = static_cast<int>(r.get_u32());
  batch.feature_dim = r.get_u32();
  batch.num_samples = static_cast<i64>(r.get_u64());
  i64 expected = feature_dim(batch.n, num_labels, encode);
  if (batch.feature_dim != expected)
    throw DimensionError(path + ": feature_dim " + std::to_string(batch.feature_dim) +
                         " does not match encoding (expected " + std::to_string(expected) + ")");
  batch.targets.resize(batch.num_samples);
  for (auto& t : batch.targets) t = r.get_u16();
  batch.features.resize(batch.num_samples * batch.feature_dim);
  r.get_bytes(batch.features.data(), batch.features.size());
  if (r.remaining() != 0) throw ChecksumError(path + ": trailing bytes after payload");

  // Rebuild raw label rows from the encoding (states are not stored).
  batch.states.resize(batch.num_samples * batch.n);
  if (encode == EncodeMode::Raw) {
    batch.states.assign(batch.features.begin(), batch.features.end());
  } else {
    for (i64 s = 0; s < batch.num_samples; ++s) {
      const u8* row = batch.features.data() + s * batch.feature_dim;
      for (int p = 0; p < batch.n; ++p) {
        int found = -1;
        for (int l = 0; l < num_labels; ++l)
          if (row[p * num_labels + l]) {
            if (found >= 0)
              throw ChecksumError(path + ": sample " + std::to_string(s) +
                                  " has multiple hot labels at position " + std::to_string(p));
            found = l;
          }
        if (found < 0)
          throw ChecksumError(path + ": sample " + std::to_string(s) +
                              " has no hot label at position " + std::to_string(p));
        batch.states[s * batch.n + p] = static_cast<u8>(found);
      }
    }
  }
  return batch;
}

}  // namespace cayley
