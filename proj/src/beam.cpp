#include "cayley/beam.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "cayley/rng.hpp"

namespace cayley {

void TableScorer::score(const u8* states, i64 count, float* out) const {
  const int n = table_->n;
  StateVector s;
  s.num_labels = table_->num_labels;
  s.labels.resize(n);
  for (i64 i = 0; i < count; ++i) {
    std::memcpy(s.labels.data(), states + i * n, n);
    auto d = table_->lookup(s);
    out[i] = d ? static_cast<float>(*d) : std::numeric_limits<float>::infinity();
  }
}

u64 hash_state(const u8* labels, int n, u64 seed) {
  u64 h = hash_bytes(labels, static_cast<size_t>(n), seed);
  return h == 0 ? 0x9e3779b97f4a7c15ull : h;
}

HashSet64::HashSet64(u64 expect) {
  u64 cap = 64;
  while (cap * 3 < expect * 4) cap <<= 1;  // keep load under 3/4 at `expect`
  slots_.assign(cap, 0);
  mask_ = cap - 1;
}

void HashSet64::grow() {
  std::vector<u64> old = std::move(slots_);
  slots_.assign(old.size() * 2, 0);
  mask_ = slots_.size() - 1;
  for (u64 h : old) {
    if (h == 0) continue;
    u64 i = h & mask_;
    while (slots_[i] != 0) i = (i + 1) & mask_;
    slots_[i] = h;
  }
}

bool HashSet64::insert(u64 h) {
  u64 i = h & mask_;
  while (slots_[i] != 0) {
    if (slots_[i] == h) return false;
    i = (i + 1) & mask_;
  }
  if ((count_ + 1) * 4 > slots_.size() * 3) {
    grow();
    i = h & mask_;
    while (slots_[i] != 0) i = (i + 1) & mask_;
  }
  slots_[i] = h;
  ++count_;
  return true;
}

bool HashSet64::contains(u64 h) const {
  u64 i = h & mask_;
  while (slots_[i] != 0) {
    if (slots_[i] == h) return true;
    i = (i + 1) & mask_;
  }
  return false;
}

namespace {

struct Candidate {
  u64 hash;
  u32 parent;
  u16 move;
};

struct ExactSets {
  std::unordered_set<std::string> visited;
  std::unordered_set<std::string> layer;
};

}  // namespace

BeamResult beam_search(const PuzzleDef& def, const StateVector& start, const Scorer& scorer,
                       const BeamConfig& cfg) {
  const int n = def.n;
  const int gens = def.gen_count();
  if (static_cast<int>(start.size()) != n)
    throw DimensionError("beam_search: start state has " + std::to_string(start.size()) +
                         " labels, puzzle '" + def.name + "' expects " + std::to_string(n));
  if (scorer.state_size() != n)
    throw DimensionError("beam_search: scorer expects state size " +
                         std::to_string(scorer.state_size()) + ", puzzle '" + def.name +
                         "' has " + std::to_string(n));
  if (cfg.width < 1) throw DimensionError("beam_search: width must be >= 1");
  if (cfg.width > (i64(1) << 31))
    throw CapacityError("beam_search: width " + std::to_string(cfg.width) + " exceeds 2^31");

  BeamResult result;
  if (start == def.solved) {
    result.solved = true;
    return result;
  }

  const u64 solved_hash = hash_state(def.solved.labels.data(), n, cfg.hash_seed);
  HashSet64 visited(static_cast<u64>(cfg.width) * 4);
  ExactSets exact;
  const u64 start_hash = hash_state(start.labels.data(), n, cfg.hash_seed);
  if (cfg.exact_dedup)
    exact.visited.emplace(reinterpret_cast<const char*>(start.labels.data()), n);
  else
    visited.insert(start_hash);

  // Kept layers: parents index into the previous layer, moves are generator
  // indices. States are only materialized for the current layer.
  std::vector<std::vector<u32>> parents_by_layer;
  std::vector<std::vector<u16>> moves_by_layer;
  std::vector<u8> cur(start.labels.begin(), start.labels.end());
  i64 cur_count = 1;

  std::vector<Candidate> cands;
  std::vector<float> scores;
  std::vector<u8> child(n);
  std::vector<u8> chunk_states;
  std::vector<i64> order;
  std::vector<u8> next;

  auto reconstruct = [&](u32 leaf_parent, u16 last_move) {
    std::vector<u16> moves(parents_by_layer.size() + 1);
    moves.back() = last_move;
    u32 idx = leaf_parent;
    for (i64 layer = static_cast<i64>(parents_by_layer.size()) - 1; layer >= 0; --layer) {
      moves[layer] = moves_by_layer[layer][idx];
      idx = parents_by_layer[layer][idx];
    }
    return moves;
  };

  for (int step = 1; step <= cfg.max_steps; ++step) {
    // Pass 1: generate, goal-check, dedup; keep only (hash, parent, move).
    cands.clear();
    cands.reserve(static_cast<size_t>(cur_count) * gens);
    HashSet64 layer_seen(static_cast<u64>(cur_count) * gens / 2);
    exact.layer.clear();
    for (i64 i = 0; i < cur_count; ++i) {
      const u8* s = cur.data() + i * n;
      for (int g = 0; g < gens; ++g) {
        apply_into(def.generators[g].perm, s, child.data());
        u64 h = hash_state(child.data(), n, cfg.hash_seed);
        if (h == solved_hash &&
            std::memcmp(child.data(), def.solved.labels.data(), n) == 0) {
          result.solved = true;
          result.moves = reconstruct(static_cast<u32>(i), static_cast<u16>(g));
          result.steps_taken = step;
          return result;
        }
        if (cfg.exact_dedup) {
          std::string key(reinterpret_cast<const char*>(child.data()), n);
          if (exact.visited.count(key) || !exact.layer.insert(std::move(key)).second) continue;
        } else {
          if (visited.contains(h) || !layer_seen.insert(h)) continue;
        }
        cands.push_back({h, static_cast<u32>(i), static_cast<u16>(g)});
      }
    }
    if (cands.empty()) {
      result.steps_taken = step - 1;
      return result;
    }

    // Pass 2: rebuild children chunkwise and score them.
    const i64 total = static_cast<i64>(cands.size());
    scores.resize(total);
    const i64 chunk = 4096;
    chunk_states.resize(std::min(chunk, total) * n);
    for (i64 off = 0; off < total; off += chunk) {
      i64 m = std::min(chunk, total - off);
      for (i64 k = 0; k < m; ++k) {
        const Candidate& c = cands[off + k];
        apply_into(def.generators[c.move].perm, cur.data() + i64(c.parent) * n,
                   chunk_states.data() + k * n);
      }
      scorer.score(chunk_states.data(), m, scores.data() + off);
    }
    result.nodes_scored += total;

    // Prune to width on (score, hash, arrival); re-sort survivors by arrival
    // so layer order never depends on the selection algorithm.
    order.resize(total);
    for (i64 k = 0; k < total; ++k) order[k] = k;
    auto key_less = [&](i64 a, i64 b) {
      if (scores[a] != scores[b]) return scores[a] < scores[b];
      if (cands[a].hash != cands[b].hash) return cands[a].hash < cands[b].hash;
      return a < b;
    };
    i64 kept = total;
    if (total > cfg.width) {
      kept = cfg.width;
      std::nth_element(order.begin(), order.begin() + kept, order.end(), key_less);
      order.resize(kept);
      std::sort(order.begin(), order.end());
    }

    next.resize(kept * n);
    auto& parents = parents_by_layer.emplace_back();
    auto& moves = moves_by_layer.emplace_back();
    parents.resize(kept);
    moves.resize(kept);
    float best = std::numeric_limits<float>::infinity();
    float worst = -std::numeric_limits<float>::infinity();
    for (i64 j = 0; j < kept; ++j) {
      const Candidate& c = cands[order[j]];
      parents[j] = c.parent;
      moves[j] = c.move;
      apply_into(def.generators[c.move].perm, cur.data() + i64(c.parent) * n,
                 next.data() + j * n);
      if (cfg.exact_dedup)
        exact.visited.emplace(reinterpret_cast<const char*>(next.data() + j * n), n);
      else
        visited.insert(c.hash);
      best = std::min(best, scores[order[j]]);
      worst = std::max(worst, scores[order[j]]);
    }
    if (cfg.keep_trace)
      result.trace.push_back({step, cur_count * gens, total, kept, best, worst});
    cur.swap(next);
    cur_count = kept;
    result.steps_taken = step;
  }
  return result;
}

bool verify_result(const PuzzleDef& def, const StateVector& start, const BeamResult& result) {
  if (!result.solved) return false;
  StateVector s = start;
  for (u16 g : result.moves) {
    if (g >= def.generators.size()) return false;
    s = apply(def.generators[g].perm, s);
  }
  return s == def.solved;
}

}  // namespace cayley
