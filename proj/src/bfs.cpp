#include "cayley/bfs.hpp"

#include <algorithm>
#include <cstring>

#include "cayley/binio.hpp"

namespace cayley {

namespace {
constexpr u64 kKeyHashSeed = 0x5ca1ab1e0ddba11ull;
constexpr double kMaxLoad = 0.6;
}  // namespace

PackedStateMap::PackedStateMap(int n, u16 num_labels, u64 mem_budget)
    : n_(n), bits_(bits_for(num_labels)), budget_(mem_budget) {
  words_ = (n * bits_ + 63) / 64;
  slots_.assign(1 << 16, 0);
  mask_ = slots_.size() - 1;
}

void PackedStateMap::pack(const u8* labels, u64* out) const {
  std::memset(out, 0, words_ * 8);
  int word = 0, off = 0;
  for (int i = 0; i < n_; ++i) {
    out[word] |= static_cast<u64>(labels[i]) << off;
    off += bits_;
    if (off >= 64) {
      off -= 64;
      ++word;
      // Bits that crossed the word boundary.
      if (off > 0) out[word] |= static_cast<u64>(labels[i]) >> (bits_ - off);
    }
  }
}

void PackedStateMap::unpack(u64 idx, u8* labels) const {
  const u64* key = arena_.data() + idx * words_;
  const u64 mask = (bits_ == 64) ? ~0ull : ((1ull << bits_) - 1);
  int word = 0, off = 0;
  for (int i = 0; i < n_; ++i) {
    u64 v = key[word] >> off;
    if (off + bits_ > 64) v |= key[word + 1] << (64 - off);
    labels[i] = static_cast<u8>(v & mask);
    off += bits_;
    if (off >= 64) {
      off -= 64;
      ++word;
    }
  }
}

u64 PackedStateMap::hash_key(const u64* key) const {
  u64 h = kKeyHashSeed;
  for (int w = 0; w < words_; ++w) h = mix64(h ^ key[w]);
  return h;
}

u64 PackedStateMap::bytes() const {
  return arena_.capacity() * 8 + depths_.capacity() + slots_.capacity() * 4;
}

void PackedStateMap::grow() {
  u64 newsize = slots_.size() * 2;
  if ((arena_.capacity() * 8 + depths_.capacity() + newsize * 4) > budget_)
    throw CapacityError("state map: memory budget of " + std::to_string(budget_) +
                        " bytes exceeded");
  slots_.assign(newsize, 0);
  mask_ = newsize - 1;
  for (u64 idx = 0; idx < count_; ++idx) {
    u64 h = hash_key(arena_.data() + idx * words_) & mask_;
    while (slots_[h] != 0) h = (h + 1) & mask_;
    slots_[h] = static_cast<u32>(idx + 1);
  }
}

std::pair<u64, bool> PackedStateMap::insert(const u8* labels, u8 depth) {
  if (n_ == 0) throw Error("PackedStateMap: not initialized");
  u64 key[16];
  u64* kp = key;
  std::vector<u64> big;
  if (words_ > 16) {
    big.resize(words_);
    kp = big.data();
  }
  pack(labels, kp);
  u64 h = hash_key(kp) & mask_;
  while (true) {
    u32 slot = slots_[h];
    if (slot == 0) break;
    if (std::memcmp(arena_.data() + u64(slot - 1) * words_, kp, words_ * 8) == 0)
      return {slot - 1, false};
    h = (h + 1) & mask_;
  }
  if (count_ + 1 > static_cast<u64>(kMaxLoad * slots_.size())) {
    grow();
    h = hash_key(kp) & mask_;
    while (slots_[h] != 0) h = (h + 1) & mask_;
  }
  arena_.insert(arena_.end(), kp, kp + words_);
  depths_.push_back(depth);
  slots_[h] = static_cast<u32>(count_ + 1);
  ++count_;
  if (bytes() > budget_)
    throw CapacityError("state map: memory budget of " + std::to_string(budget_) +
                        " bytes exceeded");
  return {count_ - 1, true};
}

i64 PackedStateMap::find(const u8* labels) const {
  if (count_ == 0) return -1;
  u64 key[16];
  u64* kp = key;
  std::vector<u64> big;
  if (words_ > 16) {
    big.resize(words_);
    kp = big.data();
  }
  pack(labels, kp);
  u64 h = hash_key(kp) & mask_;
  while (true) {
    u32 slot = slots_[h];
    if (slot == 0) return -1;
    if (std::memcmp(arena_.data() + u64(slot - 1) * words_, kp, words_ * 8) == 0)
      return static_cast<i64>(slot - 1);
    h = (h + 1) & mask_;
  }
}

std::optional<int> DistanceTable::lookup(const StateVector& s) const {
  if (static_cast<int>(s.size()) != n)
    throw DimensionError("DistanceTable::lookup: state size mismatch");
  i64 idx = map.find(s.labels.data());
  if (idx < 0) return std::nullopt;
  return map.depth(idx);
}

StateVector DistanceTable::state(u64 idx) const {
  StateVector s;
  s.num_labels = num_labels;
  s.labels.resize(n);
  map.unpack(idx, s.labels.data());
  return s;
}

StateVector DistanceTable::sample_state(SplitMix64& rng) const {
  return state(rng.bounded(map.size()));
}

void DistanceTable::dump(const std::string& path, u64 hash_seed) const {
  std::vector<std::pair<u64, u8>> rows;
  rows.reserve(map.size());
  std::vector<u8> labels(n);
  for (u64 i = 0; i < map.size(); ++i) {
    map.unpack(i, labels.data());
    rows.emplace_back(hash_bytes(labels.data(), labels.size(), hash_seed), map.depth(i));
  }
  std::sort(rows.begin(), rows.end());

  ByteWriter w;
  w.put_bytes("CBFS", 4);
  w.put_u32(1);  // version
  w.put_u32(static_cast<u32>(n));
  w.put_u32(num_labels);
  w.put_u64(map.size());
  w.put_u64(hash_seed);
  for (const auto& [k, d] : rows) w.put_u64(k);
  for (const auto& [k, d] : rows) w.put_u8(d);
  u32 crc = crc32(w.bytes().data(), w.size());
  w.put_u32(crc);
  write_file_atomic(path, w.bytes());
}

void DistanceTable::write_histogram_csv(const std::string& path) const {
  std::string out = "depth,count\n";
  for (size_t d = 0; d < histogram.size(); ++d)
    out += std::to_string(d) + "," + std::to_string(histogram[d]) + "\n";
  write_file_atomic(path, out);
}

DistanceTable enumerate(const PuzzleDef& def, const EnumerateOptions& opts) {
  DistanceTable table;
  table.n = def.n;
  table.num_labels = def.num_labels;
  table.map = PackedStateMap(def.n, def.num_labels, opts.mem_budget);

  table.map.insert(def.solved.labels.data(), 0);
  std::vector<u8> cur(def.n), child(def.n);
  u64 lo = 0, hi = 1;
  int d = 0;
  while (lo < hi && (opts.depth_limit < 0 || d < opts.depth_limit)) {
    if (d >= 255) throw Error("enumerate: depth exceeds 255");
    for (u64 idx = lo; idx < hi; ++idx) {
      table.map.unpack(idx, cur.data());
      for (const auto& g : def.generators) {
        apply_into(g.perm, cur.data(), child.data());
        try {
          table.map.insert(child.data(), static_cast<u8>(d + 1));
        } catch (const CapacityError& e) {
          throw CapacityError(std::string(e.what()) + " after reaching depth " +
                              std::to_string(d + 1) + " with " + std::to_string(table.map.size()) +
                              " states (puzzle '" + def.name + "')");
        }
      }
    }
    lo = hi;
    hi = table.map.size();
    ++d;
  }
  table.complete = (lo == hi);

  table.histogram.clear();
  for (u64 i = 0; i < table.map.size(); ++i) {
    u8 depth = table.map.depth(i);
    if (depth >= table.histogram.size()) table.histogram.resize(depth + 1, 0);
    table.histogram[depth]++;
  }
  table.diameter = static_cast<int>(table.histogram.size()) - 1;
  double sum = 0;
  for (size_t depth = 0; depth < table.histogram.size(); ++depth)
    sum += static_cast<double>(table.histogram[depth]) * static_cast<double>(depth);
  table.mean_depth = sum / static_cast<double>(table.map.size());
  return table;
}

int optimal_length(const PuzzleDef& def, const StateVector& start, u64 mem_budget) {
  if (static_cast<int>(start.size()) != def.n)
    throw DimensionError("optimal_length: state size mismatch");
  if (start == def.solved) return 0;

  // Side 0 grows from `start`, side 1 from solved. The graph is undirected
  // (generators are closed under inverses), so both sides expand with the
  // same generator set.
  PackedStateMap side[2] = {PackedStateMap(def.n, def.num_labels, mem_budget),
                            PackedStateMap(def.n, def.num_labels, mem_budget)};
  side[0].insert(start.labels.data(), 0);
  side[1].insert(def.solved.labels.data(), 0);
  u64 lo[2] = {0, 0}, hi[2] = {1, 1};
  int depth[2] = {0, 0};
  const int kUnset = -1;
  int best = kUnset;

  std::vector<u8> cur(def.n), child(def.n);
  while (best == kUnset || best > depth[0] + depth[1] + 1) {
    bool alive0 = lo[0] < hi[0], alive1 = lo[1] < hi[1];
    if (!alive0 || !alive1) break;
    int x = (hi[0] - lo[0] <= hi[1] - lo[1]) ? 0 : 1;
    int y = 1 - x;
    if (depth[x] >= 254) throw Error("optimal_length: depth exceeds 254");
    u8 nd = static_cast<u8>(depth[x] + 1);
    for (u64 idx = lo[x]; idx < hi[x]; ++idx) {
      side[x].unpack(idx, cur.data());
      for (const auto& g : def.generators) {
        apply_into(g.perm, cur.data(), child.data());
        std::pair<u64, bool> ins;
        try {
          ins = side[x].insert(child.data(), nd);
        } catch (const CapacityError& e) {
          throw CapacityError(std::string(e.what()) + " during bidirectional search at depths " +
                              std::to_string(depth[0]) + "+" + std::to_string(depth[1]) +
                              " (puzzle '" + def.name + "')");
        }
        if (!ins.second) continue;
        i64 other = side[y].find(child.data());
        if (other >= 0) {
          int total = nd + side[y].depth(other);
          if (best == kUnset || total < best) best = total;
        }
      }
    }
    lo[x] = hi[x];
    hi[x] = side[x].size();
    depth[x] += 1;
  }
  if (best == kUnset)
    throw Error("optimal_length: state is not reachable from solved (puzzle '" + def.name + "')");
  return best;
}

}  // namespace cayley
