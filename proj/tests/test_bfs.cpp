#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "cayley/bfs.hpp"
#include "cayley/binio.hpp"

using namespace cayley;

namespace {

// Symmetric group S3 generated by the two adjacent transpositions. Depths
// are tiny and fully known: 1 state at 0, 2 at 1, 2 at 2, 1 at 3.
PuzzleDef make_s3() {
  PuzzleDef def;
  def.name = "s3";
  def.n = 3;
  def.num_labels = 3;
  def.solved = StateVector{{0, 1, 2}, 3};
  def.generators = {{"a", Permutation{{1, 0, 2}}}, {"b", Permutation{{0, 2, 1}}}};
  def.inverse_index = {0, 1};
  def.validate();
  return def;
}

// Cyclic group Z5 with the rotation and its inverse.
PuzzleDef make_cyc5() {
  PuzzleDef def;
  def.name = "cyc5";
  def.n = 5;
  def.num_labels = 5;
  def.solved = StateVector{{0, 1, 2, 3, 4}, 5};
  def.generators = {{"r", Permutation{{1, 2, 3, 4, 0}}}, {"r'", Permutation{{4, 0, 1, 2, 3}}}};
  def.inverse_index = {1, 0};
  def.validate();
  return def;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("packed state map: pack/unpack round trip at both widths") {
  SplitMix64 rng(7);
  // 5-bit packing (labels <= 32) with a width that straddles word boundaries.
  {
    PackedStateMap map(24, 24, u64(1) << 30);
    CHECK(PackedStateMap::bits_for(24) == 5);
    CHECK(map.words() == 2);
    std::vector<u8> labels(24), back(24);
    for (int trial = 0; trial < 200; ++trial) {
      for (auto& l : labels) l = static_cast<u8>(rng.bounded(24));
      auto [idx, fresh] = map.insert(labels.data(), static_cast<u8>(trial % 11));
      map.unpack(idx, back.data());
      CHECK(back == labels);
    }
  }
  // 8-bit packing kicks in above 32 labels.
  {
    PackedStateMap map(10, 40, u64(1) << 30);
    CHECK(PackedStateMap::bits_for(40) == 8);
    CHECK(map.words() == 2);
    std::vector<u8> labels(10), back(10);
    for (auto& l : labels) l = static_cast<u8>(rng.bounded(40));
    auto [idx, fresh] = map.insert(labels.data(), 3);
    CHECK(fresh);
    map.unpack(idx, back.data());
    CHECK(back == labels);
  }
}

TEST_CASE("packed state map: dedup, find, depth, growth") {
  PackedStateMap map(4, 8, u64(1) << 30);
  SplitMix64 rng(99);
  std::vector<std::vector<u8>> inserted;
  for (int i = 0; i < 300000; ++i) {  // forces several grows past 2^16 slots
    std::vector<u8> labels(4);
    for (auto& l : labels) l = static_cast<u8>(rng.bounded(8));
    map.insert(labels.data(), static_cast<u8>(i % 7));
    if (i < 50) inserted.push_back(labels);
  }
  CHECK(map.size() == 4096);  // 8^4 possible states, all hit at this volume
  for (const auto& labels : inserted) {
    i64 idx = map.find(labels.data());
    REQUIRE(idx >= 0);
    // reinsert returns the same index and reports non-fresh
    auto [idx2, fresh] = map.insert(labels.data(), 99);
    CHECK(idx2 == static_cast<u64>(idx));
    CHECK_FALSE(fresh);
  }
  // depth is the value stored by the first insert
  std::vector<u8> first(4, 0);
  SplitMix64 replay(99);
  for (auto& l : first) l = static_cast<u8>(replay.bounded(8));
  CHECK(map.depth(map.find(first.data())) == 0);
  PackedStateMap empty;
  std::vector<u8> any{0, 0, 0, 0};
  CHECK(empty.find(any.data()) == -1);
  CHECK_THROWS_AS(empty.insert(any.data(), 0), Error);
}

TEST_CASE("packed state map: memory budget enforced") {
  PackedStateMap map(4, 8, 1000);  // slot table alone exceeds this
  std::vector<u8> labels{1, 2, 3, 4};
  CHECK_THROWS_AS(map.insert(labels.data(), 0), CapacityError);
}

TEST_CASE("enumerate: S3 exact distance distribution") {
  auto table = enumerate(make_s3());
  CHECK(table.size() == 6);
  CHECK(table.complete);
  CHECK(table.diameter == 3);
  CHECK(table.histogram == std::vector<u64>{1, 2, 2, 1});
  CHECK(table.mean_depth == doctest::Approx(1.5));
  // depth of every state agrees with a hand-computed table
  CHECK(table.lookup(StateVector{{0, 1, 2}, 3}) == 0);
  CHECK(table.lookup(StateVector{{1, 0, 2}, 3}) == 1);
  CHECK(table.lookup(StateVector{{0, 2, 1}, 3}) == 1);
  CHECK(table.lookup(StateVector{{1, 2, 0}, 3}) == 2);
  CHECK(table.lookup(StateVector{{2, 0, 1}, 3}) == 2);
  CHECK(table.lookup(StateVector{{2, 1, 0}, 3}) == 3);
  CHECK_FALSE(table.lookup(StateVector{{0, 0, 0}, 3}).has_value());
}

TEST_CASE("enumerate: Z5 and depth limits") {
  auto full = enumerate(make_cyc5());
  CHECK(full.size() == 5);
  CHECK(full.histogram == std::vector<u64>{1, 2, 2});
  CHECK(full.complete);
  CHECK(full.mean_depth == doctest::Approx(1.2));

  EnumerateOptions opts;
  opts.depth_limit = 1;
  auto cut = enumerate(make_cyc5(), opts);
  CHECK(cut.size() == 3);
  CHECK_FALSE(cut.complete);
  CHECK(cut.diameter == 1);
  CHECK(cut.histogram == std::vector<u64>{1, 2});

  // a limit equal to the diameter finds every state but cannot prove
  // closure (the last level is never expanded); one past the diameter can
  opts.depth_limit = 2;
  auto all = enumerate(make_cyc5(), opts);
  CHECK(all.size() == 5);
  CHECK_FALSE(all.complete);
  opts.depth_limit = 3;
  auto proven = enumerate(make_cyc5(), opts);
  CHECK(proven.size() == 5);
  CHECK(proven.complete);
}

TEST_CASE("enumerate: 2x2x2 fixed-corner quarter-turn distribution") {
  // Classic exact census of the 2x2x2 cube (one corner pinned) under
  // quarter turns: 3,674,160 states, diameter 14.
  const std::vector<u64> expected{1,      6,      27,      120,     534,
                                  2256,   8969,   33058,   114149,  360508,
                                  930588, 1350852, 782536, 90280,   276};
  auto def = builtin_cube(2, Metric::QTM, true);
  auto table = enumerate(def);
  CHECK(table.size() == 3674160);
  CHECK(table.complete);
  CHECK(table.diameter == 14);
  CHECK(table.histogram == expected);
  CHECK(table.mean_depth == doctest::Approx(39190008.0 / 3674160.0).epsilon(1e-12));

  // cross-check the bidirectional searcher against the full table
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 12; ++trial) {
    StateVector s = table.sample_state(rng);
    int d = optimal_length(def, s);
    CHECK(d == *table.lookup(s));
  }
}

TEST_CASE("enumerate: memory budget failure carries context") {
  auto def = builtin_cube(2, Metric::QTM, true);
  EnumerateOptions opts;
  opts.mem_budget = 2 * 1000 * 1000;
  try {
    enumerate(def, opts);
    FAIL("expected CapacityError");
  } catch (const CapacityError& e) {
    std::string msg = e.what();
    CHECK(msg.find("after reaching depth") != std::string::npos);
    CHECK(msg.find("cube2-qtm-fixed") != std::string::npos);
  }
}

TEST_CASE("optimal_length: exact on every S3 state and on cube scrambles") {
  auto def = make_s3();
  auto table = enumerate(def);
  for (u64 i = 0; i < table.size(); ++i)
    CHECK(optimal_length(def, table.state(i)) == table.depth(i));

  auto cube = builtin_cube(3, Metric::QTM, false);
  CHECK(optimal_length(cube, cube.solved) == 0);
  CHECK(optimal_length(cube, replay(cube, {"U"})) == 1);
  // U applied three times is one move from solved (U')
  auto s = replay(cube, {"U", "U", "U"});
  CHECK(optimal_length(cube, s) == 1);
  CHECK(optimal_length(cube, replay(cube, {"U", "R"})) == 2);
  CHECK(optimal_length(cube, replay(cube, {"U", "R'", "F", "L"})) == 4);
  // a scramble never lands farther than its move count
  SplitMix64 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    StateVector state = cube.solved;
    for (int k = 0; k < 5; ++k)
      state = apply(cube.generators[rng.bounded(cube.gen_count())].perm, state);
    CHECK(optimal_length(cube, state) <= 5);
  }
}

TEST_CASE("optimal_length: unreachable states are reported") {
  // Z3 rotations only reach the three cyclic shifts; a transposition is off
  // the orbit.
  PuzzleDef def;
  def.name = "cyc3";
  def.n = 3;
  def.num_labels = 3;
  def.solved = StateVector{{0, 1, 2}, 3};
  def.generators = {{"r", Permutation{{1, 2, 0}}}, {"r'", Permutation{{2, 0, 1}}}};
  def.inverse_index = {1, 0};
  try {
    optimal_length(def, StateVector{{1, 0, 2}, 3});
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("not reachable") != std::string::npos);
  }
}

TEST_CASE("distance table: dump format and histogram csv") {
  auto table = enumerate(make_s3());
  std::string bin = temp_path("cayley_test_s3.cbfs");
  std::string csv = temp_path("cayley_test_s3.csv");
  const u64 seed = 0xfeedu;
  table.dump(bin, seed);
  table.write_histogram_csv(csv);

  std::string data = read_file(bin);
  // trailing CRC covers everything before it
  ByteReader tail(data.data() + data.size() - 4, 4, bin);
  CHECK(tail.get_u32() == crc32(data.data(), data.size() - 4));

  ByteReader r(data.data(), data.size() - 4, bin);
  char magic[4];
  r.get_bytes(magic, 4);
  CHECK(std::string(magic, 4) == "CBFS");
  CHECK(r.get_u32() == 1);
  CHECK(r.get_u32() == 3);        // n
  CHECK(r.get_u32() == 3);        // num_labels
  CHECK(r.get_u64() == 6);        // count
  CHECK(r.get_u64() == seed);     // hash seed
  u64 prev = 0;
  for (int i = 0; i < 6; ++i) {
    u64 k = r.get_u64();
    if (i > 0) CHECK(k > prev);  // sorted, distinct
    prev = k;
  }
  u64 depth_sum = 0;
  for (int i = 0; i < 6; ++i) depth_sum += r.get_u8();
  CHECK(depth_sum == 9);  // 0+1+1+2+2+3
  CHECK(r.remaining() == 0);

  CHECK(read_file(csv) == "depth,count\n0,1\n1,2\n2,2\n3,1\n");
  std::remove(bin.c_str());
  std::remove(csv.c_str());
}

TEST_CASE("distance table: sampling is deterministic and in-table") {
  EnumerateOptions opts;
  opts.depth_limit = 5;
  auto table = enumerate(builtin_cube(2, Metric::QTM, true), opts);
  SplitMix64 a(42), b(42);
  for (int i = 0; i < 10; ++i) {
    StateVector sa = table.sample_state(a);
    StateVector sb = table.sample_state(b);
    CHECK(sa == sb);
    CHECK(table.lookup(sa).has_value());
  }
}
