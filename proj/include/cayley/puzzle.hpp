#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cayley/perm.hpp"

namespace cayley {

enum class Metric { QTM, UQTM, Custom };

std::string metric_name(Metric m);
std::optional<Metric> metric_from_name(const std::string& s);

struct Generator {
  std::string name;
  Permutation perm;
};

// A puzzle: a solved labeling plus a generator set closed under inverses.
// Immutable after construction; share freely across threads.
struct PuzzleDef {
  std::string name;
  int n = 0;
  u16 num_labels = 0;
  StateVector solved;
  std::vector<Generator> generators;
  Metric metric = Metric::Custom;
  // inverse_index[i] is the index of the generator that undoes generator i
  // (an involution; self-inverse generators map to themselves).
  std::vector<u16> inverse_index;
  // Non-fatal oddities found at load time (e.g. duplicate generators).
  std::vector<std::string> warnings;

  int gen_count() const { return static_cast<int>(generators.size()); }
  // Index of a generator by name, or -1.
  int find_move(const std::string& name) const;
  StateVector apply_move(int gen, const StateVector& s) const;

  // Throws unless every structural invariant holds (bijective generators,
  // consistent sizes, valid labels, correct inverse_index).
  void validate() const;
};

// N x N x N sticker cube, size 2..5.
//  - QTM: the 12 outer-face quarter turns U U' D D' L L' R R' F F' B B'.
//  - UQTM: every slice quarter turn, 6*size generators. Slices are named
//    from the nearer face, 1-based: U is the face layer, 2U the next inner
//    slice, and for odd sizes the middle slice belongs to U/R/F.
//  - fix_corner (size 2, QTM only): drops the 6 generators that move the
//    DLB corner cubie, quotienting out whole-cube rotations; 6 generators
//    remain and the state count drops 24-fold.
// Labels are face indices in the order U, D, L, R, F, B.
PuzzleDef builtin_cube(int size, Metric metric, bool fix_corner = false);

// Parses "builtin:<size>:<qtm|uqtm>[:fixed]" into builtin_cube arguments;
// returns nullopt if spec does not start with "builtin:".
std::optional<PuzzleDef> parse_builtin_spec(const std::string& spec);

// JSON puzzle files: {"name", "n", "num_labels", "solved", "generators",
// optional "metric"}. Generators are synthesized-closed under inverses on
// load (a missing inverse of "U" is added as "U'"). save -> load round-trips
// to an identical PuzzleDef, generator order preserved.
PuzzleDef load_puzzle(const std::string& path);
void save_puzzle(const PuzzleDef& def, const std::string& path);

// Scramble CSV: header "id,moves,state"; moves space-separated generator
// names, state semicolon-separated labels; at least one of the two per row.
// Records always carry a realized state after loading.
struct ScrambleRecord {
  std::string id;
  std::vector<std::string> moves;  // empty when the file only gave a state
  bool has_moves = false;
  StateVector state;
};

std::vector<ScrambleRecord> load_scrambles(const std::string& path, const PuzzleDef& def);
void save_scrambles(const std::vector<ScrambleRecord>& records, const std::string& path);

// Applies a move-name sequence to `from` (default: solved).
StateVector replay(const PuzzleDef& def, const std::vector<std::string>& moves);
StateVector replay(const PuzzleDef& def, const std::vector<std::string>& moves,
                   const StateVector& from);

// Random-walk scramble depth that comfortably exceeds the puzzle diameter;
// table for the builtin cubes, conservative default for custom puzzles.
int default_kmax(const PuzzleDef& def);

}  // namespace cayley
