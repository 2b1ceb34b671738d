#include "cayley/puzzle.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

#include <json.hpp>

#include "cayley/binio.hpp"

namespace cayley {

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::QTM: return "QTM";
    case Metric::UQTM: return "UQTM";
    default: return "custom";
  }
}

std::optional<Metric> metric_from_name(const std::string& s) {
  std::string t;
  for (char c : s) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "qtm") return Metric::QTM;
  if (t == "uqtm") return Metric::UQTM;
  if (t == "custom") return Metric::Custom;
  return std::nullopt;
}

int PuzzleDef::find_move(const std::string& move) const {
  for (int i = 0; i < gen_count(); ++i)
    if (generators[i].name == move) return i;
  return -1;
}

StateVector PuzzleDef::apply_move(int gen, const StateVector& s) const {
  return apply(generators[gen].perm, s);
}

void PuzzleDef::validate() const {
  if (n <= 0 || n > 65535) throw DimensionError("puzzle '" + name + "': n out of range");
  if (num_labels == 0 || num_labels > 256)
    throw DimensionError("puzzle '" + name + "': num_labels must be in [1, 256]");
  if (static_cast<int>(solved.size()) != n || solved.num_labels != num_labels)
    throw DimensionError("puzzle '" + name + "': solved state size mismatch");
  for (int i = 0; i < n; ++i)
    if (solved.labels[i] >= num_labels)
      throw DimensionError("puzzle '" + name + "': solved label at position " +
                           std::to_string(i) + " exceeds num_labels");
  if (generators.empty()) throw DimensionError("puzzle '" + name + "': no generators");
  for (const auto& g : generators) {
    if (static_cast<int>(g.perm.size()) != n)
      throw DimensionError("generator '" + g.name + "': permutation size " +
                           std::to_string(g.perm.size()) + " does not match n=" + std::to_string(n));
    if (!is_permutation(g.perm.map))
      throw DimensionError("generator '" + g.name + "': not a bijection");
  }
  if (inverse_index.size() != generators.size())
    throw DimensionError("puzzle '" + name + "': inverse_index size mismatch");
  for (int i = 0; i < gen_count(); ++i) {
    int j = inverse_index[i];
    if (j < 0 || j >= gen_count() || inverse_index[j] != i ||
        !compose(generators[i].perm, generators[j].perm).is_identity())
      throw DimensionError("generator '" + generators[i].name + "': inverse_index is wrong");
  }
}

// --- cube geometry ---------------------------------------------------------
//
// Stickers live on an axis-aligned cube [0, 2N]^3 with doubled integer
// coordinates so that every sticker center is an exact lattice point: a
// sticker center has one coordinate on a face plane (0 or 2N) and the other
// two odd. x points right (R), y up (U), z toward the viewer (F). A sticker's
// cubie is reached by stepping one unit inward along the face normal. Quarter
// turns are exact 90-degree rotations of center and normal about the cube
// axis through (N, N, N); this derives all generator permutations from one
// rotation primitive instead of hand-written cycle tables.

namespace {

struct V3 {
  int v[3];
  int& operator[](int i) { return v[i]; }
  int operator[](int i) const { return v[i]; }
  bool operator==(const V3&) const = default;
};

constexpr const char* kFaceNames[6] = {"U", "D", "L", "R", "F", "B"};
constexpr int kFaceAxis[6] = {1, 1, 0, 0, 2, 2};
constexpr int kFaceSign[6] = {+1, -1, -1, +1, +1, -1};

V3 face_normal(int f) {
  V3 p{{0, 0, 0}};
  p[kFaceAxis[f]] = kFaceSign[f];
  return p;
}

// Center of sticker (f, r, c) in doubled coordinates; D = 2N. Rows run
// top-to-bottom when looking at the face from outside (back-to-front on U),
// columns left-to-right.
V3 sticker_center(int f, int r, int c, int D) {
  int a = 2 * r + 1, b = 2 * c + 1;
  switch (f) {
    case 0: return V3{{b, D, a}};              // U
    case 1: return V3{{b, 0, D - a}};          // D
    case 2: return V3{{0, D - a, b}};          // L
    case 3: return V3{{D, D - a, D - b}};      // R
    case 4: return V3{{b, D - a, D}};          // F
    default: return V3{{D - b, D - a, 0}};     // B
  }
}

int face_from_normal(const V3& nrm) {
  for (int f = 0; f < 6; ++f)
    if (face_normal(f) == nrm) return f;
  throw Error("cube geometry: invalid normal");
}

void rc_from_center(int f, const V3& p, int D, int& r, int& c) {
  switch (f) {
    case 0: r = (p[2] - 1) / 2; c = (p[0] - 1) / 2; break;
    case 1: r = (D - 1 - p[2]) / 2; c = (p[0] - 1) / 2; break;
    case 2: r = (D - 1 - p[1]) / 2; c = (p[2] - 1) / 2; break;
    case 3: r = (D - 1 - p[1]) / 2; c = (D - 1 - p[2]) / 2; break;
    case 4: r = (D - 1 - p[1]) / 2; c = (p[0] - 1) / 2; break;
    default: r = (D - 1 - p[1]) / 2; c = (D - 1 - p[0]) / 2; break;
  }
}

// Quarter turn about the given cube axis; k=+1 is counterclockwise viewed
// from the positive end of the axis (right-hand rule), k=-1 clockwise.
V3 rot90(const V3& p, int axis, int k) {
  int u = p[(axis + 1) % 3], w = p[(axis + 2) % 3];
  // For each axis the remaining coordinates (u, w) form a right-handed 2D
  // frame; ccw is (u, w) -> (-w, u) in that frame.
  V3 q = p;
  if (k > 0) {
    q[(axis + 1) % 3] = -w;
    q[(axis + 2) % 3] = u;
  } else {
    q[(axis + 1) % 3] = w;
    q[(axis + 2) % 3] = -u;
  }
  return q;
}

int sticker_index(int f, int r, int c, int N) { return f * N * N + r * N + c; }

// Permutation of one quarter turn: `slice` counts inward from the named
// face (0 = the face layer itself). Gather convention: map[target] = source.
Permutation cube_move(int N, int face, int slice, bool ccw) {
  const int D = 2 * N, n = 6 * N * N;
  const int axis = kFaceAxis[face], sign = kFaceSign[face];
  // Clockwise viewed from outside the face is a -90 rotation about the +axis
  // for positive faces and +90 for negative ones.
  const int k = ccw ? sign : -sign;
  Permutation perm = Permutation::identity(n);
  for (int j = 0; j < n; ++j) {
    int f = j / (N * N), r = (j / N) % N, c = j % N;
    V3 pos = sticker_center(f, r, c, D);
    V3 nrm = face_normal(f);
    int cubie = pos[axis] - nrm[axis];
    int layer = sign > 0 ? (D - 1 - cubie) / 2 : (cubie - 1) / 2;
    if (layer != slice) continue;
    V3 rel{{pos[0] - N, pos[1] - N, pos[2] - N}};
    rel = rot90(rel, axis, k);
    V3 pos2{{rel[0] + N, rel[1] + N, rel[2] + N}};
    V3 nrm2 = rot90(nrm, axis, k);
    int f2 = face_from_normal(nrm2);
    int r2, c2;
    rc_from_center(f2, pos2, D, r2, c2);
    perm.map[sticker_index(f2, r2, c2, N)] = static_cast<u16>(j);
  }
  return perm;
}

std::vector<u16> build_inverse_index(const std::vector<Generator>& gens) {
  std::vector<u16> idx(gens.size());
  for (size_t i = 0; i < gens.size(); ++i) {
    Permutation inv = inverse(gens[i].perm);
    int found = -1;
    for (size_t j = 0; j < gens.size(); ++j)
      if (gens[j].perm == inv) {
        found = static_cast<int>(j);
        break;
      }
    if (found < 0)
      throw DimensionError("generator '" + gens[i].name + "': no inverse in the generator set");
    idx[i] = static_cast<u16>(found);
  }
  return idx;
}

void warn_duplicates(PuzzleDef& def) {
  for (size_t i = 0; i < def.generators.size(); ++i)
    for (size_t j = i + 1; j < def.generators.size(); ++j)
      if (def.generators[i].perm == def.generators[j].perm)
        def.warnings.push_back("generators '" + def.generators[i].name + "' and '" +
                               def.generators[j].name + "' have identical permutations");
}

}  // namespace

PuzzleDef builtin_cube(int size, Metric metric, bool fix_corner) {
  if (size < 2 || size > 5)
    throw ParseError("builtin cube: size must be 2..5, got " + std::to_string(size));
  if (metric == Metric::Custom) throw ParseError("builtin cube: metric must be QTM or UQTM");
  if (fix_corner && !(size == 2 && metric == Metric::QTM))
    throw ParseError("builtin cube: fixed-corner variant exists only for size 2 QTM");

  const int N = size, n = 6 * N * N;
  PuzzleDef def;
  def.name = "cube" + std::to_string(N) + (metric == Metric::QTM ? "-qtm" : "-uqtm") +
             (fix_corner ? "-fixed" : "");
  def.n = n;
  def.num_labels = 6;
  def.metric = metric;
  def.solved.num_labels = 6;
  def.solved.labels.resize(n);
  for (int j = 0; j < n; ++j) def.solved.labels[j] = static_cast<u8>(j / (N * N));

  for (int f = 0; f < 6; ++f) {
    int owned = metric == Metric::QTM ? 1 : (kFaceSign[f] > 0 ? (N + 1) / 2 : N / 2);
    for (int s = 0; s < owned; ++s) {
      std::string base = s == 0 ? kFaceNames[f] : std::to_string(s + 1) + kFaceNames[f];
      def.generators.push_back({base, cube_move(N, f, s, false)});
      def.generators.push_back({base + "'", cube_move(N, f, s, true)});
    }
  }

  if (fix_corner) {
    // Stickers of the down-left-back corner cubie, whose cubie center in
    // doubled coordinates is (1, 1, 1).
    std::vector<int> anchor;
    for (int j = 0; j < n; ++j) {
      int f = j / (N * N), r = (j / N) % N, c = j % N;
      V3 pos = sticker_center(f, r, c, 2 * N);
      V3 nrm = face_normal(f);
      if (pos[0] - nrm[0] == 1 && pos[1] - nrm[1] == 1 && pos[2] - nrm[2] == 1)
        anchor.push_back(j);
    }
    std::vector<Generator> kept;
    for (auto& g : def.generators) {
      bool moves_anchor = std::any_of(anchor.begin(), anchor.end(),
                                      [&](int j) { return g.perm.map[j] != j; });
      if (!moves_anchor) kept.push_back(std::move(g));
    }
    def.generators = std::move(kept);
  }

  def.inverse_index = build_inverse_index(def.generators);
  def.validate();
  return def;
}

std::optional<PuzzleDef> parse_builtin_spec(const std::string& spec) {
  const std::string prefix = "builtin:";
  if (spec.rfind(prefix, 0) != 0) return std::nullopt;
  std::vector<std::string> parts;
  std::string cur;
  for (char c : spec.substr(prefix.size())) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() < 2 || parts.size() > 3)
    throw ParseError("builtin puzzle spec must be builtin:<size>:<qtm|uqtm>[:fixed], got '" +
                     spec + "'");
  int size;
  try {
    size = std::stoi(parts[0]);
  } catch (const std::exception&) {
    throw ParseError("builtin puzzle spec: bad size '" + parts[0] + "'");
  }
  auto metric = metric_from_name(parts[1]);
  if (!metric) throw ParseError("builtin puzzle spec: unknown metric '" + parts[1] + "'");
  bool fixed = false;
  if (parts.size() == 3) {
    if (parts[2] != "fixed")
      throw ParseError("builtin puzzle spec: unknown variant '" + parts[2] + "'");
    fixed = true;
  }
  return builtin_cube(size, *metric, fixed);
}

// --- JSON puzzle files ------------------------------------------------------

using ojson = nlohmann::ordered_json;

PuzzleDef load_puzzle(const std::string& path) {
  std::string text = read_file(path);
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  auto require = [&](const char* key) -> const ojson& {
    if (!j.contains(key)) throw ParseError(path + ": missing field '" + key + "'");
    return j.at(key);
  };

  PuzzleDef def;
  const ojson& jname = require("name");
  if (!jname.is_string()) throw ParseError(path + ": field 'name' must be a string");
  def.name = jname.get<std::string>();

  const ojson& jn = require("n");
  if (!jn.is_number_unsigned() || jn.get<u64>() == 0 || jn.get<u64>() > 65535)
    throw ParseError(path + ": field 'n' must be an integer in [1, 65535]");
  def.n = jn.get<int>();

  const ojson& jl = require("num_labels");
  if (!jl.is_number_unsigned() || jl.get<u64>() == 0 || jl.get<u64>() > 256)
    throw ParseError(path + ": field 'num_labels' must be an integer in [1, 256]");
  def.num_labels = jl.get<u16>();

  const ojson& js = require("solved");
  if (!js.is_array() || js.size() != static_cast<size_t>(def.n))
    throw ParseError(path + ": field 'solved' must be an array of n=" + std::to_string(def.n) +
                     " labels");
  def.solved.num_labels = def.num_labels;
  def.solved.labels.reserve(def.n);
  for (size_t i = 0; i < js.size(); ++i) {
    const ojson& v = js[i];
    if (!v.is_number_unsigned() || v.get<u64>() >= def.num_labels)
      throw ParseError(path + ": solved[" + std::to_string(i) + "] must be an integer in [0, " +
                       std::to_string(def.num_labels) + ")");
    def.solved.labels.push_back(v.get<u8>());
  }

  const ojson& jg = require("generators");
  if (!jg.is_object() || jg.empty())
    throw ParseError(path + ": field 'generators' must be a non-empty object");
  for (auto it = jg.begin(); it != jg.end(); ++it) {
    const std::string& gname = it.key();
    const ojson& arr = it.value();
    if (!arr.is_array() || arr.size() != static_cast<size_t>(def.n))
      throw ParseError(path + ": generator '" + gname + "' must be an array of n=" +
                       std::to_string(def.n) + " indices");
    Permutation p;
    p.map.reserve(def.n);
    for (size_t i = 0; i < arr.size(); ++i) {
      const ojson& v = arr[i];
      if (!v.is_number_unsigned() || v.get<u64>() >= static_cast<u64>(def.n))
        throw ParseError(path + ": generator '" + gname + "' entry " + std::to_string(i) +
                         " must be an integer in [0, " + std::to_string(def.n) + ")");
      p.map.push_back(v.get<u16>());
    }
    if (!is_permutation(p.map))
      throw ParseError(path + ": generator '" + gname + "' is not a bijection");
    def.generators.push_back({gname, std::move(p)});
  }

  if (j.contains("metric")) {
    const ojson& jm = j.at("metric");
    if (!jm.is_string()) throw ParseError(path + ": field 'metric' must be a string");
    auto m = metric_from_name(jm.get<std::string>());
    if (!m) throw ParseError(path + ": unknown metric '" + jm.get<std::string>() + "'");
    def.metric = *m;
  }

  // Close the generator set under inverses; user sets often list only one
  // direction of each move.
  auto has_perm = [&](const Permutation& p) {
    return std::any_of(def.generators.begin(), def.generators.end(),
                       [&](const Generator& g) { return g.perm == p; });
  };
  auto has_name = [&](const std::string& s) {
    return std::any_of(def.generators.begin(), def.generators.end(),
                       [&](const Generator& g) { return g.name == s; });
  };
  for (size_t i = 0; i < def.generators.size(); ++i) {
    Permutation inv = inverse(def.generators[i].perm);
    if (has_perm(inv)) continue;
    std::string nm = def.generators[i].name + "'";
    while (has_name(nm)) nm += "'";
    def.warnings.push_back("generator '" + def.generators[i].name +
                           "': inverse not in set, added as '" + nm + "'");
    def.generators.push_back({std::move(nm), std::move(inv)});
  }

  def.inverse_index = build_inverse_index(def.generators);
  warn_duplicates(def);
  def.validate();
  return def;
}

void save_puzzle(const PuzzleDef& def, const std::string& path) {
  ojson j;
  j["name"] = def.name;
  j["n"] = def.n;
  j["num_labels"] = def.num_labels;
  j["solved"] = def.solved.labels;
  ojson gens = ojson::object();
  for (const auto& g : def.generators) gens[g.name] = g.perm.map;
  j["generators"] = std::move(gens);
  j["metric"] = metric_name(def.metric);
  write_file_atomic(path, j.dump(1) + "\n");
}

// --- scrambles ---------------------------------------------------------------

StateVector replay(const PuzzleDef& def, const std::vector<std::string>& moves,
                   const StateVector& from) {
  StateVector s = from;
  for (const auto& m : moves) {
    int g = def.find_move(m);
    if (g < 0) throw ParseError("unknown move '" + m + "' for puzzle '" + def.name + "'");
    s = def.apply_move(g, s);
  }
  return s;
}

StateVector replay(const PuzzleDef& def, const std::vector<std::string>& moves) {
  return replay(def, moves, def.solved);
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<ScrambleRecord> load_scrambles(const std::string& path, const PuzzleDef& def) {
  std::string text = read_file(path);
  std::vector<std::string> lines = split(text, '\n');
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  if (lines.empty() || lines[0] != "id,moves,state")
    throw ParseError(path + ": first line must be the header 'id,moves,state'");

  std::vector<ScrambleRecord> out;
  for (size_t row = 1; row < lines.size(); ++row) {
    const std::string& line = lines[row];
    if (line.empty()) continue;
    std::string where = path + " row " + std::to_string(row + 1);
    std::vector<std::string> cols = split(line, ',');
    if (cols.size() != 3) throw ParseError(where + ": expected 3 comma-separated fields");
    ScrambleRecord rec;
    rec.id = cols[0];
    if (rec.id.empty()) throw ParseError(where + ": empty id");
    rec.moves = split_ws(cols[1]);
    rec.has_moves = !rec.moves.empty();
    bool has_state = !cols[2].empty();
    if (!rec.has_moves && !has_state)
      throw ParseError(where + " (id '" + rec.id + "'): moves and state are both empty");

    if (has_state) {
      std::vector<std::string> toks = split(cols[2], ';');
      if (toks.size() != static_cast<size_t>(def.n))
        throw ParseError(where + " (id '" + rec.id + "'): state has " +
                         std::to_string(toks.size()) + " entries, expected " + std::to_string(def.n));
      rec.state.num_labels = def.num_labels;
      rec.state.labels.reserve(def.n);
      for (const auto& t : toks) {
        int v;
        try {
          size_t used;
          v = std::stoi(t, &used);
          if (used != t.size()) throw std::invalid_argument(t);
        } catch (const std::exception&) {
          throw ParseError(where + " (id '" + rec.id + "'): bad state entry '" + t + "'");
        }
        if (v < 0 || v >= def.num_labels)
          throw ParseError(where + " (id '" + rec.id + "'): state label " + std::to_string(v) +
                           " out of range [0, " + std::to_string(def.num_labels) + ")");
        rec.state.labels.push_back(static_cast<u8>(v));
      }
    }
    if (rec.has_moves) {
      StateVector from_moves;
      try {
        from_moves = replay(def, rec.moves);
      } catch (const ParseError& e) {
        throw ParseError(where + " (id '" + rec.id + "'): " + e.what());
      }
      if (has_state && !(from_moves == rec.state))
        throw ParseError(where + " (id '" + rec.id + "'): moves and state disagree");
      rec.state = std::move(from_moves);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_scrambles(const std::vector<ScrambleRecord>& records, const std::string& path) {
  std::string out = "id,moves,state\n";
  for (const auto& r : records) {
    out += r.id;
    out += ',';
    if (r.has_moves)
      for (size_t i = 0; i < r.moves.size(); ++i) {
        if (i) out += ' ';
        out += r.moves[i];
      }
    out += ',';
    for (size_t i = 0; i < r.state.labels.size(); ++i) {
      if (i) out += ';';
      out += std::to_string(r.state.labels[i]);
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

int default_kmax(const PuzzleDef& def) {
  if (def.name.rfind("cube", 0) == 0 && def.metric != Metric::Custom) {
    size_t nn = def.name.find_first_of("-");
    int size = std::stoi(def.name.substr(4, nn - 4));
    switch (size) {
      case 2: return 14;
      case 3: return 26;
      case 4: return 45;
      case 5: return 65;
      default: break;
    }
  }
  // Conservative fallback for custom puzzles; override via config when the
  // diameter is known.
  return 26;
}

}  // namespace cayley
