#include "cayley/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cayley/infer.hpp"

namespace cayley {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// NaN-aware "smaller is better": any finite value beats NaN.
bool better(double a, double b) {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return a < b;
}

// Mean per-scramble minimum over the subset, restricted to scrambles the
// subset solves. NaN when it solves none.
double subset_average(const EnsembleReport& r, const std::vector<int>& subset) {
  double sum = 0.0;
  i64 solved = 0;
  for (i64 s = 0; s < r.num_scrambles; ++s) {
    i64 best = -1;
    for (int a : subset) {
      i64 len = r.at(a, s);
      if (len >= 0 && (best < 0 || len < best)) best = len;
    }
    if (best >= 0) {
      sum += static_cast<double>(best);
      ++solved;
    }
  }
  return solved > 0 ? sum / static_cast<double>(solved) : kNaN;
}

// Lexicographic next k-combination over indices [0, n). False when done.
bool next_combination(std::vector<int>& c, int n) {
  int k = static_cast<int>(c.size());
  for (int i = k - 1; i >= 0; --i) {
    if (c[i] < n - k + i) {
      ++c[i];
      for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

ordered_json to_json_value(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

ordered_json curve_json(const std::vector<double>& curve) {
  ordered_json arr = ordered_json::array();
  for (double v : curve) arr.push_back(to_json_value(v));
  return arr;
}

}  // namespace

void EnsembleReport::finalize() {
  int A = agent_count();
  i64 S = num_scrambles;
  if (lengths.size() != static_cast<size_t>(A) * static_cast<size_t>(S))
    throw DimensionError("ensemble report: matrix has " + std::to_string(lengths.size()) +
                         " cells, expected " + std::to_string(A) + " x " + std::to_string(S));
  ensemble_length.assign(S, -1);
  argmin_agent.assign(S, -1);
  agent_avg.assign(A, kNaN);
  agent_solve_rate.assign(A, 0.0);

  for (int a = 0; a < A; ++a) {
    double sum = 0.0;
    i64 solved = 0;
    for (i64 s = 0; s < S; ++s) {
      i64 len = at(a, s);
      if (len < 0) continue;
      sum += static_cast<double>(len);
      ++solved;
      if (ensemble_length[s] < 0 || len < ensemble_length[s]) {
        ensemble_length[s] = len;
        argmin_agent[s] = a;
      }
    }
    if (solved > 0) agent_avg[a] = sum / static_cast<double>(solved);
    agent_solve_rate[a] = S > 0 ? static_cast<double>(solved) / static_cast<double>(S) : 0.0;
  }

  double sum = 0.0;
  ensemble_solved = 0;
  for (i64 s = 0; s < S; ++s) {
    if (ensemble_length[s] < 0) continue;
    sum += static_cast<double>(ensemble_length[s]);
    ++ensemble_solved;
  }
  ensemble_avg = ensemble_solved > 0 ? sum / static_cast<double>(ensemble_solved) : kNaN;
}

SubsetCurves subset_curves(const EnsembleReport& report, int trials, u64 seed) {
  int A = report.agent_count();
  if (A == 0) throw DimensionError("subset_curves: report has no agents");
  if (trials < 1) throw NumericError("subset_curves: trials must be positive");

  SubsetCurves out;
  out.trials = trials;
  out.seed = seed;
  out.random_mean.assign(A, kNaN);
  out.best_greedy.assign(A, kNaN);

  // Random curve: exhaustive when C(A, size) <= trials, else Monte Carlo.
  std::vector<int> idx(A);
  for (int i = 0; i < A; ++i) idx[i] = i;
  for (int size = 1; size <= A; ++size) {
    double count_d = 1.0;  // C(A, size), capped well above any sane trials
    for (int i = 0; i < size; ++i) count_d = count_d * (A - i) / (i + 1);
    double sum = 0.0;
    i64 used = 0;
    if (count_d <= static_cast<double>(trials)) {
      std::vector<int> comb(size);
      for (int i = 0; i < size; ++i) comb[i] = i;
      do {
        double v = subset_average(report, comb);
        if (!std::isnan(v)) {
          sum += v;
          ++used;
        }
      } while (next_combination(comb, A));
    } else {
      SplitMix64 rng(derive_seed(seed, "subset", static_cast<u64>(size)));
      for (int t = 0; t < trials; ++t) {
        // partial Fisher-Yates: first `size` entries become the subset
        for (int i = 0; i < size; ++i) {
          int j = i + static_cast<int>(rng.bounded(static_cast<u64>(A - i)));
          std::swap(idx[i], idx[j]);
        }
        std::vector<int> comb(idx.begin(), idx.begin() + size);
        double v = subset_average(report, comb);
        if (!std::isnan(v)) {
          sum += v;
          ++used;
        }
      }
    }
    if (used > 0) out.random_mean[size - 1] = sum / static_cast<double>(used);
  }

  // Greedy forward selection on the subset average.
  std::vector<int> chosen;
  std::vector<bool> in_set(A, false);
  for (int size = 1; size <= A; ++size) {
    int pick = -1;
    double pick_v = kNaN;
    for (int a = 0; a < A; ++a) {
      if (in_set[a]) continue;
      chosen.push_back(a);
      double v = subset_average(report, chosen);
      chosen.pop_back();
      if (pick < 0 || better(v, pick_v)) {
        pick = a;
        pick_v = v;
      }
    }
    chosen.push_back(pick);
    in_set[pick] = true;
    out.greedy_order.push_back(pick);
    out.best_greedy[size - 1] = pick_v;
  }

  // Exact best subset per size; exponential, so only for small ensembles.
  if (A <= 15) {
    out.best_exact.assign(A, kNaN);
    for (u32 mask = 1; mask < (1u << A); ++mask) {
      std::vector<int> subset;
      for (int a = 0; a < A; ++a)
        if (mask & (1u << a)) subset.push_back(a);
      double v = subset_average(report, subset);
      double& slot = out.best_exact[subset.size() - 1];
      if (better(v, slot)) slot = v;
    }
  }
  return out;
}

void write_matrix_csv(const EnsembleReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write ensemble matrix: " + path);
  f << "agent";
  for (i64 s = 0; s < report.num_scrambles; ++s) f << ',' << s;
  f << '\n';
  for (int a = 0; a < report.agent_count(); ++a) {
    f << report.agent_ids[a];
    for (i64 s = 0; s < report.num_scrambles; ++s) f << ',' << report.at(a, s);
    f << '\n';
  }
  if (!f.good()) throw IoError("short write on ensemble matrix: " + path);
}

EnsembleReport read_matrix_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read ensemble matrix: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError("ensemble matrix is empty: " + path);
  i64 cols = static_cast<i64>(std::count(line.begin(), line.end(), ','));
  if (line.rfind("agent", 0) != 0)
    throw ParseError("ensemble matrix header must start with 'agent': " + path);

  EnsembleReport r;
  r.num_scrambles = cols;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) throw ParseError("bad matrix row in " + path);
    r.agent_ids.push_back(cell);
    i64 n = 0;
    while (std::getline(ss, cell, ',')) {
      r.lengths.push_back(std::stoll(cell));
      ++n;
    }
    if (n != cols)
      throw ParseError("matrix row for agent " + r.agent_ids.back() + " has " +
                       std::to_string(n) + " cells, header promises " + std::to_string(cols));
  }
  r.finalize();
  return r;
}

void write_summary_json(const EnsembleReport& report, const std::string& path) {
  ordered_json j;
  j["num_agents"] = report.agent_count();
  j["num_scrambles"] = report.num_scrambles;
  ordered_json agents = ordered_json::array();
  for (int a = 0; a < report.agent_count(); ++a) {
    agents.push_back({{"id", report.agent_ids[a]},
                      {"solve_rate", report.agent_solve_rate[a]},
                      {"avg_length", to_json_value(report.agent_avg[a])}});
  }
  j["agents"] = std::move(agents);
  j["ensemble"] = {{"solved", report.ensemble_solved},
                   {"avg_length", to_json_value(report.ensemble_avg)}};
  ordered_json per = ordered_json::array();
  for (i64 s = 0; s < report.num_scrambles; ++s)
    per.push_back({{"length", report.ensemble_length[s]}, {"agent", report.argmin_agent[s]}});
  j["per_scramble"] = std::move(per);
  if (!report.curves.random_mean.empty()) {
    ordered_json c;
    c["trials"] = report.curves.trials;
    c["seed"] = report.curves.seed;
    c["random_mean"] = curve_json(report.curves.random_mean);
    c["best_greedy"] = curve_json(report.curves.best_greedy);
    c["best_exact"] = report.curves.best_exact.empty()
                          ? ordered_json(nullptr)
                          : curve_json(report.curves.best_exact);
    c["greedy_order"] = report.curves.greedy_order;
    j["curves"] = std::move(c);
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write ensemble summary: " + path);
  f << j.dump(2) << '\n';
  if (!f.good()) throw IoError("short write on ensemble summary: " + path);
}

namespace {

void validate_specs(const PuzzleDef& def, const std::vector<AgentSpec>& agents,
                    const std::vector<StateVector>& scrambles) {
  if (agents.empty()) throw DimensionError("run_ensemble: no agents given");
  if (scrambles.empty()) throw DimensionError("run_ensemble: no scrambles given");
  std::set<std::string> ids;
  std::set<u64> seeds;
  std::set<std::string> paths;
  for (const AgentSpec& a : agents) {
    if (a.id.empty() || a.id.find(',') != std::string::npos ||
        a.id.find('\n') != std::string::npos)
      throw ParseError("agent id must be non-empty and comma-free: '" + a.id + "'");
    if (!ids.insert(a.id).second) throw ParseError("duplicate agent id: " + a.id);
    if (!seeds.insert(a.train.seed).second)
      throw ParseError("agent " + a.id + " reuses training seed " +
                       std::to_string(a.train.seed) + "; ensemble agents must differ");
    if (!a.weights_path.empty() && !paths.insert(a.weights_path).second)
      throw ParseError("agent " + a.id + " reuses weights path " + a.weights_path);
    if (a.model.n_positions != def.n || a.model.num_labels != def.num_labels)
      throw DimensionError("agent " + a.id + " model is " + std::to_string(a.model.n_positions) +
                           "x" + std::to_string(a.model.num_labels) + " but puzzle " + def.name +
                           " is " + std::to_string(def.n) + "x" + std::to_string(def.num_labels));
  }
  for (size_t s = 0; s < scrambles.size(); ++s)
    if (static_cast<int>(scrambles[s].labels.size()) != def.n)
      throw DimensionError("scramble " + std::to_string(s) + " has " +
                           std::to_string(scrambles[s].labels.size()) + " labels, puzzle " +
                           def.name + " needs " + std::to_string(def.n));
}

// The journal of finished cells: one line per (agent, scramble index).
std::map<std::pair<std::string, i64>, i64> read_cells(const std::string& path, i64 S) {
  std::map<std::pair<std::string, i64>, i64> cells;
  std::ifstream f(path);
  if (!f) return cells;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, idx, len;
    if (!std::getline(ss, id, ',') || !std::getline(ss, idx, ',') || !std::getline(ss, len, ','))
      throw ParseError("bad cell row in " + path + ": " + line);
    i64 s = std::stoll(idx);
    if (s < 0 || s >= S)
      throw ParseError("cell journal " + path + " references scramble " + idx +
                       " but this run has " + std::to_string(S) +
                       "; delete the journal if the scramble set changed");
    cells[{id, s}] = std::stoll(len);
  }
  return cells;
}

ResMLP<float> obtain_model(const PuzzleDef& def, const AgentSpec& spec, bool train_missing,
                           bool verbose) {
  if (!spec.weights_path.empty() && fs::exists(spec.weights_path)) {
    if (verbose) std::fprintf(stderr, "[%s] loading %s\n", spec.id.c_str(), spec.weights_path.c_str());
    return load_model(spec.weights_path).model;
  }
  if (!train_missing)
    throw IoError("agent " + spec.id + " has no weights at '" + spec.weights_path +
                  "' and training is disabled");
  if (verbose) std::fprintf(stderr, "[%s] training (seed %llu)\n", spec.id.c_str(),
                            static_cast<unsigned long long>(spec.train.seed));
  ResMLP<float> model = train(def, spec.model, spec.walk, spec.train);
  if (!spec.weights_path.empty()) {
    fs::path p(spec.weights_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_model(model, spec.weights_path);
  }
  return model;
}

}  // namespace

EnsembleReport run_ensemble(const PuzzleDef& def, const std::vector<AgentSpec>& agents,
                            const std::vector<StateVector>& scrambles,
                            const EnsembleConfig& cfg) {
  validate_specs(def, agents, scrambles);
  const i64 S = static_cast<i64>(scrambles.size());

  EnsembleReport report;
  report.num_scrambles = S;
  for (const AgentSpec& a : agents) report.agent_ids.push_back(a.id);
  report.lengths.assign(static_cast<size_t>(agents.size()) * S, -1);

  std::map<std::pair<std::string, i64>, i64> done;
  std::ofstream journal;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::string cells_path = (fs::path(cfg.out_dir) / "cells.csv").string();
    done = read_cells(cells_path, S);
    bool need_header = !fs::exists(cells_path) || fs::file_size(cells_path) == 0;
    journal.open(cells_path, std::ios::app);
    if (!journal) throw IoError("cannot open cell journal: " + cells_path);
    if (need_header) journal << "agent,scramble,length\n" << std::flush;
  }

  for (size_t ai = 0; ai < agents.size(); ++ai) {
    const AgentSpec& spec = agents[ai];
    // Skip the model entirely when every cell is already journaled.
    bool all_done = true;
    for (i64 s = 0; s < S && all_done; ++s)
      all_done = done.count({spec.id, s}) > 0;
    if (all_done) {
      for (i64 s = 0; s < S; ++s) report.lengths[ai * S + s] = done[{spec.id, s}];
      if (cfg.verbose) std::fprintf(stderr, "[%s] all %lld cells journaled, skipping\n",
                                    spec.id.c_str(), static_cast<long long>(S));
      continue;
    }

    ResMLP<float> model = obtain_model(def, spec, cfg.train_missing, cfg.verbose);
    InferenceEngine engine(model);
    for (i64 s = 0; s < S; ++s) {
      auto it = done.find({spec.id, s});
      i64 len;
      if (it != done.end()) {
        len = it->second;
      } else {
        BeamResult res = beam_search(def, scrambles[s], engine, cfg.beam);
        if (res.solved && !verify_result(def, scrambles[s], res))
          throw Error("agent " + spec.id + " returned a non-replaying solution for scramble " +
                      std::to_string(s));
        len = res.solved ? static_cast<i64>(res.moves.size()) : -1;
        if (journal.is_open()) {
          journal << spec.id << ',' << s << ',' << len << '\n' << std::flush;
          if (!journal.good()) throw IoError("cell journal write failed for agent " + spec.id);
        }
        if (cfg.verbose)
          std::fprintf(stderr, "[%s] scramble %lld/%lld -> %lld\n", spec.id.c_str(),
                       static_cast<long long>(s + 1), static_cast<long long>(S),
                       static_cast<long long>(len));
      }
      report.lengths[ai * S + s] = len;
    }
  }

  report.finalize();
  report.curves = subset_curves(report, cfg.subset_trials, cfg.subset_seed);
  if (!cfg.out_dir.empty()) {
    write_matrix_csv(report, (fs::path(cfg.out_dir) / "matrix.csv").string());
    write_summary_json(report, (fs::path(cfg.out_dir) / "summary.json").string());
  }
  return report;
}

}  // namespace cayley
