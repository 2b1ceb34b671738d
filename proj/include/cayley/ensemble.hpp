#pragma once

#include <string>
#include <vector>

#include "cayley/beam.hpp"
#include "cayley/net.hpp"

// Multi-agent orchestration. An agent is one independently trained model plus
// the shared beam-search solver; an ensemble solves every scramble with every
// agent and reports the per-scramble minimum ("choose the best result").
// Agent diversity comes purely from training seeds: same architecture, same
// walk schedule, different data.
//
// Every (agent, scramble) cell is an independent deterministic solve, so the
// run is resumable: completed cells are journaled to cells.csv in out_dir and
// skipped on restart. Rerunning with the same specs reproduces the matrix
// bit-for-bit whether or not it was interrupted.

namespace cayley {

struct AgentSpec {
  std::string id;            // unique; used as the persisted cell key
  ResMLPConfig model;
  WalkConfig walk;
  TrainOptions train;        // train.seed is the agent's identity
  std::string weights_path;  // .cbnn; loaded if present, else trained and saved.
                             // empty = ephemeral (retrained every run)
};

// Subset-average curves over ensemble size ("does a committee help?").
// Index s-1 holds the value for subsets of size s. The subset average is the
// mean, over scrambles the subset solves, of the per-scramble subset minimum.
struct SubsetCurves {
  std::vector<double> random_mean;  // mean over sampled (or all, when few) subsets
  std::vector<double> best_greedy;  // greedy forward selection
  std::vector<double> best_exact;   // exhaustive; empty when agents > 15
  std::vector<int> greedy_order;    // agent indices in greedy pick order
  int trials = 0;
  u64 seed = 0;
};

struct EnsembleReport {
  std::vector<std::string> agent_ids;
  i64 num_scrambles = 0;
  std::vector<i64> lengths;  // [agent][scramble] row-major; -1 = unsolved

  // Derived from the matrix by finalize():
  std::vector<i64> ensemble_length;  // per-scramble min over agents; -1 = none solved
  std::vector<int> argmin_agent;     // first agent attaining the min; -1 = none
  std::vector<double> agent_avg;     // per agent, over its own solved scrambles (NaN if none)
  std::vector<double> agent_solve_rate;
  double ensemble_avg = 0.0;  // over scrambles solved by at least one agent
  i64 ensemble_solved = 0;    // how many scrambles that is
  SubsetCurves curves;

  int agent_count() const { return static_cast<int>(agent_ids.size()); }
  i64 at(int a, i64 s) const { return lengths[static_cast<i64>(a) * num_scrambles + s]; }
  // Recomputes every derived field (except curves) from the matrix.
  void finalize();
};

struct EnsembleConfig {
  BeamConfig beam;
  std::string out_dir;  // cells.csv journal + matrix.csv + summary.json; empty = in-memory
  int subset_trials = 64;
  u64 subset_seed = 1;
  bool train_missing = true;  // train agents whose weights file is absent
  bool verbose = false;       // per-cell progress on stderr
};

// Trains-or-loads each agent, solves all scrambles with each, and assembles
// the report (matrix, aggregates, subset curves). Solve failures are recorded
// as unsolved cells, never raised. Throws on config errors (duplicate ids or
// seeds, bad scramble sizes) and on I/O failures.
EnsembleReport run_ensemble(const PuzzleDef& def, const std::vector<AgentSpec>& agents,
                            const std::vector<StateVector>& scrambles,
                            const EnsembleConfig& cfg);

// Curves from a finished report. For each size, uses every subset when there
// are at most `trials` of them, otherwise `trials` uniform draws (seeded; size
// s draws from stream (seed, "subset", s)). Sizes with no solving subset
// produce NaN entries. Greedy ties break toward the lower agent index.
SubsetCurves subset_curves(const EnsembleReport& report, int trials, u64 seed);

// Matrix persistence: header "agent,0,1,...", one row per agent, -1 sentinel.
// The summary JSON carries the aggregates and curves. read_matrix_csv returns
// a finalized report (without curves), so every derived number is
// recomputable from the artifact alone.
void write_matrix_csv(const EnsembleReport& report, const std::string& path);
void write_summary_json(const EnsembleReport& report, const std::string& path);
EnsembleReport read_matrix_csv(const std::string& path);

}  // namespace cayley
