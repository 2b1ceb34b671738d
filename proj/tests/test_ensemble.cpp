#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cayley/ensemble.hpp"

using namespace cayley;
namespace fs = std::filesystem;

namespace {

PuzzleDef make_s3() {
  PuzzleDef def;
  def.name = "s3";
  def.n = 3;
  def.num_labels = 3;
  def.solved = StateVector{{0, 1, 2}, 3};
  def.generators = {{"a", Permutation{{1, 0, 2}}}, {"b", Permutation{{0, 2, 1}}}};
  def.inverse_index = {0, 1};
  return def;
}

AgentSpec tiny_s3_agent(const std::string& id, u64 seed, const std::string& weights = "") {
  AgentSpec a;
  a.id = id;
  a.model.n_positions = 3;
  a.model.num_labels = 3;
  a.model.n1 = 8;
  a.walk.k_max = 3;
  a.train.epochs = 1;
  a.train.samples_per_epoch = 300;
  a.train.minibatch = 64;
  a.train.seed = seed;
  a.weights_path = weights;
  return a;
}

// Matrix with hand-picked values, including unsolved cells and an agent that
// never solves anything.
EnsembleReport synthetic_report() {
  EnsembleReport r;
  r.agent_ids = {"p", "q", "z"};
  r.num_scrambles = 4;
  r.lengths = {
      5,  9, -1, 4,   // p
      7,  3, 12, 4,   // q
      -1, -1, -1, -1  // z
  };
  r.finalize();
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("cayley_ens_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("ensemble report: aggregation is the row-wise minimum") {
  EnsembleReport r = synthetic_report();
  CHECK(r.ensemble_length == std::vector<i64>{5, 3, 12, 4});
  CHECK(r.argmin_agent == std::vector<int>{0, 1, 1, 0});  // ties go to the first agent
  CHECK(r.agent_avg[0] == doctest::Approx(6.0));          // (5+9+4)/3
  CHECK(r.agent_avg[1] == doctest::Approx(6.5));          // (7+3+12+4)/4
  CHECK(std::isnan(r.agent_avg[2]));
  CHECK(r.agent_solve_rate == std::vector<double>{0.75, 1.0, 0.0});
  CHECK(r.ensemble_solved == 4);
  CHECK(r.ensemble_avg == doctest::Approx(6.0));  // (5+3+12+4)/4

  // ensemble average <= every agent's average on the commonly solved set
  for (int a = 0; a < 2; ++a) {
    double agent_sum = 0, ens_sum = 0;
    int common = 0;
    for (i64 s = 0; s < r.num_scrambles; ++s) {
      bool all = true;
      for (int b = 0; b < 2; ++b) all = all && r.at(b, s) >= 0;
      if (!all) continue;
      agent_sum += static_cast<double>(r.at(a, s));
      ens_sum += static_cast<double>(r.ensemble_length[s]);
      ++common;
    }
    CHECK(ens_sum / common <= agent_sum / common + 1e-12);
  }

  r.lengths.pop_back();
  CHECK_THROWS_AS(r.finalize(), DimensionError);
}

TEST_CASE("subset curves: synthetic matrix, exact expectations") {
  EnsembleReport r = synthetic_report();
  SubsetCurves c = subset_curves(r, 64, 9);

  // with 3 agents and 64 trials every size is enumerated exhaustively
  double avg_p = 6.0, avg_q = 6.5;  // z solves nothing -> NaN, excluded at size 1
  CHECK(c.random_mean[0] == doctest::Approx((avg_p + avg_q) / 2.0));
  // size 2: {p,q} -> (5+3+12+4)/4 = 6; {p,z} -> 6; {q,z} -> 6.5
  CHECK(c.random_mean[1] == doctest::Approx((6.0 + 6.0 + 6.5) / 3.0));
  CHECK(c.random_mean[2] == doctest::Approx(6.0));

  CHECK(c.best_greedy[0] == doctest::Approx(6.0));  // picks p
  CHECK(c.greedy_order[0] == 0);
  CHECK(c.best_greedy[2] == doctest::Approx(6.0));
  CHECK(c.best_exact.size() == 3);
  CHECK(c.best_exact[0] == doctest::Approx(6.0));
  CHECK(c.best_exact[1] == doctest::Approx(6.0));
  CHECK(c.best_exact[2] == doctest::Approx(6.0));
  for (size_t i = 0; i < c.best_exact.size(); ++i) CHECK(c.best_exact[i] <= c.best_greedy[i]);
  for (size_t i = 1; i < c.best_greedy.size(); ++i) CHECK(c.best_greedy[i] <= c.best_greedy[i - 1]);

  // determinism and seed sensitivity are moot when exhaustive; force sampling
  // with a tiny trial budget
  SubsetCurves s1 = subset_curves(r, 2, 5);
  SubsetCurves s2 = subset_curves(r, 2, 5);
  CHECK(s1.random_mean == s2.random_mean);

  CHECK_THROWS_AS(subset_curves(r, 0, 1), NumericError);
  CHECK_THROWS_AS(subset_curves(EnsembleReport{}, 4, 1), DimensionError);
}

TEST_CASE("subset curves: random size-1 equals mean per-agent average (all solving)") {
  EnsembleReport r;
  r.agent_ids = {"a", "b", "c", "d"};
  r.num_scrambles = 3;
  r.lengths = {4, 6, 8, 5, 5, 5, 9, 2, 7, 3, 3, 9};
  r.finalize();
  SubsetCurves c = subset_curves(r, 1000, 4);
  double mean = 0;
  for (double v : r.agent_avg) mean += v;
  mean /= 4;
  CHECK(c.random_mean[0] == doctest::Approx(mean));
  CHECK(c.random_mean[3] == doctest::Approx(r.ensemble_avg));
  CHECK(c.best_greedy[3] == doctest::Approx(r.ensemble_avg));
  CHECK(c.best_exact[3] == doctest::Approx(r.ensemble_avg));
}

TEST_CASE("ensemble matrix: CSV round trip preserves everything") {
  TempDir dir("csv");
  EnsembleReport r = synthetic_report();
  std::string path = (dir.path / "matrix.csv").string();
  write_matrix_csv(r, path);
  EnsembleReport back = read_matrix_csv(path);
  CHECK(back.agent_ids == r.agent_ids);
  CHECK(back.num_scrambles == r.num_scrambles);
  CHECK(back.lengths == r.lengths);
  CHECK(back.ensemble_length == r.ensemble_length);
  CHECK(back.argmin_agent == r.argmin_agent);
  CHECK(back.ensemble_avg == doctest::Approx(r.ensemble_avg));

  CHECK_THROWS_AS(read_matrix_csv((dir.path / "missing.csv").string()), IoError);
}

TEST_CASE("ensemble summary: JSON is well-formed, NaN becomes null") {
  TempDir dir("json");
  EnsembleReport r = synthetic_report();
  r.curves = subset_curves(r, 16, 3);
  std::string path = (dir.path / "summary.json").string();
  write_summary_json(r, path);
  std::ifstream f(path);
  nlohmann::json j = nlohmann::json::parse(f);
  CHECK(j["num_agents"] == 3);
  CHECK(j["num_scrambles"] == 4);
  CHECK(j["agents"][2]["avg_length"].is_null());
  CHECK(j["agents"][0]["avg_length"].get<double>() == doctest::Approx(6.0));
  CHECK(j["ensemble"]["avg_length"].get<double>() == doctest::Approx(6.0));
  CHECK(j["per_scramble"][1]["agent"] == 1);
  CHECK(j["curves"]["random_mean"].size() == 3);
  CHECK(j["curves"]["greedy_order"][0] == 0);
}

TEST_CASE("run_ensemble: exact outcome matrix under a one-step cap") {
  // With max_steps=1 the solver can only reach states adjacent to solved (the
  // goal check fires before scoring), so the matrix is exactly predictable no
  // matter what the models learned: depth<=1 scrambles solve optimally,
  // everything else is unsolved.
  auto def = make_s3();
  std::vector<AgentSpec> agents = {tiny_s3_agent("a0", 1), tiny_s3_agent("a1", 2),
                                   tiny_s3_agent("a2", 3)};
  std::vector<StateVector> scrambles = {
      def.solved,                 // depth 0
      replay(def, {"a"}),         // depth 1
      replay(def, {"b"}),         // depth 1
      replay(def, {"a", "b"}),    // depth 2
      replay(def, {"b", "a"}),    // depth 2
  };
  EnsembleConfig cfg;
  cfg.beam.width = 4;
  cfg.beam.max_steps = 1;
  EnsembleReport r = run_ensemble(def, agents, scrambles, cfg);

  std::vector<i64> row = {0, 1, 1, -1, -1};
  for (int a = 0; a < 3; ++a)
    for (i64 s = 0; s < 5; ++s) CHECK(r.at(a, s) == row[s]);
  CHECK(r.ensemble_length == std::vector<i64>{0, 1, 1, -1, -1});
  CHECK(r.argmin_agent == std::vector<int>{0, 0, 0, -1, -1});
  CHECK(r.ensemble_solved == 3);
  CHECK(r.ensemble_avg == doctest::Approx(2.0 / 3.0));
  for (int a = 0; a < 3; ++a) {
    CHECK(r.agent_solve_rate[a] == doctest::Approx(0.6));
    CHECK(r.agent_avg[a] == doctest::Approx(2.0 / 3.0));
  }
  // identical agents: every curve is flat at the ensemble average
  for (int i = 0; i < 3; ++i) {
    CHECK(r.curves.random_mean[i] == doctest::Approx(2.0 / 3.0));
    CHECK(r.curves.best_greedy[i] == doctest::Approx(2.0 / 3.0));
    CHECK(r.curves.best_exact[i] == doctest::Approx(2.0 / 3.0));
  }

  // single-agent report equals that agent's column of the full run
  EnsembleReport solo = run_ensemble(def, {agents[0]}, scrambles, cfg);
  for (i64 s = 0; s < 5; ++s) {
    CHECK(solo.at(0, s) == r.at(0, s));
    CHECK(solo.ensemble_length[s] == solo.at(0, s));
  }
}

TEST_CASE("run_ensemble: spec validation") {
  auto def = make_s3();
  std::vector<StateVector> scrambles = {def.solved};
  EnsembleConfig cfg;

  std::vector<AgentSpec> dup_id = {tiny_s3_agent("a", 1), tiny_s3_agent("a", 2)};
  CHECK_THROWS_AS(run_ensemble(def, dup_id, scrambles, cfg), ParseError);

  std::vector<AgentSpec> dup_seed = {tiny_s3_agent("a", 7), tiny_s3_agent("b", 7)};
  CHECK_THROWS_AS(run_ensemble(def, dup_seed, scrambles, cfg), ParseError);

  std::vector<AgentSpec> bad_id = {tiny_s3_agent("a,b", 1)};
  CHECK_THROWS_AS(run_ensemble(def, bad_id, scrambles, cfg), ParseError);

  std::vector<AgentSpec> ok = {tiny_s3_agent("a", 1)};
  CHECK_THROWS_AS(run_ensemble(def, {}, scrambles, cfg), DimensionError);
  CHECK_THROWS_AS(run_ensemble(def, ok, {}, cfg), DimensionError);
  CHECK_THROWS_AS(run_ensemble(def, ok, {StateVector{{0, 1}, 3}}, cfg), DimensionError);

  AgentSpec wrong = tiny_s3_agent("w", 1);
  wrong.model.n_positions = 4;
  CHECK_THROWS_AS(run_ensemble(def, {wrong}, scrambles, cfg), DimensionError);
}

TEST_CASE("run_ensemble: persisted artifacts, resume, and reproducibility") {
  auto def = make_s3();
  TempDir dir("run");
  auto agent = [&](const std::string& id, u64 seed) {
    return tiny_s3_agent(id, seed, (dir.path / (id + ".cbnn")).string());
  };
  std::vector<AgentSpec> agents = {agent("a0", 11), agent("a1", 12)};
  std::vector<StateVector> scrambles = {def.solved, replay(def, {"a"}), replay(def, {"a", "b"})};
  EnsembleConfig cfg;
  cfg.beam.width = 4;
  cfg.beam.max_steps = 1;
  cfg.out_dir = (dir.path / "out").string();

  EnsembleReport first = run_ensemble(def, agents, scrambles, cfg);
  CHECK(fs::exists(dir.path / "a0.cbnn"));
  CHECK(fs::exists(dir.path / "out" / "cells.csv"));
  CHECK(fs::exists(dir.path / "out" / "matrix.csv"));
  CHECK(fs::exists(dir.path / "out" / "summary.json"));

  // the persisted matrix reproduces the in-memory aggregates
  EnsembleReport persisted = read_matrix_csv((dir.path / "out" / "matrix.csv").string());
  CHECK(persisted.lengths == first.lengths);
  CHECK(persisted.ensemble_avg == doctest::Approx(first.ensemble_avg));

  // rerun: everything journaled, so no training is needed even if we forbid it
  EnsembleConfig no_train = cfg;
  no_train.train_missing = false;
  EnsembleReport second = run_ensemble(def, agents, scrambles, no_train);
  CHECK(second.lengths == first.lengths);

  // drop the journal: weights reload and resolving reproduces the matrix
  fs::remove(dir.path / "out" / "cells.csv");
  EnsembleReport third = run_ensemble(def, agents, scrambles, no_train);
  CHECK(third.lengths == first.lengths);

  // partial journal: a0's rows are reused, a1 is re-solved; simulate by
  // stripping a1's lines from the journal
  {
    std::ifstream in((dir.path / "out" / "cells.csv").string());
    std::string line, kept;
    while (std::getline(in, line))
      if (line.rfind("a1,", 0) != 0) kept += line + "\n";
    in.close();
    std::ofstream out((dir.path / "out" / "cells.csv").string(), std::ios::trunc);
    out << kept;
  }
  EnsembleReport fourth = run_ensemble(def, agents, scrambles, no_train);
  CHECK(fourth.lengths == first.lengths);

  // a journal that references scrambles beyond this run is rejected
  std::vector<StateVector> fewer = {def.solved};
  CHECK_THROWS_AS(run_ensemble(def, agents, fewer, no_train), ParseError);

  // fresh ephemeral run (no out_dir, no weights) gives the same matrix:
  // training is deterministic in the seed
  std::vector<AgentSpec> eph = {tiny_s3_agent("a0", 11), tiny_s3_agent("a1", 12)};
  EnsembleConfig mem;
  mem.beam = cfg.beam;
  EnsembleReport fifth = run_ensemble(def, eph, scrambles, mem);
  CHECK(fifth.lengths == first.lengths);
}

TEST_CASE("run_ensemble: trained cube agents solve easy scrambles") {
  auto def = builtin_cube(2, Metric::QTM, true);
  std::vector<AgentSpec> agents;
  for (int i = 0; i < 3; ++i) {
    AgentSpec a;
    a.id = "c" + std::to_string(i);
    a.model.n_positions = def.n;
    a.model.num_labels = def.num_labels;
    a.model.n1 = 96;
    a.walk.k_max = 14;
    a.train.epochs = 4;
    a.train.samples_per_epoch = 15000;
    a.train.minibatch = 1024;
    a.train.seed = 100 + static_cast<u64>(i);
    agents.push_back(a);
  }
  SplitMix64 rng(55);
  std::vector<StateVector> scrambles;
  for (int i = 0; i < 6; ++i) {
    StateVector s = def.solved;
    for (int k = 0; k < 7; ++k)
      s = apply(def.generators[rng.bounded(def.gen_count())].perm, s);
    scrambles.push_back(s);
  }
  EnsembleConfig cfg;
  cfg.beam.width = 512;
  cfg.subset_trials = 8;
  EnsembleReport r = run_ensemble(def, agents, scrambles, cfg);

  for (int a = 0; a < 3; ++a) CHECK(r.agent_solve_rate[a] == doctest::Approx(1.0));
  for (i64 s = 0; s < r.num_scrambles; ++s) {
    i64 mn = std::min({r.at(0, s), r.at(1, s), r.at(2, s)});
    CHECK(r.ensemble_length[s] == mn);
    CHECK(r.at(r.argmin_agent[s], s) == mn);
  }
  for (int i = 1; i < 3; ++i) CHECK(r.curves.best_greedy[i] <= r.curves.best_greedy[i - 1]);
  CHECK(r.curves.best_greedy[2] == doctest::Approx(r.ensemble_avg));

  // reproducibility: a second in-memory run is cell-for-cell identical
  EnsembleReport again = run_ensemble(def, agents, scrambles, cfg);
  CHECK(again.lengths == r.lengths);
}
