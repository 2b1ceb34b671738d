// cayley: train distance models, search for short paths, and audit results
// on permutation puzzles. Every subcommand that writes files also writes a
// run.json snapshot (resolved config, seeds, output checksums) so a run can
// be reproduced from the artifact directory alone.
//
// Exit codes (frozen contract): 0 success, 1 operational failure (I/O,
// numeric, failed verification), 2 usage or config error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cayley/beam.hpp"
#include "cayley/bfs.hpp"
#include "cayley/binio.hpp"
#include "cayley/ensemble.hpp"
#include "cayley/infer.hpp"
#include "cayley/net.hpp"
#include "cayley/parallel.hpp"
#include "cayley/puzzle.hpp"

using namespace cayley;
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kResultsHeader = "id,solved,length,moves,steps,nodes_scored,wall_time";

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// --- JSON config files -------------------------------------------------------
// Maps {"solve": {"width": 1024}, "seed": 7} onto CLI11 options; top-level
// keys are global options, one nesting level per subcommand. Values given on
// the command line always win (CLI11 applies config only to unset options).

class JsonConfig : public CLI::Config {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const std::exception& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config root must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}\n";  // config emission is handled by run.json instead
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
  static void walk(const nlohmann::json& j, std::vector<std::string> parents,
                   std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, val] : j.items()) {
      if (val.is_object()) {
        auto deeper = parents;
        deeper.push_back(key);
        walk(val, deeper, items);
      } else {
        CLI::ConfigItem item;
        item.parents = parents;
        item.name = key;
        if (val.is_array())
          for (const auto& e : val) item.inputs.push_back(scalar(e));
        else
          item.inputs.push_back(scalar(val));
        items.push_back(std::move(item));
      }
    }
  }
};

// --- run.json ----------------------------------------------------------------

std::string hex32(u32 v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// bytes + CRC of a fully deterministic artifact
ordered_json file_meta(const std::string& path) {
  std::string data = read_file(path);
  return {{"bytes", data.size()}, {"crc32", hex32(crc32(data.data(), data.size()))}};
}

// CRC of a CSV with the named (timing) columns projected out, so the value is
// stable across reruns while still pinning every deterministic cell
ordered_json csv_meta_excluding(const std::string& path, const std::vector<std::string>& drop) {
  std::string data = read_file(path);
  std::stringstream in(data);
  std::string line, stable;
  std::vector<int> keep;
  bool header = true;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell, rebuilt;
    int col = 0, kept = 0;
    while (std::getline(row, cell, ',')) {
      if (header) {
        if (std::find(drop.begin(), drop.end(), cell) == drop.end()) keep.push_back(col);
      }
      if (std::find(keep.begin(), keep.end(), col) != keep.end()) {
        if (kept++) rebuilt += ',';
        rebuilt += cell;
      }
      ++col;
    }
    header = false;
    stable += rebuilt;
    stable += '\n';
  }
  return {{"crc32_stable", hex32(crc32(stable.data(), stable.size()))}, {"excludes", drop}};
}

void write_run_json(const std::string& dir, const std::string& command, ordered_json config,
                    ordered_json seeds, ordered_json outputs) {
  ordered_json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config"] = std::move(config);
  j["seeds"] = std::move(seeds);
  j["outputs"] = std::move(outputs);
  std::string path = (fs::path(dir) / "run.json").string();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << '\n';
}

// --- shared flag groups ------------------------------------------------------

struct CommonFlags {
  std::string puzzle;
  std::string out = ".";
  u64 seed = 1;
};

void add_common(CLI::App* c, CommonFlags& f, bool out_required = false) {
  c->add_option("--puzzle", f.puzzle,
                "puzzle: builtin:<size>:<qtm|uqtm>[:fixed] or a JSON file path")
      ->required();
  auto* out = c->add_option("--out", f.out, "output directory (created if missing)");
  if (out_required)
    out->required();
  else
    out->capture_default_str();
  c->add_option("--seed", f.seed, "root seed; all randomness derives from it")
      ->capture_default_str();
}

struct ModelFlags {
  i64 n1 = 1024, n2 = 0, nr = 0;
  std::string encode = "onehot";
};

void add_model(CLI::App* c, ModelFlags& f) {
  c->add_option("--n1", f.n1, "first hidden width")->capture_default_str();
  c->add_option("--n2", f.n2, "second hidden width (0 = single hidden layer)")
      ->capture_default_str();
  c->add_option("--nr", f.nr, "residual blocks (requires --n2)")->capture_default_str();
  c->add_option("--encode", f.encode, "state encoding")
      ->check(CLI::IsMember({"onehot", "raw"}))
      ->capture_default_str();
}

struct WalkFlags {
  int k_max = 0;  // 0 = puzzle default
  bool backtracking = false;
};

void add_walk(CLI::App* c, WalkFlags& f) {
  c->add_option("--k-max", f.k_max, "max walk depth / target range (0 = puzzle default)")
      ->capture_default_str();
  c->add_flag("--backtracking", f.backtracking,
              "allow walks to undo their previous move (default: non-backtracking)");
}

struct TrainFlags {
  i64 epochs = 64;
  i64 samples = 100000;
  i64 minibatch = 16384;
  double lr = 1e-3;
  std::vector<i64> checkpoints;
  std::string resume;
};

void add_train(CLI::App* c, TrainFlags& f) {
  c->add_option("--epochs", f.epochs, "training epochs (fresh walks each)")
      ->capture_default_str();
  c->add_option("--samples", f.samples, "samples per epoch")->capture_default_str();
  c->add_option("--minibatch", f.minibatch, "minibatch size")->capture_default_str();
  c->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  c->add_option("--checkpoint", f.checkpoints, "epochs after which to write a checkpoint");
  c->add_option("--resume", f.resume, "checkpoint file to continue from");
}

struct BeamFlags {
  i64 width = 4096;
  int max_steps = 200;
  u64 hash_seed = BeamConfig{}.hash_seed;
  bool exact_dedup = false;
};

void add_beam(CLI::App* c, BeamFlags& f) {
  c->add_option("--width,-W", f.width, "beam width (states kept per layer)")
      ->capture_default_str();
  c->add_option("--max-steps", f.max_steps, "step budget per solve")->capture_default_str();
  c->add_option("--hash-seed", f.hash_seed, "seed of the dedup fingerprint hash")
      ->capture_default_str();
  c->add_flag("--exact-dedup", f.exact_dedup,
              "deduplicate on full states instead of 64-bit fingerprints");
}

struct ScrambleFlags {
  std::string file;
  i64 random = 0;
  int depth = 0;  // 0 = puzzle default
};

void add_scrambles(CLI::App* c, ScrambleFlags& f) {
  auto* file = c->add_option("--scrambles", f.file, "scramble CSV (id,moves,state)");
  auto* rand = c->add_option("--random", f.random, "generate this many random scrambles");
  c->add_option("--scramble-depth", f.depth,
                "random scramble walk length (0 = puzzle default)");
  file->excludes(rand);
}

// --- resolution helpers ------------------------------------------------------

PuzzleDef resolve_puzzle(const std::string& spec) {
  if (auto def = parse_builtin_spec(spec)) return *def;
  if (spec.rfind("builtin:", 0) == 0)
    throw ParseError("bad builtin puzzle spec '" + spec +
                     "'; expected builtin:<2-5>:<qtm|uqtm>[:fixed]");
  return load_puzzle(spec);
}

ResMLPConfig make_model_cfg(const PuzzleDef& def, const ModelFlags& f) {
  ResMLPConfig m;
  m.n_positions = def.n;
  m.num_labels = def.num_labels;
  m.encode = f.encode == "raw" ? EncodeMode::Raw : EncodeMode::OneHot;
  m.n1 = f.n1;
  m.n2 = f.n2;
  m.nr = f.nr;
  return m;
}

WalkConfig make_walk_cfg(const PuzzleDef& def, const WalkFlags& f) {
  WalkConfig w;
  w.k_max = f.k_max > 0 ? f.k_max : default_kmax(def);
  w.non_backtracking = !f.backtracking;
  return w;
}

BeamConfig make_beam_cfg(const BeamFlags& f) {
  BeamConfig b;
  b.width = f.width;
  b.max_steps = f.max_steps;
  b.hash_seed = f.hash_seed;
  b.exact_dedup = f.exact_dedup;
  return b;
}

ordered_json model_cfg_json(const ResMLPConfig& m) {
  return {{"n1", m.n1},
          {"n2", m.n2},
          {"nr", m.nr},
          {"encode", m.encode == EncodeMode::Raw ? "raw" : "onehot"},
          {"input_dim", m.input_dim()},
          {"params", m.param_count()}};
}

ordered_json beam_cfg_json(const BeamConfig& b) {
  return {{"width", b.width},
          {"max_steps", b.max_steps},
          {"hash_seed", b.hash_seed},
          {"exact_dedup", b.exact_dedup}};
}

// Random scrambles: seeded non-backtracking walks of a fixed length, each
// from its own derived stream so the set is stable under count changes.
std::vector<ScrambleRecord> random_scrambles(const PuzzleDef& def, i64 count, int depth,
                                             u64 seed) {
  if (count <= 0) throw ParseError("--random must be positive");
  int len = depth > 0 ? depth : default_kmax(def);
  int m = def.gen_count();
  std::vector<ScrambleRecord> recs(count);
  for (i64 i = 0; i < count; ++i) {
    SplitMix64 rng(derive_seed(seed, "scramble", static_cast<u64>(i)));
    char id[24];
    std::snprintf(id, sizeof id, "s%04lld", static_cast<long long>(i));
    ScrambleRecord& r = recs[i];
    r.id = id;
    r.has_moves = true;
    StateVector s = def.solved;
    int prev = -1;
    for (int k = 0; k < len; ++k) {
      int g;
      if (prev >= 0 && m > 1) {
        int excl = def.inverse_index[prev];
        g = static_cast<int>(rng.bounded(static_cast<u64>(m - 1)));
        if (g >= excl) ++g;
      } else {
        g = static_cast<int>(rng.bounded(static_cast<u64>(m)));
      }
      r.moves.push_back(def.generators[g].name);
      s = def.apply_move(g, s);
      prev = g;
    }
    r.state = std::move(s);
  }
  return recs;
}

std::vector<ScrambleRecord> get_scrambles(const PuzzleDef& def, const ScrambleFlags& f,
                                          u64 seed) {
  if (!f.file.empty()) return load_scrambles(f.file, def);
  if (f.random > 0) return random_scrambles(def, f.random, f.depth, seed);
  throw ParseError("give either --scrambles FILE or --random N");
}

std::vector<std::string> split_moves(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::string join_moves(const PuzzleDef& def, const std::vector<u16>& moves) {
  std::string out;
  for (size_t i = 0; i < moves.size(); ++i) {
    if (i) out += ' ';
    out += def.generators[moves[i]].name;
  }
  return out;
}

// --- subcommands -------------------------------------------------------------

int cmd_train(const CommonFlags& common, const ModelFlags& mf, const WalkFlags& wf,
              const TrainFlags& tf, bool verbose) {
  PuzzleDef def = resolve_puzzle(common.puzzle);
  ResMLPConfig mcfg = make_model_cfg(def, mf);
  WalkConfig wcfg = make_walk_cfg(def, wf);
  TrainOptions opts;
  opts.epochs = tf.epochs;
  opts.samples_per_epoch = tf.samples;
  opts.minibatch = tf.minibatch;
  opts.adam.lr = tf.lr;
  opts.seed = common.seed;
  opts.checkpoint_epochs = tf.checkpoints;
  opts.out_dir = common.out;
  opts.resume_from = tf.resume;
  fs::create_directories(common.out);
  // fresh runs restart the log; resumed runs continue it
  if (tf.resume.empty()) fs::remove(fs::path(common.out) / "train_log.csv");

  double first_loss = 0.0, last_loss = 0.0;
  auto log = [&](const TrainLogEntry& e) {
    if (e.epoch == 1) first_loss = e.loss;
    last_loss = e.loss;
    if (verbose)
      std::fprintf(stderr, "epoch %lld/%lld  loss %.6g  (%.3g samples/s)\n",
                   static_cast<long long>(e.epoch), static_cast<long long>(opts.epochs),
                   e.loss, e.samples_per_sec);
  };
  auto t0 = Clock::now();
  ResMLP<float> model = train(def, mcfg, wcfg, opts, log);
  double secs = seconds_since(t0);

  ordered_json outputs;
  outputs["model.cbnn"] = file_meta((fs::path(common.out) / "model.cbnn").string());
  outputs["train_log.csv"] = file_meta((fs::path(common.out) / "train_log.csv").string());
  for (i64 mark : tf.checkpoints) {
    std::string name = "checkpoint_" + std::to_string(mark) + ".cbnn";
    outputs[name] = file_meta((fs::path(common.out) / name).string());
  }
  ordered_json cfg;
  cfg["puzzle"] = common.puzzle;
  cfg["model"] = model_cfg_json(mcfg);
  cfg["walk"] = {{"k_max", wcfg.k_max}, {"non_backtracking", wcfg.non_backtracking}};
  cfg["train"] = {{"epochs", opts.epochs},
                  {"samples_per_epoch", opts.samples_per_epoch},
                  {"minibatch", opts.minibatch},
                  {"lr", opts.adam.lr},
                  {"resume", tf.resume}};
  write_run_json(common.out, "train", cfg, {{"root", common.seed}}, outputs);

  std::printf("trained %lld params, %lld epochs, loss %.6g -> %.6g, %.1fs; model %s\n",
              static_cast<long long>(model.param_count()),
              static_cast<long long>(opts.epochs), first_loss, last_loss, secs,
              (fs::path(common.out) / "model.cbnn").string().c_str());
  return 0;
}

int cmd_solve(const CommonFlags& common, const std::string& model_path, const BeamFlags& bf,
              const ScrambleFlags& sf, const std::string& results_name, bool verbose) {
  PuzzleDef def = resolve_puzzle(common.puzzle);
  LoadedModel loaded = load_model(model_path);
  if (loaded.model.config().n_positions != def.n ||
      loaded.model.config().num_labels != def.num_labels)
    throw DimensionError("model " + model_path + " was trained for a " +
                         std::to_string(loaded.model.config().n_positions) + "-position puzzle; " +
                         def.name + " has " + std::to_string(def.n));
  InferenceEngine engine(loaded.model);
  BeamConfig bcfg = make_beam_cfg(bf);
  std::vector<ScrambleRecord> scrambles = get_scrambles(def, sf, common.seed);

  fs::create_directories(common.out);
  // generated scrambles are persisted so `verify` can audit the results later
  std::string scr_path;
  if (sf.file.empty()) {
    scr_path = (fs::path(common.out) / "scrambles.csv").string();
    save_scrambles(scrambles, scr_path);
  }
  std::string results_path = (fs::path(common.out) / results_name).string();
  std::ofstream csv(results_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + results_path);
  csv << kResultsHeader << '\n';

  i64 solved = 0, total_nodes = 0;
  double total_len = 0.0, total_secs = 0.0;
  for (size_t i = 0; i < scrambles.size(); ++i) {
    const ScrambleRecord& rec = scrambles[i];
    auto t0 = Clock::now();
    BeamResult res = beam_search(def, rec.state, engine, bcfg);
    double secs = seconds_since(t0);
    if (res.solved && !verify_result(def, rec.state, res))
      throw Error("solution for scramble " + rec.id + " failed replay verification");
    if (res.solved) {
      ++solved;
      total_len += static_cast<double>(res.moves.size());
    }
    total_nodes += res.nodes_scored;
    total_secs += secs;
    csv << rec.id << ',' << (res.solved ? 1 : 0) << ','
        << (res.solved ? static_cast<i64>(res.moves.size()) : -1) << ','
        << join_moves(def, res.moves) << ',' << res.steps_taken << ',' << res.nodes_scored << ','
        << std::fixed << std::setprecision(6) << secs << std::defaultfloat << '\n';
    if (verbose)
      std::fprintf(stderr, "%s: %s length %lld (%.3fs)\n", rec.id.c_str(),
                   res.solved ? "solved" : "unsolved",
                   res.solved ? static_cast<long long>(res.moves.size()) : -1, secs);
  }
  csv.close();

  ordered_json cfg;
  cfg["puzzle"] = common.puzzle;
  cfg["model"] = model_path;
  cfg["beam"] = beam_cfg_json(bcfg);
  cfg["scrambles"] = sf.file.empty()
                         ? ordered_json{{"random", sf.random}, {"depth", sf.depth}}
                         : ordered_json{{"file", sf.file}};
  ordered_json outputs;
  outputs[results_name] = csv_meta_excluding(results_path, {"wall_time"});
  if (!scr_path.empty()) outputs["scrambles.csv"] = file_meta(scr_path);
  write_run_json(common.out, "solve", cfg, {{"root", common.seed}}, outputs);

  std::printf("solved %lld/%zu, avg length %.4f, %.3g nodes/s; results %s\n",
              static_cast<long long>(solved), scrambles.size(),
              solved ? total_len / static_cast<double>(solved) : -1.0,
              total_secs > 0 ? static_cast<double>(total_nodes) / total_secs : 0.0,
              results_path.c_str());
  return 0;
}

int cmd_bfs(const CommonFlags& common, int depth_limit, u64 mem_budget,
            const std::string& dump_name, const std::vector<std::string>& distance_queries) {
  PuzzleDef def = resolve_puzzle(common.puzzle);
  for (const std::string& q : distance_queries) {
    StateVector s = replay(def, split_moves(q));
    int d = optimal_length(def, s, mem_budget);
    std::printf("distance(%s) = %d\n", q.c_str(), d);
  }

  EnumerateOptions opts;
  opts.depth_limit = depth_limit;
  opts.mem_budget = mem_budget;
  auto t0 = Clock::now();
  DistanceTable table = enumerate(def, opts);
  double secs = seconds_since(t0);

  fs::create_directories(common.out);
  std::string hist_path = (fs::path(common.out) / "histogram.csv").string();
  table.write_histogram_csv(hist_path);
  ordered_json outputs;
  outputs["histogram.csv"] = file_meta(hist_path);
  if (!dump_name.empty()) {
    std::string dump_path = (fs::path(common.out) / dump_name).string();
    table.dump(dump_path, common.seed);
    outputs[dump_name] = file_meta(dump_path);
  }
  ordered_json cfg;
  cfg["puzzle"] = common.puzzle;
  cfg["depth_limit"] = depth_limit;
  cfg["mem_budget"] = mem_budget;
  write_run_json(common.out, "bfs", cfg, {{"root", common.seed}}, outputs);

  std::printf("states=%llu diameter=%d mean=%.6f complete=%d (%.1fs)\n",
              static_cast<unsigned long long>(table.size()), table.diameter, table.mean_depth,
              table.complete ? 1 : 0, secs);
  return 0;
}

int cmd_ensemble(const CommonFlags& common, int num_agents, const ModelFlags& mf,
                 const WalkFlags& wf, const TrainFlags& tf, const BeamFlags& bf,
                 const ScrambleFlags& sf, int trials, bool no_train, bool verbose) {
  if (num_agents < 1) throw ParseError("--agents must be positive");
  PuzzleDef def = resolve_puzzle(common.puzzle);
  fs::create_directories(common.out);

  // The scramble set must be identical across resumed runs, so random sets
  // are persisted on first use and reloaded afterwards.
  std::string scr_path = (fs::path(common.out) / "scrambles.csv").string();
  std::vector<ScrambleRecord> recs;
  if (!sf.file.empty()) {
    recs = load_scrambles(sf.file, def);
  } else if (fs::exists(scr_path)) {
    recs = load_scrambles(scr_path, def);
  } else {
    recs = random_scrambles(def, sf.random > 0 ? sf.random : 20, sf.depth, common.seed);
    save_scrambles(recs, scr_path);
  }
  std::vector<StateVector> scrambles;
  for (const auto& r : recs) scrambles.push_back(r.state);

  std::vector<AgentSpec> agents;
  ordered_json agent_seeds = ordered_json::array();
  for (int i = 0; i < num_agents; ++i) {
    AgentSpec a;
    char id[24];
    std::snprintf(id, sizeof id, "agent_%02d", i);
    a.id = id;
    a.model = make_model_cfg(def, mf);
    a.walk = make_walk_cfg(def, wf);
    a.train.epochs = tf.epochs;
    a.train.samples_per_epoch = tf.samples;
    a.train.minibatch = tf.minibatch;
    a.train.adam.lr = tf.lr;
    a.train.seed = derive_seed(common.seed, "agent", static_cast<u64>(i));
    a.weights_path = (fs::path(common.out) / "agents" / (a.id + ".cbnn")).string();
    agent_seeds.push_back({{"id", a.id}, {"seed", a.train.seed}});
    agents.push_back(std::move(a));
  }

  EnsembleConfig ecfg;
  ecfg.beam = make_beam_cfg(bf);
  ecfg.out_dir = common.out;
  ecfg.subset_trials = trials;
  ecfg.subset_seed = derive_seed(common.seed, "subset");
  ecfg.train_missing = !no_train;
  ecfg.verbose = verbose;
  EnsembleReport report = run_ensemble(def, agents, scrambles, ecfg);

  ordered_json outputs;
  outputs["scrambles.csv"] = file_meta(scr_path);
  outputs["cells.csv"] = file_meta((fs::path(common.out) / "cells.csv").string());
  outputs["matrix.csv"] = file_meta((fs::path(common.out) / "matrix.csv").string());
  outputs["summary.json"] = file_meta((fs::path(common.out) / "summary.json").string());
  for (const AgentSpec& a : agents)
    outputs["agents/" + a.id + ".cbnn"] = file_meta(a.weights_path);
  ordered_json cfg;
  cfg["puzzle"] = common.puzzle;
  cfg["agents"] = num_agents;
  cfg["model"] = model_cfg_json(agents[0].model);
  cfg["walk"] = {{"k_max", agents[0].walk.k_max},
                 {"non_backtracking", agents[0].walk.non_backtracking}};
  cfg["train"] = {{"epochs", tf.epochs},
                  {"samples_per_epoch", tf.samples},
                  {"minibatch", tf.minibatch},
                  {"lr", tf.lr}};
  cfg["beam"] = beam_cfg_json(ecfg.beam);
  cfg["subset_trials"] = trials;
  ordered_json seeds;
  seeds["root"] = common.seed;
  seeds["agents"] = std::move(agent_seeds);
  seeds["subset"] = ecfg.subset_seed;
  write_run_json(common.out, "ensemble", cfg, seeds, outputs);

  double best_single = report.agent_avg[0];
  for (double v : report.agent_avg)
    if (!std::isnan(v) && (std::isnan(best_single) || v < best_single)) best_single = v;
  std::printf(
      "ensemble of %d agents: avg length %.4f over %lld/%lld solved (best single agent %.4f); "
      "report in %s\n",
      num_agents, report.ensemble_avg, static_cast<long long>(report.ensemble_solved),
      static_cast<long long>(report.num_scrambles), best_single, common.out.c_str());
  return 0;
}

int cmd_bench(const CommonFlags& common, const std::string& model_path, const ModelFlags& mf,
              const BeamFlags& bf, i64 batch, int reps) {
  PuzzleDef def = resolve_puzzle(common.puzzle);
  ResMLP<float> model = model_path.empty()
                            ? ResMLP<float>(make_model_cfg(def, mf), common.seed)
                            : load_model(model_path).model;
  InferenceEngine engine(model);

  WalkConfig wcfg;
  wcfg.k_max = default_kmax(def);
  wcfg.num_walks = (batch + wcfg.k_max - 1) / wcfg.k_max;
  wcfg.seed = derive_seed(common.seed, "bench");
  auto t0 = Clock::now();
  TrainBatch walk_batch = generate(def, wcfg);
  double walk_secs = seconds_since(t0);
  i64 n_states = std::min<i64>(batch, walk_batch.num_samples);

  std::vector<float> scores(n_states);
  engine.score(walk_batch.states.data(), n_states, scores.data());  // warm-up
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    engine.score(walk_batch.states.data(), n_states, scores.data());
  double score_secs = seconds_since(t0) / reps;

  BeamConfig bcfg = make_beam_cfg(bf);
  StateVector scramble = random_scrambles(def, 1, 0, derive_seed(common.seed, "bench-scramble"))
                             .front()
                             .state;
  t0 = Clock::now();
  BeamResult res = beam_search(def, scramble, engine, bcfg);
  double beam_secs = seconds_since(t0);

  double us_per_state = score_secs / static_cast<double>(n_states) * 1e6;
  double nodes_per_sec = beam_secs > 0 ? static_cast<double>(res.nodes_scored) / beam_secs : 0.0;
  std::printf("inference: %.3f us/state (%.3g states/s, %s path, %d threads)\n", us_per_state,
              1e6 / us_per_state, engine.fused() ? "fused" : "dense", thread_count());
  std::printf("walks: %.3g samples/s\n",
              walk_secs > 0 ? static_cast<double>(walk_batch.num_samples) / walk_secs : 0.0);
  std::printf("beam W=%lld: %s in %d steps, %lld nodes, %.3g nodes/s, %.3fs\n",
              static_cast<long long>(bcfg.width), res.solved ? "solved" : "no solution",
              res.steps_taken, static_cast<long long>(res.nodes_scored), nodes_per_sec,
              beam_secs);

  fs::create_directories(common.out);
  ordered_json j;
  j["config"] = {{"puzzle", common.puzzle},
                 {"model", model_path.empty() ? model_cfg_json(model.config())
                                              : ordered_json(model_path)},
                 {"beam", beam_cfg_json(bcfg)},
                 {"batch", n_states},
                 {"reps", reps},
                 {"threads", thread_count()}};
  j["inference"] = {{"us_per_state", us_per_state},
                    {"states_per_sec", 1e6 / us_per_state},
                    {"fused", engine.fused()}};
  j["walks"] = {{"samples_per_sec",
                 walk_secs > 0 ? static_cast<double>(walk_batch.num_samples) / walk_secs : 0.0}};
  j["beam"] = {{"solved", res.solved},
               {"steps", res.steps_taken},
               {"nodes_scored", res.nodes_scored},
               {"nodes_per_sec", nodes_per_sec},
               {"seconds", beam_secs}};
  std::string path = (fs::path(common.out) / "bench.json").string();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << '\n';
  return 0;
}

int cmd_verify(const std::string& puzzle, const std::string& scrambles_path,
               const std::string& results_path) {
  PuzzleDef def = resolve_puzzle(puzzle);
  std::vector<ScrambleRecord> recs = load_scrambles(scrambles_path, def);
  std::ifstream f(results_path);
  if (!f) throw IoError("cannot read " + results_path);
  std::string line;
  if (!std::getline(f, line) || line != kResultsHeader)
    throw ParseError(results_path + ": expected header '" + std::string(kResultsHeader) + "'");

  i64 rows = 0, solved = 0, failures = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream ss(line);
    std::string id, solved_s, length_s, moves_s, rest;
    std::getline(ss, id, ',');
    std::getline(ss, solved_s, ',');
    std::getline(ss, length_s, ',');
    std::getline(ss, moves_s, ',');
    auto fail = [&](const std::string& why) {
      std::fprintf(stderr, "verify: row %s: %s\n", id.c_str(), why.c_str());
      ++failures;
    };
    auto rec = std::find_if(recs.begin(), recs.end(),
                            [&](const ScrambleRecord& r) { return r.id == id; });
    if (rec == recs.end()) {
      fail("no scramble with this id in " + scrambles_path);
      continue;
    }
    if (solved_s == "0") {
      if (length_s != "-1") fail("unsolved row must have length -1");
      continue;
    }
    ++solved;
    std::vector<std::string> moves = split_moves(moves_s);
    if (std::to_string(moves.size()) != length_s)
      fail("length " + length_s + " but " + std::to_string(moves.size()) + " moves");
    StateVector end = replay(def, moves, rec->state);
    if (!(end == def.solved)) fail("moves do not replay to the solved state");
  }
  if (failures) {
    std::fprintf(stderr, "verify: %lld failure(s) in %lld rows\n",
                 static_cast<long long>(failures), static_cast<long long>(rows));
    return 1;
  }
  std::printf("verify: %lld rows, %lld solved, all consistent\n", static_cast<long long>(rows),
              static_cast<long long>(solved));
  return 0;
}

int cmd_puzzle_info(const std::string& puzzle) {
  PuzzleDef def = resolve_puzzle(puzzle);
  ordered_json j;
  j["name"] = def.name;
  j["n"] = def.n;
  j["num_labels"] = def.num_labels;
  j["metric"] = metric_name(def.metric);
  j["generators"] = ordered_json::array();
  for (int g = 0; g < def.gen_count(); ++g)
    j["generators"].push_back({{"name", def.generators[g].name},
                               {"inverse", def.generators[def.inverse_index[g]].name}});
  j["default_k_max"] = default_kmax(def);
  j["one_hot_dim"] = static_cast<i64>(def.n) * def.num_labels;
  j["warnings"] = def.warnings;
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cayley: learned beam search on Cayley graphs of permutation puzzles"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.config_formatter(std::make_shared<JsonConfig>());
  int threads = 1;
  bool verbose = false;
  app.add_option("--threads", threads, "worker threads")->capture_default_str();
  app.add_flag("--verbose,-v", verbose, "progress details on stderr");

  CommonFlags train_common, solve_common, bfs_common, ens_common, bench_common;
  ModelFlags train_model, ens_model, bench_model;
  WalkFlags train_walk, ens_walk;
  TrainFlags train_train, ens_train;
  BeamFlags solve_beam, ens_beam, bench_beam;
  ScrambleFlags solve_scr, ens_scr;

  auto* train_cmd = app.add_subcommand("train", "train a distance model on random walks");
  add_common(train_cmd, train_common, /*out_required=*/true);
  add_model(train_cmd, train_model);
  add_walk(train_cmd, train_walk);
  add_train(train_cmd, train_train);

  auto* solve_cmd = app.add_subcommand("solve", "beam-search scrambles with a trained model");
  std::string solve_model, solve_results = "results.csv";
  add_common(solve_cmd, solve_common);
  solve_cmd->add_option("--model", solve_model, "trained .cbnn weights")->required();
  add_beam(solve_cmd, solve_beam);
  add_scrambles(solve_cmd, solve_scr);
  solve_cmd->add_option("--results", solve_results, "results CSV filename")
      ->capture_default_str();

  auto* bfs_cmd = app.add_subcommand("bfs", "exact breadth-first enumeration from solved");
  int bfs_depth_limit = -1;
  u64 bfs_budget = EnumerateOptions{}.mem_budget;
  std::string bfs_dump;
  std::vector<std::string> bfs_distance;
  add_common(bfs_cmd, bfs_common);
  bfs_cmd->add_option("--depth-limit", bfs_depth_limit, "stop after this depth (-1 = full)")
      ->capture_default_str();
  bfs_cmd->add_option("--mem-budget", bfs_budget, "state-table memory budget in bytes")
      ->capture_default_str();
  bfs_cmd->add_option("--dump", bfs_dump, "also dump the (hash, depth) table to this file");
  bfs_cmd->add_option("--distance", bfs_distance,
                      "print the optimal distance of the state reached by this move "
                      "sequence (repeatable)");

  auto* ens_cmd = app.add_subcommand("ensemble", "train/solve with many agents, aggregate minima");
  int ens_agents = 3, ens_trials = 64;
  bool ens_no_train = false;
  add_common(ens_cmd, ens_common, /*out_required=*/true);
  ens_cmd->add_option("--agents", ens_agents, "number of independently seeded agents")
      ->capture_default_str();
  add_model(ens_cmd, ens_model);
  add_walk(ens_cmd, ens_walk);
  add_train(ens_cmd, ens_train);
  add_beam(ens_cmd, ens_beam);
  add_scrambles(ens_cmd, ens_scr);
  ens_cmd->add_option("--trials", ens_trials, "random subsets sampled per curve size")
      ->capture_default_str();
  ens_cmd->add_flag("--no-train", ens_no_train, "fail instead of training missing agents");

  auto* bench_cmd = app.add_subcommand("bench", "measure inference, walk, and search throughput");
  std::string bench_model_path;
  i64 bench_batch = 16384;
  int bench_reps = 5;
  add_common(bench_cmd, bench_common);
  bench_cmd->add_option("--model", bench_model_path, "trained .cbnn (default: fresh random init)");
  add_model(bench_cmd, bench_model);
  add_beam(bench_cmd, bench_beam);
  bench_cmd->add_option("--batch", bench_batch, "states per scoring call")->capture_default_str();
  bench_cmd->add_option("--reps", bench_reps, "scoring repetitions")->capture_default_str();

  auto* verify_cmd = app.add_subcommand("verify", "check a results CSV against its scrambles");
  std::string verify_puzzle, verify_scrambles, verify_results;
  verify_cmd->add_option("--puzzle", verify_puzzle, "puzzle spec or JSON file")->required();
  verify_cmd->add_option("--scrambles", verify_scrambles, "scramble CSV the results refer to")
      ->required();
  verify_cmd->add_option("--results", verify_results, "results CSV from `solve`")->required();

  auto* info_cmd = app.add_subcommand("puzzle-info", "print a puzzle description as JSON");
  std::string info_puzzle;
  info_cmd->add_option("--puzzle", info_puzzle, "puzzle spec or JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    set_thread_count(threads);
    if (*train_cmd)
      return cmd_train(train_common, train_model, train_walk, train_train, verbose);
    if (*solve_cmd)
      return cmd_solve(solve_common, solve_model, solve_beam, solve_scr, solve_results, verbose);
    if (*bfs_cmd) return cmd_bfs(bfs_common, bfs_depth_limit, bfs_budget, bfs_dump, bfs_distance);
    if (*ens_cmd)
      return cmd_ensemble(ens_common, ens_agents, ens_model, ens_walk, ens_train, ens_beam,
                          ens_scr, ens_trials, ens_no_train, verbose);
    if (*bench_cmd)
      return cmd_bench(bench_common, bench_model_path, bench_model, bench_beam, bench_batch,
                       bench_reps);
    if (*verify_cmd) return cmd_verify(verify_puzzle, verify_scrambles, verify_results);
    if (*info_cmd) return cmd_puzzle_info(info_puzzle);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
