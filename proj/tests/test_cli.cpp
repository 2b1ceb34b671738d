#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

// Drives the installed binary end to end: exit codes, artifact layout, the
// frozen results-CSV contract, config-file precedence, and rerun determinism.

namespace fs = std::filesystem;

namespace {

struct RunOutput {
  int exit_code = -1;
  std::string stdout_text;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunOutput run_cli(const std::string& args, const fs::path& dir) {
  fs::path out = dir / "stdout.txt";
  std::string cmd = std::string(CAYLEY_CLI_PATH) + " " + args + " > " + out.string() +
                    " 2> " + (dir / "stderr.txt").string();
  int raw = std::system(cmd.c_str());
  RunOutput r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.stdout_text = slurp(out);
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("cayley_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& sub) const { return (path / sub).string(); }
};

// results.csv with the timing column blanked, for determinism comparisons
std::string strip_wall_time(const std::string& csv) {
  std::stringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    size_t cut = line.rfind(',');
    out += line.substr(0, cut);
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("cli: usage errors exit 2, operational errors exit 1") {
  TempDir dir("codes");
  CHECK(run_cli("definitely-not-a-command", dir.path).exit_code == 2);
  CHECK(run_cli("solve --puzzle builtin:2:qtm:fixed", dir.path).exit_code == 2);  // missing --model
  CHECK(run_cli("train --puzzle builtin:9:qtm --out " + (dir / "x"), dir.path).exit_code == 1);
  CHECK(run_cli("solve --puzzle builtin:2:qtm:fixed --model /nonexistent.cbnn --random 1 --out " +
                    (dir / "y"),
                dir.path)
            .exit_code == 1);
  CHECK(run_cli("--help", dir.path).exit_code == 0);
  CHECK(run_cli("--version", dir.path).exit_code == 0);
}

TEST_CASE("cli: puzzle-info emits valid JSON") {
  TempDir dir("info");
  RunOutput r = run_cli("puzzle-info --puzzle builtin:2:uqtm", dir.path);
  REQUIRE(r.exit_code == 0);
  auto j = nlohmann::json::parse(r.stdout_text);
  CHECK(j["n"] == 24);
  CHECK(j["metric"] == "UQTM");
  CHECK(j["generators"].size() == 12);
  CHECK(j["generators"][0]["inverse"] != j["generators"][0]["name"]);
}

TEST_CASE("cli: train/solve/verify round trip with frozen CSV columns") {
  TempDir dir("pipeline");
  std::string train_args =
      "train --puzzle builtin:2:qtm:fixed --out " + (dir / "t") +
      " --seed 5 --n1 64 --epochs 2 --samples 8000 --minibatch 512 --k-max 14";
  REQUIRE(run_cli(train_args, dir.path).exit_code == 0);
  CHECK(fs::exists(dir.path / "t" / "model.cbnn"));
  CHECK(fs::exists(dir.path / "t" / "train_log.csv"));
  CHECK(fs::exists(dir.path / "t" / "run.json"));

  std::string solve_args = "solve --puzzle builtin:2:qtm:fixed --model " +
                           (dir / "t/model.cbnn") + " --out " + (dir / "s") +
                           " --random 6 --scramble-depth 5 --width 256 --seed 11";
  RunOutput solve = run_cli(solve_args, dir.path);
  REQUIRE(solve.exit_code == 0);
  std::string csv = slurp(dir.path / "s" / "results.csv");
  CHECK(csv.rfind("id,solved,length,moves,steps,nodes_scored,wall_time\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);  // header + 6 rows

  std::string verify_args = "verify --puzzle builtin:2:qtm:fixed --scrambles " +
                            (dir / "s/scrambles.csv") + " --results " + (dir / "s/results.csv");
  CHECK(run_cli(verify_args, dir.path).exit_code == 0);

  // corrupt one solved row's move string: verify must fail with exit 1
  std::string bad = csv;
  size_t pos = bad.find(",1,");
  REQUIRE(pos != std::string::npos);
  size_t mv = bad.find(',', pos + 3) + 1;
  bad[mv] = bad[mv] == 'U' ? 'R' : 'U';
  std::ofstream(dir.path / "s" / "broken.csv") << bad;
  std::string verify_bad = "verify --puzzle builtin:2:qtm:fixed --scrambles " +
                           (dir / "s/scrambles.csv") + " --results " + (dir / "s/broken.csv");
  CHECK(run_cli(verify_bad, dir.path).exit_code == 1);
}

TEST_CASE("cli: reruns are byte-identical apart from timing") {
  TempDir dir("determinism");
  std::string train_a = "train --puzzle builtin:2:qtm:fixed --out " + (dir / "a") +
                        " --seed 21 --n1 48 --epochs 2 --samples 6000 --minibatch 512";
  std::string train_b = "train --puzzle builtin:2:qtm:fixed --out " + (dir / "b") +
                        " --seed 21 --n1 48 --epochs 2 --samples 6000 --minibatch 512";
  REQUIRE(run_cli(train_a, dir.path).exit_code == 0);
  REQUIRE(run_cli(train_b, dir.path).exit_code == 0);
  CHECK(slurp(dir.path / "a" / "model.cbnn") == slurp(dir.path / "b" / "model.cbnn"));
  CHECK(slurp(dir.path / "a" / "train_log.csv") == slurp(dir.path / "b" / "train_log.csv"));
  CHECK(slurp(dir.path / "a" / "run.json") == slurp(dir.path / "b" / "run.json"));

  // in-place rerun rewrites the same artifacts
  REQUIRE(run_cli(train_a, dir.path).exit_code == 0);
  CHECK(slurp(dir.path / "a" / "model.cbnn") == slurp(dir.path / "b" / "model.cbnn"));
  CHECK(slurp(dir.path / "a" / "train_log.csv") == slurp(dir.path / "b" / "train_log.csv"));

  for (const char* out : {"s1", "s2"}) {
    std::string solve = "solve --puzzle builtin:2:qtm:fixed --model " + (dir / "a/model.cbnn") +
                        " --out " + (dir / out) +
                        " --random 5 --scramble-depth 6 --width 128 --seed 33";
    REQUIRE(run_cli(solve, dir.path).exit_code == 0);
  }
  CHECK(slurp(dir.path / "s1" / "scrambles.csv") == slurp(dir.path / "s2" / "scrambles.csv"));
  CHECK(strip_wall_time(slurp(dir.path / "s1" / "results.csv")) ==
        strip_wall_time(slurp(dir.path / "s2" / "results.csv")));
  CHECK(slurp(dir.path / "s1" / "run.json") == slurp(dir.path / "s2" / "run.json"));
}

TEST_CASE("cli: config file values apply, flags override them") {
  TempDir dir("config");
  {
    std::ofstream cfg(dir.path / "cfg.json");
    cfg << R"({"threads": 1, "train": {"puzzle": "builtin:2:qtm:fixed", "n1": 40,)"
        << R"( "epochs": 2, "samples": 4000, "minibatch": 512, "seed": 8}})";
  }
  std::string base = "--config " + (dir / "cfg.json") + " train --out ";
  REQUIRE(run_cli(base + (dir / "c1"), dir.path).exit_code == 0);
  auto j1 = nlohmann::json::parse(slurp(dir.path / "c1" / "run.json"));
  CHECK(j1["config"]["model"]["n1"] == 40);  // from the config file
  CHECK(j1["seeds"]["root"] == 8);

  REQUIRE(run_cli(base + (dir / "c2") + " --n1 24", dir.path).exit_code == 0);
  auto j2 = nlohmann::json::parse(slurp(dir.path / "c2" / "run.json"));
  CHECK(j2["config"]["model"]["n1"] == 24);  // flag beats file
  CHECK(j2["config"]["train"]["epochs"] == 2);

  std::ofstream(dir.path / "bad.json") << "{not json";
  CHECK(run_cli("--config " + (dir / "bad.json") + " puzzle-info --puzzle builtin:2:qtm",
                dir.path)
            .exit_code == 2);
}

TEST_CASE("cli: bfs enumerates and reports distances") {
  TempDir dir("bfs");
  RunOutput r = run_cli(
      "bfs --puzzle builtin:2:qtm:fixed --out " + (dir / "o") +
          " --depth-limit 4 --distance \"U\" --distance \"U U\" --distance \"U R F\"",
      dir.path);
  REQUIRE(r.exit_code == 0);
  CHECK(r.stdout_text.find("distance(U) = 1") != std::string::npos);
  CHECK(r.stdout_text.find("distance(U U) = 2") != std::string::npos);
  CHECK(r.stdout_text.find("distance(U R F) = 3") != std::string::npos);
  CHECK(r.stdout_text.find("complete=0") != std::string::npos);  // depth-limited
  std::string hist = slurp(dir.path / "o" / "histogram.csv");
  CHECK(hist.rfind("depth,count\n0,1\n1,6\n", 0) == 0);  // 6 states at depth 1
}
