#include "coexist/commands.hpp"
#include "coexist/config.hpp"

#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace coexist;
namespace fs = std::filesystem;

namespace {

json base_config() {
  return json::parse(R"({
    "schema": 1,
    "mesh": {"dim": 1, "extents": [1.0], "n": [128]},
    "law": {"family": "affine", "a0": 1.0, "a1": 1.0},
    "params": {"b": 0.0, "rho": 1.0, "sigma": 1.0, "lambda": 12.0},
    "seed": 42
  })");
}

std::string config_dir() { return COEXIST_CONFIG_DIR; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("coexist_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(COEXIST_CLI_PATH) + " " + args;
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config parsing is strict", "[cli][config]") {
  CHECK_NOTHROW(parse_config(base_config()));

  SECTION("unknown keys carry the field path") {
    json j = base_config();
    j["params"]["rh0"] = 1.0;
    try {
      parse_config(j);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("config.params.rh0") != std::string::npos);
    }
  }

  SECTION("type mismatches are rejected") {
    json j = base_config();
    j["params"]["rho"] = "one";
    CHECK_THROWS_AS(parse_config(j), ConfigError);
  }

  SECTION("module preconditions are checked up front") {
    json j = base_config();
    j["params"]["sigma"] = 0.0;
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["mesh"]["n"] = {2};
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["probe"] = {{"k", 0}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["law"] = {{"family", "cubic"}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["params"]["lambda_range"] = {3.0, 1.0};
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["epsilon"] = {{"schedule", {1e-2, 1e-1}}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
  }
}

TEST_CASE("eig command reports the detachment data", "[cli]") {
  const RunConfig cfg = parse_config(base_config());
  const std::string out = run_eig(cfg);
  CHECK(out.find("lambda1 = 9.86") != std::string::npos);
  CHECK(out.find("lambda_star = 9.86") != std::string::npos);
  CHECK(out.find("K = 0.0920") != std::string::npos);
  CHECK(out.find("threshold_T = -1.46") != std::string::npos);
  CHECK(out.find("direction = supercritical") != std::string::npos);

  SECTION("degenerate laws are routed to the epsilon command") {
    json j = base_config();
    j["law"] = {{"family", "affine"}, {"a0", 0.0}, {"a1", 1.0}};
    const std::string text = run_eig(parse_config(j));
    CHECK(text.find("lambda_star = 0") != std::string::npos);
    CHECK(text.find("epsilon command") != std::string::npos);
    CHECK(text.find("direction =") == std::string::npos);
  }

  SECTION("strong cooperation with flat diffusion is subcritical") {
    json j = base_config();
    j["law"] = {{"family", "constant"}, {"a0", 1.0}};
    j["params"] = {{"b", 10.0}, {"rho", 2.0}, {"sigma", 1.0}};
    const std::string text = run_eig(parse_config(j));
    CHECK(text.find("direction = subcritical") != std::string::npos);
    CHECK(text.find("threshold_T = 0.61") != std::string::npos);
  }
}

TEST_CASE("branch command produces the canonical diagrams", "[cli]") {
  SECTION("supercritical: lambda increases near the start") {
    const RunConfig cfg = load_config(config_dir() + "/supercritical.json");
    const BranchRun run = run_branch(cfg);
    CHECK(run.verified);
    CHECK(run.csv.rfind("step,lambda,arc,sup_u,sup_v,mass_v,fold_count\n", 0) == 0);
    const auto& pts = run.branch.points;
    REQUIRE(pts.size() >= 4);
    for (std::size_t i = 2; i <= 3; ++i)
      CHECK(pts[i].lambda > pts[i - 1].lambda);
    CHECK(run.report.at("fold_count").get<int>() == 0);
  }

  SECTION("subcritical: lambda dips, then a fold") {
    const RunConfig cfg = load_config(config_dir() + "/subcritical.json");
    const BranchRun run = run_branch(cfg);
    CHECK(run.verified);
    const auto& pts = run.branch.points;
    REQUIRE(pts.size() >= 4);
    CHECK(pts[1].lambda < pts[0].lambda);
    CHECK(run.report.at("fold_count").get<int>() >= 1);
  }

  SECTION("window below the detachment point records no coexistence") {
    const RunConfig cfg = load_config(config_dir() + "/window_empty.json");
    const BranchRun run = run_branch(cfg);
    CHECK(run.report.at("coexistence_points_in_window").get<int>() == 0);
  }

  SECTION("branch requires a lambda window") {
    const RunConfig cfg = parse_config(base_config());
    CHECK_THROWS_AS(run_branch(cfg), ConfigError);
  }

  SECTION("the stack is dimension-clean: branch on a rectangle config") {
    json j = base_config();
    j["mesh"] = {{"dim", 2}, {"extents", {1.0, 1.0}}, {"n", {16, 16}}};
    j["params"] = {{"b", 0.0}, {"rho", 1.0}, {"sigma", 1.0},
                   {"lambda_range", {0.0, 21.5}}};
    const BranchRun run = run_branch(parse_config(j));
    CHECK(run.verified);
    CHECK(run.branch.termination == BranchTermination::lambda_max_reached);
    // detachment near 2*pi^2 on the unit square
    CHECK(run.branch.points.at(1).lambda == Approx(19.74).margin(0.4));
  }
}

TEST_CASE("probe command summaries", "[cli]") {
  SECTION("uniqueness configuration counts one state") {
    const RunConfig cfg = load_config(config_dir() + "/probe_unique.json");
    const json out = run_probe(cfg, cfg.seed, 0);
    CHECK(out.at("distinct_coexistence_count").get<int>() == 1);
    CHECK(out.at("starts").size() == 20);
  }
  SECTION("nonexistence configuration counts zero") {
    const RunConfig cfg = load_config(config_dir() + "/probe_nonexistence.json");
    const json out = run_probe(cfg, cfg.seed, 0);
    CHECK(out.at("distinct_coexistence_count").get<int>() == 0);
  }
}

TEST_CASE("epsilon command emits the Cauchy column", "[cli]") {
  const RunConfig cfg = load_config(config_dir() + "/epsilon_degenerate.json");
  const EpsilonRun run = run_epsilon(cfg);
  REQUIRE(run.homotopy.completed);

  std::istringstream csv(run.csv);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "eps,sup_u,sup_v,cauchy_gap");
  std::getline(csv, line);
  CHECK(line.back() == ',');  // first row has an empty gap

  double prev = std::numeric_limits<double>::infinity();
  while (std::getline(csv, line)) {
    const double gap = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(gap < prev);
    prev = gap;
  }

  SECTION("nondegenerate laws are validation errors") {
    json j = base_config();
    j["epsilon"] = {{"schedule", {1e-1, 1e-2}}};
    CHECK_THROWS_AS(run_epsilon(parse_config(j)), ConfigError);
  }

  SECTION("single-stage schedule yields one row with empty gap") {
    json j = base_config();
    j["law"] = {{"family", "affine"}, {"a0", 0.0}, {"a1", 1.0}};
    j["params"] = {{"b", -0.5}, {"rho", 1.0}, {"sigma", 1.0}, {"lambda", 5.0}};
    j["epsilon"] = {{"schedule", {1e-1}}};
    j["mesh"] = {{"dim", 1}, {"extents", {1.0}}, {"n", {128}}};
    const EpsilonRun run1 = run_epsilon(parse_config(j));
    std::istringstream s(run1.csv);
    std::string l0, l1, rest;
    std::getline(s, l0);
    std::getline(s, l1);
    CHECK_FALSE(std::getline(s, rest));
    CHECK(l1.back() == ',');
  }
}

TEST_CASE("verify command passes on a solvable configuration", "[cli]") {
  const RunConfig cfg = parse_config(base_config());
  const json rep = run_verify(cfg);
  CHECK(rep.at("overall").get<bool>());
  CHECK(rep.at("classification").get<std::string>() == "coexistence");
}

TEST_CASE("repeated branch runs are byte-identical", "[cli][determinism]") {
  const RunConfig cfg = load_config(config_dir() + "/supercritical.json");
  const BranchRun a = run_branch(cfg);
  const BranchRun b = run_branch(cfg);
  CHECK(a.csv == b.csv);
  CHECK(a.report.dump() == b.report.dump());
}

TEST_CASE("cli subprocess round trip", "[cli][subprocess]") {
  const fs::path dir_a = temp_dir("cli_a");
  const fs::path dir_b = temp_dir("cli_b");
  const std::string cfg = config_dir() + "/supercritical.json";

  SECTION("identical runs, byte-identical files, exit 0") {
    CHECK(run_cli("branch --config " + cfg + " --out " + dir_a.string() +
                  " > /dev/null") == 0);
    CHECK(run_cli("branch --config " + cfg + " --out " + dir_b.string() +
                  " > /dev/null") == 0);
    CHECK(slurp(dir_a / "branch.csv") == slurp(dir_b / "branch.csv"));
    CHECK(slurp(dir_a / "report.json") == slurp(dir_b / "report.json"));
    CHECK(!slurp(dir_a / "branch.csv").empty());
  }

  SECTION("config errors exit 2 with a JSON error object") {
    const fs::path bad = dir_a / "bad.json";
    std::ofstream(bad) << R"({"schema": 1, "mesh": {"dim": 1, "extents": [1.0],
      "n": [16]}, "law": {"family": "affine", "a0": 1.0, "a1": 1.0},
      "params": {"rho": 1.0, "sigma": 1.0, "unknown_key": 3}})";
    const std::string err_file = (dir_a / "stderr.txt").string();
    CHECK(run_cli("eig --config " + bad.string() + " 2> " + err_file) == 2);
    const std::string err = slurp(err_file);
    CHECK(err.find("\"code\":2") != std::string::npos);
    CHECK(err.find("unknown_key") != std::string::npos);
  }

  SECTION("solver failures exit 3") {
    // An unreachable residual target plus a step floor at the starting
    // amplitude makes the first corrector fail outright.
    const fs::path hard = dir_a / "hard.json";
    json j = json::parse(slurp(cfg));
    j["newton"] = {{"tol_residual", 1e-15}, {"max_iter", 1}};
    j["continuation"] = {{"ds", 0.011}, {"ds_min", 0.01}, {"ds_max", 0.5}};
    std::ofstream(hard) << j.dump();
    CHECK(run_cli("branch --config " + hard.string() + " --out " +
                  dir_a.string() + " > /dev/null 2>&1") == 3);
  }

  SECTION("missing config exits 2") {
    CHECK(run_cli("eig --config /nonexistent.json 2> /dev/null") == 2);
  }

  SECTION("probe with an explicit seed reproduces its JSON byte for byte") {
    const std::string pcfg = config_dir() + "/probe_unique.json";
    CHECK(run_cli("probe --config " + pcfg + " --seed 7 --threads 2 --out " +
                  dir_a.string() + " > /dev/null") == 0);
    CHECK(run_cli("probe --config " + pcfg + " --seed 7 --threads 4 --out " +
                  dir_b.string() + " > /dev/null") == 0);
    const std::string ja = slurp(dir_a / "probe.json");
    CHECK(ja == slurp(dir_b / "probe.json"));
    CHECK(ja.find("\"seed\": 7") != std::string::npos);
  }

  SECTION("verify subcommand exits 0 on a solvable configuration") {
    const fs::path vcfg = dir_a / "verify.json.in";
    json j = json::parse(slurp(cfg));
    j["params"].erase("lambda_range");
    j["params"]["lambda"] = 12.0;
    std::ofstream(vcfg) << j.dump();
    CHECK(run_cli("verify --config " + vcfg.string() + " --out " +
                  dir_a.string() + " > /dev/null") == 0);
    CHECK(slurp(dir_a / "verify.json").find("\"overall\": true") !=
          std::string::npos);
  }
}
