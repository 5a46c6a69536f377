#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aggnash/cli/commands.hpp"
#include "aggnash/cli/config.hpp"
#include "aggnash/errors.hpp"

using namespace aggnash;
using namespace aggnash::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("aggnash_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig parse(const std::string& text, const fs::path& base = {}) {
  std::istringstream in(text);
  return parse_config(in, base);
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "no error";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(AGGNASH_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string value_of(const std::string& report, const std::string& key) {
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " = ", 0) == 0) return line.substr(key.size() + 3);
  }
  return "";
}

const char* kSmallConfig =
    "[game]\nsource = small\n[solver]\nstop_norm = euclidean\nrecord_every = 50\n"
    "[quality]\ncompute = false\n";

}  // namespace

TEST(ConfigParse, Defaults) {
  ExperimentConfig c = parse("");
  EXPECT_EQ(c.game.source, GameSource::Small);
  EXPECT_EQ(c.solver.tau, 0.005);
  EXPECT_EQ(c.solver.nu, 10);
  EXPECT_EQ(c.solver.stop_tol, 1e-4);
  EXPECT_EQ(c.solver.projection_method, ProjectionMethod::DualNewton);
}

TEST(ConfigParse, ReadsEverySection) {
  ExperimentConfig c = parse(
      "[run]\nseed = 4\n[game]\nsource = network\nlocations = 37 20 11\ncapacity = 8\n"
      "market_capacity = inf\ncomm = uniform\n[solver]\ntau = 0.01\nnu = 3\nmode = wardrop\n"
      "projection = dykstra\n[sweep]\nnu = 2 4 6\n[output]\ndir = results\n",
      "/base");
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.game.source, GameSource::Network);
  EXPECT_EQ(c.game.locations, (std::vector<int>{37, 20, 11}));
  EXPECT_TRUE(std::isinf(c.game.market_capacity));
  EXPECT_EQ(c.game.comm, "uniform");
  EXPECT_EQ(c.solver.mode, Mode::Wardrop);
  EXPECT_EQ(c.solver.projection_method, ProjectionMethod::Dykstra);
  EXPECT_EQ(c.sweep, (std::vector<int>{2, 4, 6}));
  EXPECT_EQ(c.output_dir, fs::path("/base/results"));
}

TEST(ConfigParse, ErrorsNameLineOrField) {
  EXPECT_EQ(config_error("[solver]\ntau = 0.1\n[solver\n").rfind("line 3:", 0), 0u);
  EXPECT_EQ(config_error("[solver]\ntau = fast\n").rfind("solver.tau:", 0), 0u);
  EXPECT_EQ(config_error("[solver]\nstep = 1\n"), "solver.step: unknown key");
  EXPECT_EQ(config_error("[plot]\nx = 1\n"), "unknown section [plot]");
  EXPECT_EQ(config_error("[game]\nsource = small\ncapacity = 3\n").rfind("game.capacity:", 0), 0u);
  EXPECT_EQ(config_error("[game]\nsource = network\nlocations = 0 2\n").rfind("game.locations:", 0),
            0u);
  EXPECT_EQ(config_error("[solver]\nnu = 0\n").rfind("solver:", 0), 0u);
  EXPECT_EQ(config_error("[game]\ncomm = /no/such/file\n").rfind("game.comm:", 0), 0u);
}

TEST(ConfigHash, IgnoresOutputDirectoryOnly) {
  ExperimentConfig a = parse("[output]\ndir = a\n");
  ExperimentConfig b = parse("[output]\ndir = b\n");
  ExperimentConfig c = parse("[solver]\ntau = 0.004\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(provenance_line(a).rfind("# aggnash 0.3.0 config ", 0), 0u);
}

TEST(ProfileCsv, RoundTrip) {
  ExperimentConfig cfg = parse(kSmallConfig);
  Instance inst = build_instance(cfg);
  std::mt19937_64 rng(2);
  StrategyProfile x = sample_profile(inst.cournot.game, rng);
  std::stringstream buf;
  buf << "# header comment\n";
  write_profile_csv(buf, x);
  StrategyProfile y = read_profile_csv(buf, inst.cournot.game);
  EXPECT_EQ(x.stacked(), y.stacked());
  std::istringstream short_csv("agent,component,value\n1,1,0.5\n");
  EXPECT_THROW(read_profile_csv(short_csv, inst.cournot.game), InvalidInput);
}

TEST(SolveCommand, OutputsAreByteIdenticalAcrossRuns) {
  fs::path dir = scratch("solve");
  ExperimentConfig cfg = parse(kSmallConfig);
  cfg.output_dir = dir / "a";
  std::ostringstream log;
  ASSERT_EQ(cmd_solve(cfg, log), kExitOk) << log.str();
  cfg.output_dir = dir / "b";
  ASSERT_EQ(cmd_solve(cfg, log), kExitOk);
  for (const char* name : {"equilibrium.csv", "sales.csv", "trace.csv", "quality.txt"}) {
    const std::string a = read_file(dir / "a" / name);
    EXPECT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, read_file(dir / "b" / name)) << name;
    EXPECT_EQ(a.rfind(provenance_line(cfg), 0), 0u) << name;
  }
  // The equilibrium written to disk feeds back into the epsilon command.
  cfg.output_dir = dir / "c";
  EXPECT_EQ(cmd_epsilon(cfg, dir / "a" / "equilibrium.csv", log), kExitOk);
  EXPECT_FALSE(read_file(dir / "c" / "quality.txt").empty());
}

TEST(SolveCommand, IterationCapExitsWithRuntimeCode) {
  fs::path dir = scratch("cap");
  ExperimentConfig cfg = parse(
      "[game]\nsource = small\n[solver]\nmax_iter = 20\n[quality]\ncompute = false\n");
  EXPECT_EQ(cfg.solver.max_iter, 20);
  cfg.output_dir = dir;
  std::ostringstream log;
  EXPECT_EQ(cmd_solve(cfg, log), kExitRuntime);
  EXPECT_TRUE(fs::exists(dir / "trace.csv"));
}

TEST(ValidateCommand, IdentityCommunicationFails) {
  fs::path dir = scratch("identity");
  write_file(dir / "identity.txt", "3\n1 0 0\n0 1 0\n0 0 1\n");
  write_file(dir / "run.ini", "[game]\nsource = small\ncomm = identity.txt\n[run]\nmonotonicity_samples = 2\n");
  ExperimentConfig cfg = load_config(dir / "run.ini");
  std::ostringstream out;
  EXPECT_EQ(cmd_validate(cfg, out), kExitValidation);
  EXPECT_EQ(value_of(out.str(), "comm.primitive"), "false");
  EXPECT_EQ(run_cli("validate --config " + (dir / "run.ini").string()), kExitValidation);
}

TEST(ValidateCommand, RingWithEvenRoundsIsMonotone) {
  ExperimentConfig cfg = parse(
      "[run]\nmonotonicity_samples = 3\n[game]\nsource = network\nsurrogate_vertices = 10\n"
      "surrogate_roads = 12\nlocations = 1 3 5 7 9\n[solver]\nnu = 4\n");
  std::ostringstream out;
  EXPECT_EQ(cmd_validate(cfg, out), kExitOk) << out.str();
  EXPECT_GT(std::stod(value_of(out.str(), "monotonicity.alpha_hat")), 0.0);
  EXPECT_EQ(value_of(out.str(), "price.positive_semidefinite"), "true");
}

TEST(SweepCommand, ExactAverageHasZeroDistance) {
  fs::path dir = scratch("sweep");
  ExperimentConfig cfg = parse(
      "[game]\nsource = network\nsurrogate_vertices = 8\nsurrogate_roads = 9\n"
      "locations = 1 4 6\ncomm = uniform\n[solver]\ntau = 0.05\nstop_tol = 1e-6\n"
      "[sweep]\nnu = 1 2\n[quality]\ncompute = false\n");
  cfg.output_dir = dir;
  std::ostringstream log;
  ASSERT_EQ(cmd_sweep(cfg, log), kExitOk) << log.str();
  std::istringstream in(read_file(dir / "sweep.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line[0], '#');
  std::getline(in, line);
  EXPECT_EQ(line, "nu,eps_rel,distance,iterations,converged,status");
  for (int nu : {1, 2}) {
    std::getline(in, line);
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    ASSERT_EQ(f.size(), 6u) << line;
    EXPECT_EQ(std::stoi(f[0]), nu);
    // With uniform weights every round count reproduces the reference run.
    if (nu == 1) {
      EXPECT_EQ(std::stod(f[2]), 0.0) << line;
    }
    EXPECT_LT(std::stod(f[2]), 1e-9) << line;
    EXPECT_EQ(f[4], "true");
  }
}

TEST(Binary, ExitCodes) {
  EXPECT_EQ(run_cli("--version"), 0);
  EXPECT_EQ(run_cli("solve"), kExitValidation);
  EXPECT_EQ(run_cli("solve --config /no/such.ini"), kExitValidation);
  fs::path dir = scratch("binary");
  write_file(dir / "bad.ini", "[solver]\ntau = -1\n");
  EXPECT_EQ(run_cli("solve --config " + (dir / "bad.ini").string()), kExitValidation);
}
