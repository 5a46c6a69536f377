#include "aggnash/cli/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "aggnash/errors.hpp"
#include "aggnash/game.hpp"
#include "aggnash/solver.hpp"

namespace aggnash::cli {

namespace {

std::ofstream open_output(const ExperimentConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream out(cfg.output_dir / name);
  if (!out) throw std::runtime_error("cannot write " + (cfg.output_dir / name).string());
  out << provenance_line(cfg) << '\n';
  out << std::setprecision(17);
  return out;
}

const char* mode_name(Mode m) { return m == Mode::Nash ? "nash" : "wardrop"; }

// Trace rows as the solver would record them, kept outside the solver so a
// run that throws still leaves its history behind.
class TraceRecorder {
 public:
  TraceRecorder(const GameSpec& game, long every) : game_(game), every_(every) {
    InitialPoint init = default_initial_point(game);
    x_ = init.x.stacked();
    lambda_ = Eigen::VectorXd::Zero(game.agents() * game.coupling_rows());
  }

  IterationObserver observer() {
    return [this](long k, const StrategyProfile& x, const std::vector<Eigen::VectorXd>& lambda) {
      Eigen::VectorXd xs = x.stacked();
      Eigen::VectorXd ls(lambda_.size());
      Eigen::Index off = 0;
      for (const auto& l : lambda) {
        ls.segment(off, l.size()) = l;
        off += l.size();
      }
      last_ = TraceRow{k, (xs - x_).lpNorm<Eigen::Infinity>(),
                       ls.size() ? (ls - lambda_).lpNorm<Eigen::Infinity>() : 0.0,
                       coupling_violation(game_, x)};
      if (k % every_ == 0) rows_.push_back(last_);
      x_ = std::move(xs);
      lambda_ = std::move(ls);
    };
  }

  std::vector<TraceRow> rows() const {
    std::vector<TraceRow> out = rows_;
    if (last_.iteration > 0 && (out.empty() || out.back().iteration != last_.iteration)) {
      out.push_back(last_);
    }
    return out;
  }

 private:
  const GameSpec& game_;
  long every_;
  Eigen::VectorXd x_, lambda_;
  TraceRow last_;
  std::vector<TraceRow> rows_;
};

void write_sales_csv(std::ostream& out, const Instance& inst, const StrategyProfile& x) {
  out << "firm,market,sales\n";
  for (int i = 0; i < inst.cournot.game.agents(); ++i) {
    Eigen::VectorXd y = inst.cournot.game.image(i, x[i]);
    for (Eigen::Index v = 0; v < y.size(); ++v) {
      out << i + 1 << ',' << v + 1 << ',' << y(v) << '\n';
    }
  }
}

void write_quality(std::ostream& out, const ExperimentConfig& cfg, const QualitySummary& q) {
  out << "mode = " << mode_name(cfg.solver.mode) << '\n';
  out << "relaxed_coupling = " << (q.relaxed_coupling ? "true" : "false") << '\n';
  out << "vi_residual = " << q.vi_residual << '\n';
  write_quality_report(out, q.report);
}

double tau_max_for(double alpha, double lipschitz, double norm_a) {
  if (norm_a > 0.0) return step_size_bound(alpha, lipschitz, norm_a).tau_max();
  // Limit of the bound as |A| -> 0.
  return alpha / (lipschitz * lipschitz);
}

}  // namespace

std::string provenance_line(const ExperimentConfig& cfg) {
  std::ostringstream o;
  o << "# aggnash " << kToolVersion << " config " << std::hex << std::setw(16)
    << std::setfill('0') << cfg.hash();
  return o.str();
}

Instance build_instance(const ExperimentConfig& cfg) {
  const GameConfig& g = cfg.game;
  auto pick_comm = [&](int agents, const CommMatrix* builtin) {
    if (g.comm == "small") {
      if (!builtin) throw ConfigError("game.comm: 'small' only applies to source = small");
      return *builtin;
    }
    if (g.comm == "ring") return cournot::build_ring_comm(agents);
    if (g.comm == "uniform") return CommMatrix::uniform(agents);
    CommMatrix c = load_comm_matrix(g.comm);
    if (c.size() != agents) {
      throw ConfigError("game.comm: matrix has " + std::to_string(c.size()) + " rows for " +
                        std::to_string(agents) + " agents");
    }
    return c;
  };

  if (g.source == GameSource::Small) {
    cournot::Example ex = cournot::build_small_example(g.coupled);
    CommMatrix comm = pick_comm(ex.cournot.game.agents(), &ex.comm);
    return Instance{std::move(ex.cournot), std::move(comm), std::nullopt};
  }

  cournot::RoadGraph graph =
      g.graph.empty()
          ? cournot::make_surrogate_graph(g.surrogate_vertices, g.surrogate_roads, g.surrogate_seed)
          : cournot::load_road_graph(g.graph);
  std::vector<cournot::FirmSpec> firms;
  if (!g.firms.empty()) {
    firms = cournot::load_firms(g.firms, graph.vertices);
  } else {
    for (int l : g.locations) {
      if (l > graph.vertices) {
        throw ConfigError("game.locations: market " + std::to_string(l) +
                          " does not exist (graph has " + std::to_string(graph.vertices) + ")");
      }
      cournot::FirmSpec f;
      f.location = l - 1;
      f.capacity = g.capacity;
      firms.push_back(std::move(f));
    }
  }
  cournot::TransportNetwork net =
      cournot::TransportNetwork::from_roads(graph.vertices, graph.roads, g.two_columns);
  cournot::PriceMatrix pm = cournot::build_price_matrix(net);
  Eigen::VectorXd cap = Eigen::VectorXd::Constant(
      graph.vertices, g.market_capacity / static_cast<double>(firms.size()));
  const int agents = static_cast<int>(firms.size());
  cournot::CournotGame cg =
      cournot::build_cournot_game(net, std::move(firms), pm.price, cap, g.transport);
  CommMatrix comm = pick_comm(agents, nullptr);
  return Instance{std::move(cg), std::move(comm), std::move(pm)};
}

QualitySummary evaluate_quality(const Instance& inst, const ExperimentConfig& cfg,
                                const StrategyProfile& profile) {
  const GameSpec& game = inst.cournot.game;
  QualitySummary q;
  EpsilonOptions eo;
  eo.feasibility_tol = cfg.quality.feasibility_tol;
  eo.best_response.tol = cfg.quality.best_response_tol;
  eo.best_response.seed = cfg.seed;
  q.relaxed_coupling = coupling_violation(game, profile) > cfg.quality.feasibility_tol;
  eo.best_response.relax_to_current = q.relaxed_coupling;
  q.report = epsilon_nash(game, profile, eo);
  q.vi_residual = vi_residual(game, inst.comm, Rounds(cfg.solver.nu), profile, {},
                              cfg.solver.mode);
  return q;
}

StrategyProfile read_profile_csv(std::istream& in, const GameSpec& game) {
  std::vector<Eigen::VectorXd> blocks;
  std::vector<std::vector<bool>> seen;
  for (int i = 0; i < game.agents(); ++i) {
    blocks.push_back(Eigen::VectorXd::Zero(game.strategy_dim(i)));
    seen.emplace_back(game.strategy_dim(i), false);
  }
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "agent,component,value") {
        throw InvalidInput("line " + std::to_string(lineno) +
                           ": expected header agent,component,value");
      }
      header = true;
      continue;
    }
    std::istringstream ss(line);
    long agent = 0, comp = 0;
    double value = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ss >> agent >> c1 >> comp >> c2 >> value) || c1 != ',' || c2 != ',') {
      throw InvalidInput("line " + std::to_string(lineno) + ": expected agent,component,value");
    }
    if (agent < 1 || agent > game.agents() || comp < 1 ||
        comp > game.strategy_dim(static_cast<int>(agent - 1))) {
      throw InvalidInput("line " + std::to_string(lineno) + ": index out of range");
    }
    if (seen[agent - 1][comp - 1]) {
      throw InvalidInput("line " + std::to_string(lineno) + ": duplicate entry");
    }
    seen[agent - 1][comp - 1] = true;
    blocks[agent - 1](comp - 1) = value;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    for (std::size_t k = 0; k < seen[i].size(); ++k) {
      if (!seen[i][k]) {
        throw InvalidInput("profile misses agent " + std::to_string(i + 1) + " component " +
                           std::to_string(k + 1));
      }
    }
  }
  return StrategyProfile(std::move(blocks));
}

void write_profile_csv(std::ostream& out, const StrategyProfile& profile) {
  // Enough digits for an exact round trip through read_profile_csv.
  const auto old = out.precision(17);
  out << "agent,component,value\n";
  for (int i = 0; i < profile.agents(); ++i) {
    for (Eigen::Index k = 0; k < profile[i].size(); ++k) {
      out << i + 1 << ',' << k + 1 << ',' << profile[i](k) << '\n';
    }
  }
  out.precision(old);
}

int cmd_validate(const ExperimentConfig& cfg, std::ostream& out) {
  Instance inst = build_instance(cfg);
  const GameSpec& game = inst.cournot.game;
  out << provenance_line(cfg) << '\n' << std::setprecision(10);

  CommValidation cv = validate_comm_matrix(inst.comm);
  out << "agents = " << game.agents() << '\n'
      << "nu = " << cfg.solver.nu << '\n'
      << "comm.doubly_stochastic = " << (cv.doubly_stochastic ? "true" : "false") << '\n'
      << "comm.primitive = " << (cv.primitive ? "true" : "false") << '\n'
      << "comm.consensus_gap = " << consensus_gap(inst.comm, cfg.solver.nu) << '\n';
  bool ok = cv.doubly_stochastic && cv.primitive;

  if (inst.price) {
    out << "price.min_eigenvalue = " << inst.price->min_eigenvalue << '\n'
        << "price.positive_semidefinite = "
        << (inst.price->positive_semidefinite ? "true" : "false") << '\n';
    ok = ok && inst.price->positive_semidefinite;
  }

  MonotonicityOptions mo;
  mo.samples = cfg.monotonicity_samples;
  mo.seed = cfg.seed;
  const double alpha_hat =
      estimate_monotonicity(game, inst.comm, Rounds(cfg.solver.nu), mo, cfg.solver.mode);
  out << "mode = " << mode_name(cfg.solver.mode) << '\n'
      << "monotonicity.alpha_hat = " << alpha_hat << '\n';
  ok = ok && alpha_hat > 0.0;

  try {
    cournot::CournotConstants k = cournot::cournot_constants(inst.cournot, inst.comm, cfg.solver.nu);
    const double tau_max = tau_max_for(k.alpha, k.lipschitz, k.norm_A);
    out << "constants.alpha = " << k.alpha << '\n'
        << "constants.lipschitz = " << k.lipschitz << '\n'
        << "constants.norm_A = " << k.norm_A << '\n'
        << "tau_max = " << tau_max << '\n'
        << "tau = " << cfg.solver.tau << '\n'
        << "tau_within_bound = " << (cfg.solver.tau < tau_max ? "true" : "false") << '\n';
  } catch (const Unsupported& e) {
    out << "constants = unavailable (" << e.what() << ")\n";
  }
  out << "valid = " << (ok ? "true" : "false") << '\n';
  return ok ? kExitOk : kExitValidation;
}

int cmd_solve(const ExperimentConfig& cfg, std::ostream& log) {
  Instance inst = build_instance(cfg);
  const GameSpec& game = inst.cournot.game;
  TraceRecorder recorder(game, cfg.solver.record_every);
  EquilibriumReport rep;
  try {
    rep = run_distributed(game, inst.comm, cfg.solver, std::nullopt, recorder.observer());
  } catch (const std::exception& e) {
    auto trace = open_output(cfg, "trace.csv");
    write_trace_csv(trace, recorder.rows());
    log << "solve failed: " << e.what() << '\n';
    return kExitRuntime;
  }

  {
    auto out = open_output(cfg, "equilibrium.csv");
    write_profile_csv(out, rep.profile);
  }
  {
    auto out = open_output(cfg, "sales.csv");
    write_sales_csv(out, inst, rep.profile);
  }
  {
    auto out = open_output(cfg, "trace.csv");
    write_trace_csv(out, rep.trace);
  }
  {
    auto out = open_output(cfg, "quality.txt");
    out << "converged = " << (rep.converged ? "true" : "false") << '\n'
        << "iterations = " << rep.iterations << '\n'
        << "last_delta = " << rep.last_delta << '\n'
        << "coupling_residual = " << coupling_violation(game, rep.profile) << '\n';
    if (cfg.quality.compute) write_quality(out, cfg, evaluate_quality(inst, cfg, rep.profile));
  }
  log << (rep.converged ? "converged" : "not converged") << " after " << rep.iterations
      << " iterations; results in " << cfg.output_dir.string() << '\n';
  return rep.converged ? kExitOk : kExitRuntime;
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.sweep.empty()) throw ConfigError("sweep.nu: list is empty");
  Instance inst = build_instance(cfg);
  const GameSpec& game = inst.cournot.game;

  SolverConfig ref_cfg = cfg.solver;
  ref_cfg.nu = 1;
  EquilibriumReport ref = run_distributed(game, CommMatrix::uniform(game.agents()), ref_cfg);
  if (!ref.converged) {
    log << "reference solve did not converge after " << ref.iterations << " iterations\n";
    return kExitRuntime;
  }
  {
    auto out = open_output(cfg, "reference.csv");
    write_profile_csv(out, ref.profile);
  }
  const Eigen::VectorXd ref_x = ref.profile.stacked();

  auto out = open_output(cfg, "sweep.csv");
  out << "nu,eps_rel,distance,iterations,converged,status\n";
  int failures = 0;
  for (int nu : cfg.sweep) {
    SolverConfig sc = cfg.solver;
    sc.nu = nu;
    ExperimentConfig point = cfg;
    point.solver.nu = nu;
    try {
      EquilibriumReport rep = run_distributed(game, inst.comm, sc);
      const double dist = (rep.profile.stacked() - ref_x).norm();
      QualitySummary q = evaluate_quality(inst, point, rep.profile);
      out << nu << ',' << q.report.eps_rel << ',' << dist << ',' << rep.iterations << ','
          << (rep.converged ? "true" : "false") << ',' << (rep.converged ? "ok" : "max_iter")
          << '\n';
      if (!rep.converged) ++failures;
    } catch (const std::exception& e) {
      std::string what = e.what();
      for (char& c : what) {
        if (c == ',' || c == '\n') c = ';';
      }
      out << nu << ",nan,nan,0,false," << what << '\n';
      ++failures;
    }
    out.flush();
    log << "nu = " << nu << " done\n";
  }
  return failures == 0 ? kExitOk : kExitRuntime;
}

int cmd_epsilon(const ExperimentConfig& cfg, const std::filesystem::path& profile_path,
                std::ostream& log) {
  Instance inst = build_instance(cfg);
  std::ifstream in(profile_path);
  if (!in) throw ConfigError("cannot open profile " + profile_path.string());
  StrategyProfile profile;
  try {
    profile = read_profile_csv(in, inst.cournot.game);
  } catch (const InvalidInput& e) {
    throw ConfigError(profile_path.string() + ": " + e.what());
  }
  QualitySummary q = evaluate_quality(inst, cfg, profile);
  auto out = open_output(cfg, "quality.txt");
  out << "coupling_residual = " << coupling_violation(inst.cournot.game, profile) << '\n';
  write_quality(out, cfg, q);
  log << "eps_rel = " << q.report.eps_rel << "\nvi_residual = " << q.vi_residual << '\n';
  return kExitOk;
}

}  // namespace aggnash::cli
