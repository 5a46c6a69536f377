#include "aggnash/solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "aggnash/errors.hpp"

namespace aggnash {

namespace {

constexpr double kInitialFeasibilityTol = 1e-8;

double max_abs(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Accumulates block differences under both norms.
struct DeltaAccumulator {
  double max_norm = 0.0;
  double squared = 0.0;

  void add(const Eigen::VectorXd& diff) {
    max_norm = std::max(max_norm, max_abs(diff));
    squared += diff.squaredNorm();
  }
  double in(StopNorm norm) const {
    return norm == StopNorm::Max ? max_norm : std::sqrt(squared);
  }
};

InitialPoint checked_initial_point(const GameSpec& game,
                                   std::optional<InitialPoint> init) {
  InitialPoint p = init ? std::move(*init) : default_initial_point(game);
  game.check_profile(p.x);
  if (static_cast<int>(p.lambda.size()) != game.agents()) {
    throw InvalidInput("initial dual needs one vector per agent");
  }
  for (int i = 0; i < game.agents(); ++i) {
    if (p.lambda[i].size() != game.coupling_rows()) {
      throw InvalidInput("initial dual of agent " + std::to_string(i) +
                         " has the wrong dimension");
    }
    if (p.lambda[i].size() > 0 && p.lambda[i].minCoeff() < 0.0) {
      throw InvalidInput("initial dual of agent " + std::to_string(i) +
                         " is negative");
    }
    if (!game.agent(i).local_set.contains(p.x[i], kInitialFeasibilityTol)) {
      throw InvalidInput("initial strategy of agent " + std::to_string(i) +
                         " lies outside its local set");
    }
  }
  return p;
}

void check_comm(const GameSpec& game, const CommMatrix& comm) {
  if (comm.size() != game.agents()) {
    throw InvalidInput("communication matrix has " +
                       std::to_string(comm.size()) + " agents, game has " +
                       std::to_string(game.agents()));
  }
}

void check_finite(const Eigen::VectorXd& v, long iteration, int agent,
                  const char* what) {
  if (!v.allFinite()) {
    throw NumericalDivergence(std::string("non-finite ") + what +
                                  " at iteration " + std::to_string(iteration) +
                                  ", agent " + std::to_string(agent),
                              iteration, agent);
  }
}

// Records trace rows and evaluates the stopping rule shared by both paths.
class Progress {
 public:
  Progress(const GameSpec& game, const SolverConfig& config,
           EquilibriumReport& report)
      : game_(game), config_(config), report_(report) {}

  // Returns true when the iteration should stop.
  bool step(long k, const DeltaAccumulator& dx, const DeltaAccumulator& dl,
            const StrategyProfile& x) {
    const double delta =
        std::max(dx.in(config_.stop_norm), dl.in(config_.stop_norm));
    report_.iterations = k;
    report_.last_delta = delta;
    report_.converged = delta < config_.stop_tol;
    const bool done = report_.converged || k >= config_.max_iter;
    if (done || k % config_.record_every == 0) {
      report_.trace.push_back(
          {k, dx.max_norm, dl.max_norm, coupling_violation(game_, x)});
    }
    return done;
  }

 private:
  const GameSpec& game_;
  const SolverConfig& config_;
  EquilibriumReport& report_;
};

}  // namespace

void SolverConfig::validate() const {
  if (!(tau > 0.0)) throw InvalidInput("tau must be > 0");
  if (nu < 1) throw InvalidInput("nu must be >= 1");
  if (!(stop_tol > 0.0)) throw InvalidInput("stop_tol must be > 0");
  if (max_iter < 1) throw InvalidInput("max_iter must be >= 1");
  if (record_every < 1) throw InvalidInput("record_every must be >= 1");
  if (!(projection_tol > 0.0)) throw InvalidInput("projection_tol must be > 0");
}

InitialPoint default_initial_point(const GameSpec& game) {
  InitialPoint p;
  std::vector<Eigen::VectorXd> blocks;
  for (int i = 0; i < game.agents(); ++i) {
    const auto& set = game.agent(i).local_set;
    blocks.push_back(project_polyhedron(Eigen::VectorXd::Zero(set.dim()), set,
                                        {.tol = 1e-13}));
    p.lambda.push_back(Eigen::VectorXd::Zero(game.coupling_rows()));
  }
  p.x = StrategyProfile(std::move(blocks));
  return p;
}

StepSizeBound step_size_bound(double alpha, double lipschitz, double norm_A) {
  if (!(alpha > 0.0) || !(lipschitz > 0.0) || !(norm_A > 0.0)) {
    throw InvalidInput("step_size_bound needs alpha, L and |A| all > 0");
  }
  const double l2 = lipschitz * lipschitz;
  const double a2 = norm_A * norm_A;
  // l2 dominates for realistic inputs; this form avoids cancellation.
  const double disc = 4.0 * alpha * alpha * a2;
  const double numer = disc / (l2 + std::sqrt(l2 * l2 + disc));
  return {numer / (2.0 * alpha * a2), 1.0 / norm_A};
}

double coupling_violation(const GameSpec& game, const StrategyProfile& x) {
  if (game.coupling_rows() == 0) return 0.0;
  const Eigen::VectorXd slack =
      game.coupling_matrix() * global_aggregate(game, x) - game.coupling_bound();
  return std::max(0.0, slack.maxCoeff());
}

EquilibriumReport run_distributed(const GameSpec& game, const CommMatrix& comm,
                                  const SolverConfig& config,
                                  std::optional<InitialPoint> init,
                                  const IterationObserver& observer) {
  config.validate();
  check_comm(game, comm);
  InitialPoint start = checked_initial_point(game, std::move(init));

  const int n = game.agents();
  const int nu = config.nu;
  const double tau = config.tau;
  const Eigen::MatrixXd& a_hat = game.coupling_matrix();
  const Eigen::VectorXd& b_hat = game.coupling_bound();
  const Eigen::MatrixXd& t_nu = comm.power(nu);
  const ProjectionOptions popts{.tol = config.projection_tol, .method = config.projection_method};

  std::vector<AgentState> agents(n);
  std::vector<Eigen::VectorXd> images(n);
  for (int i = 0; i < n; ++i) {
    agents[i].x = start.x[i];
    agents[i].lambda = start.lambda[i];
    images[i] = game.image(i, agents[i].x);
  }
  {
    const auto mixed = consensus_rounds(comm, images, nu, Direction::In);
    for (int i = 0; i < n; ++i) agents[i].sigma = mixed[i];
  }

  std::vector<DykstraState> warm(n);
  std::vector<Eigen::VectorXd> lambdas(n), next_x(n), next_lambda(n);
  EquilibriumReport report;
  Progress progress(game, config, report);

  for (long k = 1;; ++k) {
    // Dual communication: mu^i <- sum_j [T^nu]_ji lambda^j.
    for (int i = 0; i < n; ++i) lambdas[i] = agents[i].lambda;
    {
      const auto mixed = consensus_rounds(comm, lambdas, nu, Direction::Out);
      for (int i = 0; i < n; ++i) agents[i].mu = mixed[i];
    }

    // Primal update.
    for (int i = 0; i < n; ++i) {
      const AgentSpec& spec = game.agent(i);
      const AgentState& s = agents[i];
      Eigen::VectorXd g = spec.cost->grad_own(s.x, s.sigma);
      if (config.mode == Mode::Nash) {
        g.noalias() += t_nu(i, i) * (spec.selection.transpose() *
                                     spec.cost->grad_aggregate(s.x, s.sigma));
      }
      if (a_hat.rows() > 0) {
        g.noalias() += spec.selection.transpose() * (a_hat.transpose() * s.mu);
      }
      const Eigen::VectorXd trial = s.x - tau * g;
      check_finite(trial, k, i, "primal step");
      next_x[i] = project_polyhedron(trial, spec.local_set, popts, &warm[i]);
    }

    // Primal communication.
    for (int i = 0; i < n; ++i) images[i] = game.image(i, next_x[i]);
    const auto next_sigma = consensus_rounds(comm, images, nu, Direction::In);

    // Dual update.
    for (int i = 0; i < n; ++i) {
      const AgentState& s = agents[i];
      next_lambda[i] = project_nonneg(
          s.lambda - tau * (b_hat - 2.0 * (a_hat * next_sigma[i]) +
                            a_hat * s.sigma));
      check_finite(next_lambda[i], k, i, "dual update");
    }

    DeltaAccumulator dx, dl;
    for (int i = 0; i < n; ++i) {
      dx.add(next_x[i] - agents[i].x);
      dl.add(next_lambda[i] - agents[i].lambda);
      agents[i].x = next_x[i];
      agents[i].lambda = next_lambda[i];
      agents[i].sigma = next_sigma[i];
    }

    StrategyProfile profile(next_x);
    if (observer) observer(k, profile, next_lambda);
    if (progress.step(k, dx, dl, profile)) {
      report.profile = std::move(profile);
      report.duals = next_lambda;
      return report;
    }
  }
}

Eigen::MatrixXd stacked_coupling_matrix(const GameSpec& game,
                                        const CommMatrix& comm, Rounds rounds) {
  check_comm(game, comm);
  const int n = game.agents();
  const Eigen::MatrixXd& a_hat = game.coupling_matrix();
  const Eigen::Index m = a_hat.rows();
  const Eigen::MatrixXd weights =
      rounds.is_infinite() ? Eigen::MatrixXd::Constant(n, n, 1.0 / n)
                           : comm.power(rounds.count());

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n * m, game.total_dim());
  Eigen::Index col = 0;
  for (int j = 0; j < n; ++j) {
    const Eigen::MatrixXd ah = a_hat * game.agent(j).selection;
    for (int i = 0; i < n; ++i) {
      if (weights(i, j) != 0.0) {
        out.block(i * m, col, m, ah.cols()) = weights(i, j) * ah;
      }
    }
    col += ah.cols();
  }
  return out;
}

Eigen::VectorXd stacked_coupling_bound(const GameSpec& game,
                                       const CommMatrix& comm, Rounds rounds) {
  check_comm(game, comm);
  const int n = game.agents();
  const Eigen::MatrixXd& a_hat = game.coupling_matrix();
  const Eigen::Index m = a_hat.rows();
  const Eigen::MatrixXd weights =
      rounds.is_infinite() ? Eigen::MatrixXd::Constant(n, n, 1.0 / n)
                           : comm.power(rounds.count());

  Eigen::VectorXd out(n * m);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd mixed_offset = Eigen::VectorXd::Zero(game.aggregate_dim());
    for (int j = 0; j < n; ++j) {
      mixed_offset += weights(i, j) * game.agent(j).offset;
    }
    out.segment(i * m, m) = game.coupling_bound() - a_hat * mixed_offset;
  }
  return out;
}

EquilibriumReport run_compact(const GameSpec& game, const CommMatrix& comm,
                              const SolverConfig& config,
                              std::optional<InitialPoint> init,
                              const IterationObserver& observer) {
  config.validate();
  check_comm(game, comm);
  InitialPoint start = checked_initial_point(game, std::move(init));

  const int n = game.agents();
  const auto dims = game.strategy_dims();
  const Eigen::Index m = game.coupling_rows();
  const Rounds rounds(config.nu);
  const Eigen::MatrixXd a_nu = stacked_coupling_matrix(game, comm, rounds);
  const Eigen::VectorXd b = stacked_coupling_bound(game, comm, rounds);
  const ProjectionOptions popts{.tol = config.projection_tol, .method = config.projection_method};

  Eigen::VectorXd x = start.x.stacked();
  Eigen::VectorXd lambda(n * m);
  for (int i = 0; i < n; ++i) lambda.segment(i * m, m) = start.lambda[i];

  std::vector<DykstraState> warm(n);
  EquilibriumReport report;
  Progress progress(game, config, report);

  for (long k = 1;; ++k) {
    const StrategyProfile current = StrategyProfile::from_stacked(x, dims);
    const Eigen::VectorXd f =
        eval_F(game, comm, rounds, current, config.mode).stacked();
    const Eigen::VectorXd trial = x - config.tau * (f + a_nu.transpose() * lambda);

    Eigen::VectorXd x_next(x.size());
    Eigen::Index offset = 0;
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd block = trial.segment(offset, dims[i]);
      check_finite(block, k, i, "primal step");
      x_next.segment(offset, dims[i]) = project_polyhedron(
          block, game.agent(i).local_set, popts, &warm[i]);
      offset += dims[i];
    }
    const Eigen::VectorXd lambda_next = project_nonneg(
        lambda - config.tau * (b - 2.0 * (a_nu * x_next) + a_nu * x));
    for (int i = 0; i < n; ++i) {
      check_finite(lambda_next.segment(i * m, m), k, i, "dual update");
    }

    DeltaAccumulator dx, dl;
    dx.add(x_next - x);
    dl.add(lambda_next - lambda);
    x = x_next;
    lambda = lambda_next;

    StrategyProfile profile = StrategyProfile::from_stacked(x, dims);
    std::vector<Eigen::VectorXd> duals(n);
    for (int i = 0; i < n; ++i) duals[i] = lambda.segment(i * m, m);
    if (observer) observer(k, profile, duals);
    if (progress.step(k, dx, dl, profile)) {
      report.profile = std::move(profile);
      report.duals = std::move(duals);
      return report;
    }
  }
}

FixedPointResidual fixed_point_residual(
    const GameSpec& game, const CommMatrix& comm, const SolverConfig& config,
    const StrategyProfile& x, const std::vector<Eigen::VectorXd>& lambda) {
  game.check_profile(x);
  const int n = game.agents();
  const Eigen::Index m = game.coupling_rows();
  if (static_cast<int>(lambda.size()) != n) {
    throw InvalidInput("fixed_point_residual needs one dual per agent");
  }
  const Rounds rounds(config.nu);
  const Eigen::MatrixXd a_nu = stacked_coupling_matrix(game, comm, rounds);
  const Eigen::VectorXd b = stacked_coupling_bound(game, comm, rounds);
  Eigen::VectorXd lam(n * m);
  for (int i = 0; i < n; ++i) lam.segment(i * m, m) = lambda[i];

  const Eigen::VectorXd xs = x.stacked();
  const Eigen::VectorXd f = eval_F(game, comm, rounds, x, config.mode).stacked();
  const Eigen::VectorXd trial = xs - config.tau * (f + a_nu.transpose() * lam);
  const auto dims = game.strategy_dims();
  Eigen::VectorXd projected(xs.size());
  Eigen::Index offset = 0;
  for (int i = 0; i < n; ++i) {
    projected.segment(offset, dims[i]) =
        project_polyhedron(trial.segment(offset, dims[i]),
                           game.agent(i).local_set,
                           {.tol = config.projection_tol, .method = config.projection_method});
    offset += dims[i];
  }
  const Eigen::VectorXd dual_step =
      project_nonneg(lam - config.tau * (b - a_nu * xs));
  return {max_abs(xs - projected), max_abs(lam - dual_step)};
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iter,dx_inf,dlambda_inf,feas_residual\n";
  const auto old_precision = out.precision(17);
  for (const auto& row : trace) {
    out << row.iteration << ',' << row.dx << ',' << row.dlambda << ','
        << row.feasibility << '\n';
  }
  out.precision(old_precision);
}

}  // namespace aggnash
