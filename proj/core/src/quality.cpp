#include "aggnash/quality.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <string>

#include "aggnash/errors.hpp"
#include "aggnash/solver.hpp"

namespace aggnash {

namespace {

// Aggregate seen by agent i when it plays z and the others keep theirs.
class UnilateralObjective {
 public:
  UnilateralObjective(const GameSpec& game, int agent,
                      const StrategyProfile& profile)
      : game_(game), agent_(agent) {
    game.check_profile(profile);
    if (agent < 0 || agent >= game.agents()) {
      throw InvalidInput("agent index " + std::to_string(agent) +
                         " out of range");
    }
    const int n = game.agents();
    others_ = Eigen::VectorXd::Zero(game.aggregate_dim());
    for (int j = 0; j < n; ++j) {
      if (j != agent) others_ += game.image(j, profile[j]);
    }
    others_ /= n;
  }

  Eigen::VectorXd aggregate(const Eigen::VectorXd& z) const {
    return others_ + game_.image(agent_, z) / game_.agents();
  }
  double value(const Eigen::VectorXd& z) const {
    return game_.agent(agent_).cost->value(z, aggregate(z));
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& z) const {
    const auto& spec = game_.agent(agent_);
    const Eigen::VectorXd s = aggregate(z);
    return spec.cost->grad_own(z, s) +
           spec.selection.transpose() * spec.cost->grad_aggregate(z, s) /
               game_.agents();
  }
  const Eigen::VectorXd& others() const { return others_; }

 private:
  const GameSpec& game_;
  int agent_;
  Eigen::VectorXd others_;
};

double estimate_lipschitz(const UnilateralObjective& f, const LocalSet& set,
                          const Eigen::VectorXd& anchor,
                          const BestResponseOptions& options) {
  std::mt19937_64 rng(options.seed);
  const Eigen::Index dim = set.dim();
  auto draw = [&] {
    Eigen::VectorXd p(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      p[k] = set.lower()[k] + uniform01(rng) * (set.upper()[k] - set.lower()[k]);
    }
    return p;
  };
  const Eigen::VectorXd width = set.upper() - set.lower();

  double lip = 0.0;
  auto probe = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double dist = (a - b).norm();
    if (dist > 0.0) {
      lip = std::max(lip, (f.gradient(a) - f.gradient(b)).norm() / dist);
    }
  };
  probe(set.lower(), set.upper());
  for (int s = 0; s < options.lipschitz_samples; ++s) {
    const Eigen::VectorXd a = draw();
    probe(a, draw());
    // Short pairs near the bounds and near the anchor catch local curvature.
    Eigen::VectorXd near_lower = set.lower() + 1e-3 * width.cwiseProduct(
        Eigen::VectorXd::NullaryExpr(dim, [&] { return uniform01(rng); }));
    probe(set.lower(), near_lower);
    probe(anchor, set.lower().cwiseMax(set.upper().cwiseMin(
                      anchor + 1e-3 * (a - anchor))));
  }
  if (!(lip > 0.0)) lip = 1.0;
  return lip;
}

}  // namespace

double unilateral_cost(const GameSpec& game, int agent,
                       const StrategyProfile& profile,
                       const Eigen::VectorXd& z) {
  return UnilateralObjective(game, agent, profile).value(z);
}

LocalSet unilateral_set(const GameSpec& game, int agent,
                        const StrategyProfile& profile,
                        const BestResponseOptions& options) {
  const LocalSet& local = game.agent(agent).local_set;
  if (options.coupling == Coupling::Without || game.coupling_rows() == 0) {
    return local;
  }
  const UnilateralObjective f(game, agent, profile);
  const auto& spec = game.agent(agent);
  const int n = game.agents();
  const Eigen::MatrixXd& a_hat = game.coupling_matrix();
  const Eigen::MatrixXd rows = a_hat * spec.selection / n;
  Eigen::VectorXd rhs =
      game.coupling_bound() - a_hat * (f.others() + spec.offset / n);
  if (options.relax_to_current) {
    rhs = rhs.cwiseMax(rows * profile[agent]);
  }
  return local.with_halfspaces(rows, rhs);
}

BestResponse best_response(const GameSpec& game, int agent,
                           const StrategyProfile& profile,
                           const BestResponseOptions& options) {
  if (!(options.tol > 0.0) || options.max_iter < 1 || !(options.safety > 0.0)) {
    throw InvalidInput("best_response options out of range");
  }
  const UnilateralObjective f(game, agent, profile);
  const LocalSet set = unilateral_set(game, agent, profile, options);
  const ProjectionOptions popts{.tol = options.projection_tol,
                                   .method = ProjectionMethod::DualNewton};

  DykstraState warm;
  Eigen::VectorXd z = project_polyhedron(profile[agent], set, popts, &warm);
  double lip = estimate_lipschitz(f, set, z, options);
  double value = f.value(z);

  BestResponse out;
  for (long it = 1; it <= options.max_iter; ++it) {
    const double step = options.safety / lip;
    const Eigen::VectorXd next =
        project_polyhedron(z - step * f.gradient(z), set, popts, &warm);
    const double next_value = f.value(next);
    // An ascent step means L_hat underestimated the curvature here.
    if (next_value > value + 1e-12 * std::max(1.0, std::abs(value))) {
      lip *= 2.0;
      continue;
    }
    const double residual = (next - z).cwiseAbs().maxCoeff();
    z = next;
    value = next_value;
    if (residual < options.tol) {
      out.strategy = z;
      out.cost = value;
      out.iterations = it;
      out.residual = residual;
      out.step = step;
      return out;
    }
    out.residual = residual;
  }
  throw NonConvergence("best response of agent " + std::to_string(agent) +
                           " did not converge",
                       out.residual);
}

FeasibilityReport feasibility_check(const GameSpec& game,
                                    const StrategyProfile& profile,
                                    double tol) {
  game.check_profile(profile);
  FeasibilityReport report;
  report.coupling_violation = coupling_violation(game, profile);
  for (int i = 0; i < game.agents(); ++i) {
    report.local_violation = std::max(
        report.local_violation, game.agent(i).local_set.violation(profile[i]));
  }
  report.feasible =
      report.coupling_violation <= tol && report.local_violation <= tol;
  return report;
}

QualityReport epsilon_nash(const GameSpec& game, const StrategyProfile& profile,
                           const EpsilonOptions& options) {
  QualityReport report;
  report.feasibility =
      feasibility_check(game, profile, options.feasibility_tol);
  const bool coupling_ok =
      report.feasibility.coupling_violation <= options.feasibility_tol ||
      options.best_response.relax_to_current ||
      options.best_response.coupling == Coupling::Without;
  if (report.feasibility.local_violation > options.feasibility_tol ||
      !coupling_ok) {
    throw InvalidInput(
        "profile is not feasible (coupling violation " +
        std::to_string(report.feasibility.coupling_violation) +
        ", local violation " +
        std::to_string(report.feasibility.local_violation) +
        "); inspect it with feasibility_check");
  }

  const Eigen::VectorXd sigma = global_aggregate(game, profile);
  report.per_agent.resize(game.agents());
  for (int i = 0; i < game.agents(); ++i) {
    AgentImprovement& a = report.per_agent[i];
    a.current_cost = game.agent(i).cost->value(profile[i], sigma);
    BestResponse br;
    try {
      br = best_response(game, i, profile, options.best_response);
    } catch (const Error& e) {
      throw NonConvergence("epsilon_nash: agent " + std::to_string(i) + ": " +
                               e.what(),
                           0.0);
    }
    a.best_cost = br.cost;
    a.improvement = std::max(0.0, a.current_cost - a.best_cost);
    a.relative = a.current_cost == 0.0 ? 0.0
                                       : a.improvement / std::abs(a.current_cost);
    report.eps_abs = std::max(report.eps_abs, a.improvement);
    report.eps_rel = std::max(report.eps_rel, a.relative);
  }
  return report;
}

double vi_residual(const GameSpec& game, const CommMatrix& comm, Rounds rounds,
                   const StrategyProfile& profile,
                   const ResidualOptions& options, Mode mode) {
  game.check_profile(profile);
  const int n = game.agents();
  const auto dims = game.strategy_dims();
  const Eigen::Index total = game.total_dim();

  Eigen::Index local_rows = 0;
  for (int i = 0; i < n; ++i) local_rows += game.agent(i).local_set.halfspace_count();
  const Eigen::MatrixXd a = stacked_coupling_matrix(game, comm, rounds);
  const Eigen::VectorXd b = stacked_coupling_bound(game, comm, rounds);

  Eigen::VectorXd lower(total), upper(total);
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(local_rows + a.rows(), total);
  Eigen::VectorXd rhs(local_rows + a.rows());
  Eigen::Index col = 0, row = 0;
  for (int i = 0; i < n; ++i) {
    const LocalSet& set = game.agent(i).local_set;
    lower.segment(col, dims[i]) = set.lower();
    upper.segment(col, dims[i]) = set.upper();
    const Eigen::Index h = set.halfspace_count();
    rows.block(row, col, h, dims[i]) = set.constraints();
    rhs.segment(row, h) = set.bounds();
    row += h;
    col += dims[i];
  }
  rows.bottomRows(a.rows()) = a;
  rhs.tail(a.rows()) = b;
  const LocalSet stacked_set(lower, upper, rows, rhs);

  const Eigen::VectorXd x = profile.stacked();
  const Eigen::VectorXd f = eval_F(game, comm, rounds, profile, mode).stacked();
  const Eigen::VectorXd projected = project_polyhedron(
      x - f, stacked_set,
      {.tol = options.projection_tol,
       .max_sweeps = options.max_sweeps,
       .method = ProjectionMethod::DualNewton});
  return (x - projected).cwiseAbs().maxCoeff();
}

void write_quality_report(std::ostream& out, const QualityReport& report) {
  const auto old_precision = out.precision(17);
  out << "feasible = " << (report.feasibility.feasible ? "true" : "false")
      << '\n'
      << "coupling_violation = " << report.feasibility.coupling_violation
      << '\n'
      << "local_violation = " << report.feasibility.local_violation << '\n'
      << "eps_abs = " << report.eps_abs << '\n'
      << "eps_rel = " << report.eps_rel << '\n';
  for (std::size_t i = 0; i < report.per_agent.size(); ++i) {
    const auto& a = report.per_agent[i];
    const std::string key = "agent." + std::to_string(i + 1) + ".";
    out << key << "current_cost = " << a.current_cost << '\n'
        << key << "best_cost = " << a.best_cost << '\n'
        << key << "improvement = " << a.improvement << '\n'
        << key << "relative = " << a.relative << '\n';
  }
  out.precision(old_precision);
}

}  // namespace aggnash
