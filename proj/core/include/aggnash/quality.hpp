#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "aggnash/comm.hpp"
#include "aggnash/game.hpp"

namespace aggnash {

enum class Coupling { With, Without };

struct BestResponseOptions {
  Coupling coupling = Coupling::With;
  /// Stop when ||z - Pi[z - step * grad]||_inf < tol.
  double tol = 1e-8;
  long max_iter = 1'000'000;
  /// Gradient-difference pairs used to estimate the Lipschitz constant.
  int lipschitz_samples = 64;
  double safety = 0.9;
  std::uint64_t seed = 7;
  /// Loosen each coupling row just enough for the agent's current strategy
  /// to stay admissible. Needed when the profile itself violates the
  /// coupling constraint by a small amount.
  bool relax_to_current = false;
  double projection_tol = 1e-12;
};

struct BestResponse {
  Eigen::VectorXd strategy;
  double cost = 0.0;
  long iterations = 0;
  double residual = 0.0;
  double step = 0.0;
};

/// Cost of agent i against the exact average when it plays z and everyone
/// else keeps their strategy from `profile`.
double unilateral_cost(const GameSpec& game, int agent,
                       const StrategyProfile& profile,
                       const Eigen::VectorXd& z);

/// Agent i's feasible set with the others fixed: its local set, plus (with
/// coupling) A H^i z / N <= b - A (h^i / N + sum_{j != i} image_j / N).
LocalSet unilateral_set(const GameSpec& game, int agent,
                        const StrategyProfile& profile,
                        const BestResponseOptions& options);

/// Minimizes unilateral_cost over unilateral_set by projected gradient with
/// step safety / L_hat. Throws NonConvergence at the iteration cap.
BestResponse best_response(const GameSpec& game, int agent,
                           const StrategyProfile& profile,
                           const BestResponseOptions& options = {});

struct FeasibilityReport {
  double coupling_violation = 0.0;
  double local_violation = 0.0;
  bool feasible = false;
};

/// Violations of A sigma_inf(x) <= b and of every local set.
FeasibilityReport feasibility_check(const GameSpec& game,
                                    const StrategyProfile& profile,
                                    double tol = 1e-6);

struct AgentImprovement {
  double current_cost = 0.0;
  double best_cost = 0.0;
  double improvement = 0.0;  ///< current - best, floored at 0
  double relative = 0.0;     ///< improvement / |current|
};

struct QualityReport {
  FeasibilityReport feasibility;
  double eps_abs = 0.0;
  double eps_rel = 0.0;
  std::vector<AgentImprovement> per_agent;
};

struct EpsilonOptions {
  BestResponseOptions best_response{.coupling = Coupling::With};
  /// Profiles violating the coupling constraint by more than this are
  /// rejected unless best_response.relax_to_current is set.
  double feasibility_tol = 1e-6;
};

/// Largest absolute and relative unilateral improvement against the exact
/// average. Throws InvalidInput for an infeasible profile.
QualityReport epsilon_nash(const GameSpec& game, const StrategyProfile& profile,
                           const EpsilonOptions& options = {});

struct ResidualOptions {
  double projection_tol = 1e-10;
  long max_sweeps = 1'000'000;
};

/// Natural-map residual ||x - Pi_Q[x - F(x)]||_inf for
/// Q = X cap {A x <= b}, using the operator and coupling of the game with
/// the given number of rounds.
double vi_residual(const GameSpec& game, const CommMatrix& comm, Rounds rounds,
                   const StrategyProfile& profile,
                   const ResidualOptions& options = {}, Mode mode = Mode::Nash);

/// Flat "key = value" lines.
void write_quality_report(std::ostream& out, const QualityReport& report);

}  // namespace aggnash
