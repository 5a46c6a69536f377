#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "aggnash/comm.hpp"
#include "aggnash/game.hpp"
#include "aggnash/projection.hpp"

namespace aggnash {

/// Norm applied to the stacked iterate changes in the stopping test.
enum class StopNorm {
  Max,        ///< ||.||_inf
  Euclidean,  ///< ||.||_2 of the stacked vector
};

struct SolverConfig {
  double tau = 0.005;
  int nu = 10;
  double stop_tol = 1e-4;
  StopNorm stop_norm = StopNorm::Max;
  long max_iter = 1'000'000;
  Mode mode = Mode::Nash;
  /// Keep every record_every-th trace row (the final row is always kept).
  long record_every = 10;
  /// Tolerance and method of the per-agent projections.
  double projection_tol = 1e-12;
  ProjectionMethod projection_method = ProjectionMethod::DualNewton;

  /// Throws InvalidInput when a field is out of range.
  void validate() const;
};

/// Variables held by one agent during the distributed iteration.
struct AgentState {
  Eigen::VectorXd x;       ///< strategy
  Eigen::VectorXd lambda;  ///< dual for the coupling constraint, >= 0
  Eigen::VectorXd sigma;   ///< nu-round mix of the primal images
  Eigen::VectorXd mu;      ///< nu-round mix of the duals
};

struct TraceRow {
  long iteration = 0;
  double dx = 0.0;       ///< max-norm change of x
  double dlambda = 0.0;  ///< max-norm change of lambda
  double feasibility = 0.0;
};

struct EquilibriumReport {
  StrategyProfile profile;
  std::vector<Eigen::VectorXd> duals;
  long iterations = 0;
  std::vector<TraceRow> trace;
  bool converged = false;
  /// Stop-norm change at the last iteration.
  double last_delta = 0.0;
};

struct InitialPoint {
  StrategyProfile x;
  std::vector<Eigen::VectorXd> lambda;
};

/// x_0 = projection of 0 onto each local set, lambda_0 = 0.
InitialPoint default_initial_point(const GameSpec& game);

/// Called after each iteration k >= 1 with the new primal and dual iterates.
using IterationObserver = std::function<void(
    long iteration, const StrategyProfile& x,
    const std::vector<Eigen::VectorXd>& lambda)>;

struct StepSizeBound {
  double bound;        ///< (-L^2 + sqrt(L^4 + 4 a^2 |A|^2)) / (2 a |A|^2)
  double inverse_norm; ///< 1 / |A|
  double tau_max() const { return bound < inverse_norm ? bound : inverse_norm; }
};

/// Step size under which the primal-dual iteration provably converges for
/// an alpha-strongly monotone, L-Lipschitz operator. All inputs must be > 0.
StepSizeBound step_size_bound(double alpha, double lipschitz, double norm_A);

/// Agent-by-agent execution in four barrier-separated phases: dual
/// communication, primal update, primal communication, dual update. Within a
/// phase every agent reads only values produced by earlier phases.
EquilibriumReport run_distributed(const GameSpec& game, const CommMatrix& comm,
                                  const SolverConfig& config,
                                  std::optional<InitialPoint> init = {},
                                  const IterationObserver& observer = {});

/// The same iteration written with the stacked operators F_nu and
/// A_nu = (T^nu kron A) blkdiag(H^i).
EquilibriumReport run_compact(const GameSpec& game, const CommMatrix& comm,
                              const SolverConfig& config,
                              std::optional<InitialPoint> init = {},
                              const IterationObserver& observer = {});

/// A_nu for finite rounds, A_inf = ((1/N) 1 1^T kron A) H_blkd otherwise.
Eigen::MatrixXd stacked_coupling_matrix(const GameSpec& game,
                                        const CommMatrix& comm, Rounds rounds);

/// Right-hand side b = 1_N kron b_hat, shifted by the offsets' contribution.
Eigen::VectorXd stacked_coupling_bound(const GameSpec& game,
                                       const CommMatrix& comm, Rounds rounds);

struct FixedPointResidual {
  double primal;  ///< ||x - Pi_X[x - tau (F(x) + A^T lambda)]||_inf
  double dual;    ///< ||lambda - Pi_+[lambda - tau (b - A x)]||_inf
};

/// Residual of the iteration's fixed-point equations at (x, lambda).
FixedPointResidual fixed_point_residual(const GameSpec& game,
                                        const CommMatrix& comm,
                                        const SolverConfig& config,
                                        const StrategyProfile& x,
                                        const std::vector<Eigen::VectorXd>& lambda);

/// Max violation of A sigma_inf(x) <= b (0 when satisfied).
double coupling_violation(const GameSpec& game, const StrategyProfile& x);

/// CSV with header iter,dx_inf,dlambda_inf,feas_residual.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace aggnash
