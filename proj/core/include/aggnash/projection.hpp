#pragma once

#include <vector>

#include <Eigen/Dense>

namespace aggnash {

/// Compact convex set {x : lower <= x <= upper, C x <= c}.
///
/// Construction certifies non-emptiness by searching for a feasible point
/// from the box center; an empty intersection raises InvalidInput.
class LocalSet {
 public:
  LocalSet() = default;
  LocalSet(Eigen::VectorXd lower, Eigen::VectorXd upper);
  LocalSet(Eigen::VectorXd lower, Eigen::VectorXd upper,
           Eigen::MatrixXd constraints, Eigen::VectorXd bounds);

  Eigen::Index dim() const noexcept { return lower_.size(); }
  const Eigen::VectorXd& lower() const noexcept { return lower_; }
  const Eigen::VectorXd& upper() const noexcept { return upper_; }
  const Eigen::MatrixXd& constraints() const noexcept { return constraints_; }
  const Eigen::VectorXd& bounds() const noexcept { return bounds_; }
  Eigen::Index halfspace_count() const noexcept { return constraints_.rows(); }

  /// A point of the set found at construction.
  const Eigen::VectorXd& witness() const noexcept { return witness_; }

  /// Largest violation over box and halfspace constraints (0 inside).
  double violation(const Eigen::VectorXd& x) const;
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    return violation(x) <= tol;
  }

  /// The same set with extra halfspaces appended.
  LocalSet with_halfspaces(const Eigen::MatrixXd& constraints,
                           const Eigen::VectorXd& bounds) const;

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  Eigen::MatrixXd constraints_;
  Eigen::VectorXd bounds_;
  Eigen::VectorXd witness_;
};

/// Componentwise median(lower, x, upper). Throws InvalidInput if lower > upper.
Eigen::VectorXd project_box(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper);

/// Componentwise max(x, 0).
Eigen::VectorXd project_nonneg(const Eigen::VectorXd& x);

enum class ProjectionMethod {
  /// Alternating projections with Dykstra corrections; no linear algebra.
  Dykstra,
  /// Projected Newton ascent on the halfspace multipliers, finishing with
  /// Dykstra if the line search stalls. Much faster when many halfspaces
  /// are active.
  DualNewton,
};

struct ProjectionOptions {
  double tol = 1e-10;
  long max_sweeps = 100000;
  ProjectionMethod method = ProjectionMethod::Dykstra;
  int max_newton_steps = 200;
};

/// Dykstra correction terms, one per constituent set (box first, then each
/// halfspace). At the solution the halfspace terms are the KKT multipliers,
/// so both methods share this state. Passing the state of a previous call
/// warm-starts the iteration; the answer does not depend on it.
struct DykstraState {
  Eigen::VectorXd box;
  std::vector<double> halfspace;  ///< multiple of the row normal, >= 0
};

/// Euclidean projection onto a LocalSet. Returns as soon as the box
/// projection already satisfies every halfspace. Throws NonConvergence
/// (carrying the last change) after max_sweeps Dykstra sweeps.
Eigen::VectorXd project_polyhedron(const Eigen::VectorXd& x,
                                   const LocalSet& set,
                                   const ProjectionOptions& options = {},
                                   DykstraState* warm = nullptr);

}  // namespace aggnash
