#include "aggnash/projection.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "aggnash/errors.hpp"

namespace aggnash {

namespace {

constexpr double kFeasibleTolerance = 1e-9;
constexpr long kStallSweeps = 10000;
constexpr long kSearchSweeps = 100000;

void check_box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  if (lower.size() != upper.size()) {
    throw InvalidInput("box bounds differ in dimension");
  }
  for (Eigen::Index k = 0; k < lower.size(); ++k) {
    if (!(lower[k] <= upper[k])) {
      throw InvalidInput("box lower bound exceeds upper bound at component " +
                         std::to_string(k));
    }
  }
}

double halfspace_violation(const Eigen::MatrixXd& c, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& x) {
  if (c.rows() == 0) return 0.0;
  return std::max(0.0, (c * x - b).maxCoeff());
}

// Projects y onto {z : a.z <= bound}; returns the multiplier s >= 0 with
// result = y - s * a.
double halfspace_step(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                      double norm2, double bound, Eigen::VectorXd& y) {
  const double excess = a.dot(y) - bound;
  if (excess <= 0.0 || norm2 == 0.0) return 0.0;
  const double s = excess / norm2;
  y.noalias() -= s * a.transpose();
  return s;
}

// Projected Newton ascent on the dual of the projection problem,
//   q(mu) = min over the box of 1/2 |y - z|^2 + mu.(C y - c),  mu >= 0,
// whose inner minimizer is clip(z - C^T mu) and whose gradient is C y - c.
// Multipliers pinned at zero with a negative gradient are held fixed; the
// rest take a Newton step restricted to the free primal coordinates. Returns
// false if the arc search stalls or the step budget runs out.
bool dual_newton(const Eigen::VectorXd& z, const LocalSet& set,
                 const ProjectionOptions& options, DykstraState& state,
                 Eigen::VectorXd& out) {
  const Eigen::MatrixXd& c = set.constraints();
  const Eigen::VectorXd& b = set.bounds();
  const Eigen::Index m = c.rows();
  const Eigen::Index n = z.size();
  const Eigen::VectorXd row_norms = c.rowwise().squaredNorm();

  Eigen::VectorXd mu =
      Eigen::Map<const Eigen::VectorXd>(state.halfspace.data(), m).cwiseMax(0.0);
  Eigen::VectorXd w(n), x(n), g(m);
  auto evaluate = [&](const Eigen::VectorXd& dual, Eigen::VectorXd& wv,
                      Eigen::VectorXd& xv, Eigen::VectorXd& gv) {
    wv.noalias() = z - c.transpose() * dual;
    xv = wv.cwiseMax(set.lower()).cwiseMin(set.upper());
    gv.noalias() = c * xv - b;
    return 0.5 * (xv - z).squaredNorm() + dual.dot(gv);
  };
  double q = evaluate(mu, w, x, g);

  Eigen::VectorXd d(m), mu_next(m), w_next(n), x_next(n), g_next(m);
  std::vector<Eigen::Index> work, free_cols;
  for (int step = 0; step <= options.max_newton_steps; ++step) {
    const Eigen::VectorXd r = mu - (mu + g).cwiseMax(0.0);
    const double residual = r.cwiseAbs().maxCoeff();
    if (residual <= options.tol) {
      state.halfspace.assign(mu.data(), mu.data() + m);
      state.box = w - x;
      out = x;
      return true;
    }
    if (step == options.max_newton_steps) break;

    const double eps = std::min(1e-3, residual);
    free_cols.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      // Coordinates sitting on a bound count as free; otherwise a pair that
      // alternates between the two sides of a kink never settles.
      if (set.lower()[i] - options.tol <= w[i] &&
          w[i] <= set.upper()[i] + options.tol) {
        free_cols.push_back(i);
      }
    }
    work.clear();
    for (Eigen::Index j = 0; j < m; ++j) {
      d[j] = row_norms[j] > 0.0 ? g[j] / row_norms[j] : 0.0;
      if (mu[j] <= eps && g[j] < 0.0) continue;
      double reach = 0.0;
      for (Eigen::Index i : free_cols) reach += c(j, i) * c(j, i);
      // A multiplier that moves no free coordinate gets the scaled gradient.
      if (reach > 1e-14 * row_norms[j]) work.push_back(j);
    }
    if (!work.empty()) {
      const auto k = static_cast<Eigen::Index>(work.size());
      Eigen::MatrixXd cf(k, static_cast<Eigen::Index>(free_cols.size()));
      Eigen::VectorXd gw(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        gw[a] = g[work[a]];
        for (std::size_t f = 0; f < free_cols.size(); ++f) {
          cf(a, static_cast<Eigen::Index>(f)) = c(work[a], free_cols[f]);
        }
      }
      Eigen::MatrixXd hess = cf * cf.transpose();
      hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().maxCoeff());
      const Eigen::VectorXd dw = hess.ldlt().solve(gw);
      if (!dw.allFinite()) return false;
      for (Eigen::Index a = 0; a < k; ++a) d[work[a]] = dw[a];
    }

    double beta = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, beta *= 0.5) {
      mu_next = (mu + beta * d).cwiseMax(0.0);
      const double q_next = evaluate(mu_next, w_next, x_next, g_next);
      const double gain = std::max(0.0, g.dot(mu_next - mu));
      if (q_next + 1e-15 * (1.0 + std::abs(q)) >= q + 1e-4 * gain) {
        mu.swap(mu_next);
        w.swap(w_next);
        x.swap(x_next);
        g.swap(g_next);
        q = q_next;
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
  }
  return false;
}

// Cyclic projections without corrections; finds some feasible point.
Eigen::VectorXd find_feasible_point(const LocalSet& set) {
  Eigen::VectorXd x = 0.5 * (set.lower() + set.upper());
  const Eigen::MatrixXd& c = set.constraints();
  const Eigen::VectorXd norms = c.rowwise().squaredNorm();

  double best = set.violation(x);
  long last_improvement = 0;
  for (long sweep = 0; sweep < kSearchSweeps; ++sweep) {
    if (best <= kFeasibleTolerance) break;
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      halfspace_step(c.row(r), norms[r], set.bounds()[r], x);
    }
    x = x.cwiseMax(set.lower()).cwiseMin(set.upper());
    const double v = set.violation(x);
    if (v < best * (1.0 - 1e-12)) {
      best = v;
      last_improvement = sweep;
    } else if (sweep - last_improvement >= kStallSweeps) {
      break;
    }
  }
  if (best > kFeasibleTolerance) {
    throw InvalidInput("local set is empty: feasibility search stalled at "
                       "violation " + std::to_string(best));
  }
  return x;
}

}  // namespace

LocalSet::LocalSet(Eigen::VectorXd lower, Eigen::VectorXd upper)
    : LocalSet(std::move(lower), std::move(upper), Eigen::MatrixXd(),
               Eigen::VectorXd()) {}

LocalSet::LocalSet(Eigen::VectorXd lower, Eigen::VectorXd upper,
                   Eigen::MatrixXd constraints, Eigen::VectorXd bounds)
    : lower_(std::move(lower)),
      upper_(std::move(upper)),
      constraints_(std::move(constraints)),
      bounds_(std::move(bounds)) {
  check_box(lower_, upper_);
  if (!lower_.allFinite() || !upper_.allFinite()) {
    throw InvalidInput("local set bounds must be finite (compact set)");
  }
  if (constraints_.size() == 0) {
    constraints_.resize(0, lower_.size());
    bounds_.resize(0);
  }
  if (constraints_.cols() != lower_.size() ||
      constraints_.rows() != bounds_.size()) {
    throw InvalidInput("halfspace matrix/bound dimensions do not match the box");
  }
  if (!constraints_.allFinite() || !bounds_.allFinite()) {
    throw InvalidInput("halfspace data must be finite");
  }
  witness_ = find_feasible_point(*this);
}

double LocalSet::violation(const Eigen::VectorXd& x) const {
  double v = 0.0;
  v = std::max(v, (lower_ - x).maxCoeff());
  v = std::max(v, (x - upper_).maxCoeff());
  return std::max(v, halfspace_violation(constraints_, bounds_, x));
}

LocalSet LocalSet::with_halfspaces(const Eigen::MatrixXd& constraints,
                                   const Eigen::VectorXd& bounds) const {
  Eigen::MatrixXd c(constraints_.rows() + constraints.rows(), dim());
  c << constraints_, constraints;
  Eigen::VectorXd b(bounds_.size() + bounds.size());
  b << bounds_, bounds;
  return LocalSet(lower_, upper_, std::move(c), std::move(b));
}

Eigen::VectorXd project_box(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper) {
  check_box(lower, upper);
  if (x.size() != lower.size()) {
    throw InvalidInput("project_box: point and bounds differ in dimension");
  }
  return x.cwiseMax(lower).cwiseMin(upper);
}

Eigen::VectorXd project_nonneg(const Eigen::VectorXd& x) {
  return x.cwiseMax(0.0);
}

Eigen::VectorXd project_polyhedron(const Eigen::VectorXd& x,
                                   const LocalSet& set,
                                   const ProjectionOptions& options,
                                   DykstraState* warm) {
  if (x.size() != set.dim()) {
    throw InvalidInput("project_polyhedron: point has dimension " +
                       std::to_string(x.size()) + ", set has " +
                       std::to_string(set.dim()));
  }
  if (!(options.tol > 0.0)) throw InvalidInput("projection tol must be > 0");

  const Eigen::MatrixXd& c = set.constraints();
  const Eigen::VectorXd& b = set.bounds();
  const Eigen::Index rows = c.rows();

  Eigen::VectorXd boxed = x.cwiseMax(set.lower()).cwiseMin(set.upper());
  if (rows == 0 || halfspace_violation(c, b, boxed) == 0.0) {
    if (warm) {
      warm->box = x - boxed;
      warm->halfspace.assign(static_cast<std::size_t>(rows), 0.0);
    }
    return boxed;
  }

  DykstraState local;
  DykstraState& state = warm ? *warm : local;
  const bool reuse = state.box.size() == x.size() &&
                     static_cast<Eigen::Index>(state.halfspace.size()) == rows;
  if (!reuse) {
    state.box = Eigen::VectorXd::Zero(x.size());
    state.halfspace.assign(static_cast<std::size_t>(rows), 0.0);
  }

  if (options.method == ProjectionMethod::DualNewton) {
    Eigen::VectorXd result;
    if (dual_newton(x, set, options, state, result)) return result;
  }

  // Invariant: iterate + sum of corrections == x.
  Eigen::VectorXd iterate = x - state.box;
  for (Eigen::Index r = 0; r < rows; ++r) {
    iterate.noalias() -= state.halfspace[r] * c.row(r).transpose();
  }

  const Eigen::VectorXd norms = c.rowwise().squaredNorm();
  const double stop = options.tol / 10.0;
  Eigen::VectorXd previous(x.size()), previous_box(x.size());
  Eigen::VectorXd y(x.size());
  double change = 0.0;
  for (long sweep = 0; sweep < options.max_sweeps; ++sweep) {
    previous = iterate;
    previous_box = state.box;

    y = iterate + state.box;
    iterate = y.cwiseMax(set.lower()).cwiseMin(set.upper());
    state.box = y - iterate;
    change = (state.box - previous_box).cwiseAbs().maxCoeff();

    for (Eigen::Index r = 0; r < rows; ++r) {
      const double s_old = state.halfspace[r];
      if (s_old != 0.0) iterate.noalias() += s_old * c.row(r).transpose();
      state.halfspace[r] = halfspace_step(c.row(r), norms[r], b[r], iterate);
      change = std::max(change, std::abs(state.halfspace[r] - s_old) * std::sqrt(norms[r]));
    }

    // The iterate can pause while the corrections are still moving, so both
    // must settle, and the point must lie in the set.
    change = std::max(change, (iterate - previous).cwiseAbs().maxCoeff());
    if (change < stop && sweep > 0 && set.violation(iterate) <= options.tol) return iterate;
    if (!iterate.allFinite()) break;
  }
  throw NonConvergence("Dykstra projection did not converge", change);
}

}  // namespace aggnash
