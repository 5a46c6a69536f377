#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "aggnash/game.hpp"
#include "aggnash/projection.hpp"

namespace testing_support {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * aggnash::uniform01(rng);
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double lo,
                                     double hi) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(rng, lo, hi);
  return v;
}

/// Primal active-set method for min 1/2 |x - z|^2 s.t. G x <= h, started
/// from a feasible point. Independent of the library's projection code.
inline Eigen::VectorXd qp_projection(const Eigen::VectorXd& z, const Eigen::MatrixXd& g,
                                     const Eigen::VectorXd& h, Eigen::VectorXd x) {
  const Eigen::Index m = g.rows();
  // Constraints enter only as blocking ones, so the working set stays
  // linearly independent even when the start point is degenerate.
  std::vector<Eigen::Index> active;
  // Set after an unblocked full step: x then minimizes over the working set
  // up to roundoff, however large |p| still looks.
  bool stationary = false;
  for (int iter = 0; iter < 10000; ++iter) {
    // Equality-constrained step: min 1/2 |x + p - z|^2 s.t. G_W p = 0.
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd gw(k, x.size());
    for (Eigen::Index a = 0; a < k; ++a) gw.row(a) = g.row(active[a]);
    Eigen::VectorXd r = z - x;
    Eigen::VectorXd p = r;
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(k);
    if (k > 0) {
      // Least-norm multipliers: G_W G_W^T lambda = G_W r.
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gw * gw.transpose());
      lambda = cod.solve(gw * r);
      p = r - gw.transpose() * lambda;
    }
    if (stationary || p.norm() < 1e-14) {
      Eigen::Index worst = -1;
      double most_negative = -1e-13;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (lambda(a) < most_negative) {
          most_negative = lambda(a);
          worst = a;
        }
      }
      if (worst < 0) return x;
      active.erase(active.begin() + worst);
      stationary = false;
      continue;
    }
    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (std::find(active.begin(), active.end(), j) != active.end()) continue;
      const double gp = g.row(j).dot(p);
      if (gp > 1e-15) {
        const double a = (h(j) - g.row(j).dot(x)) / gp;
        if (a < alpha) {
          alpha = std::max(a, 0.0);
          blocking = j;
        }
      }
    }
    x += alpha * p;
    if (blocking >= 0) active.push_back(blocking);
    stationary = blocking < 0;
  }
  return x;
}

/// The set as G x <= h: upper bounds, lower bounds, then halfspaces.
inline void as_inequalities(const aggnash::LocalSet& set, Eigen::MatrixXd& g,
                            Eigen::VectorXd& h) {
  const Eigen::Index n = set.dim();
  const Eigen::Index m = set.halfspace_count();
  g.setZero(2 * n + m, n);
  h.resize(2 * n + m);
  g.topRows(n).setIdentity();
  h.head(n) = set.upper();
  g.middleRows(n, n) = -Eigen::MatrixXd::Identity(n, n);
  h.segment(n, n) = -set.lower();
  g.bottomRows(m) = set.constraints();
  h.tail(m) = set.bounds();
}

/// J(x, s) = 1/2 x^T Q x + q^T x + s^T C x: a smooth cost whose gradients
/// are trivial to write down independently.
class QuadraticCost final : public aggnash::CostFunction {
 public:
  QuadraticCost(Eigen::MatrixXd q, Eigen::VectorXd lin, Eigen::MatrixXd cross)
      : q_(std::move(q)), lin_(std::move(lin)), cross_(std::move(cross)) {}
  double value(const Eigen::VectorXd& x, const Eigen::VectorXd& s) const override {
    return 0.5 * x.dot(q_ * x) + lin_.dot(x) + s.dot(cross_ * x);
  }
  Eigen::VectorXd grad_own(const Eigen::VectorXd& x, const Eigen::VectorXd& s) const override {
    return 0.5 * (q_ + q_.transpose()) * x + lin_ + cross_.transpose() * s;
  }
  Eigen::VectorXd grad_aggregate(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd&) const override {
    return cross_ * x;
  }

 private:
  Eigen::MatrixXd q_;
  Eigen::VectorXd lin_;
  Eigen::MatrixXd cross_;
};

/// Random doubly stochastic matrix: a convex combination of permutations
/// including the identity and a cyclic shift, so it is primitive.
inline Eigen::MatrixXd random_doubly_stochastic(std::mt19937_64& rng, int n, int terms = 4) {
  std::vector<int> perm(n);
  Eigen::VectorXd w = random_vector(rng, terms + 2, 0.2, 1.0);
  w /= w.sum();
  Eigen::MatrixXd t = w(0) * Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) t(i, (i + 1) % n) += w(1);
  for (int k = 0; k < terms; ++k) {
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) t(i, perm[i]) += w(k + 2);
  }
  return t;
}

}  // namespace testing_support
