#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "aggnash/comm.hpp"
#include "aggnash/projection.hpp"

namespace aggnash {

/// Cost J(own, aggregate) of one agent together with its partial gradients.
/// Implementations must be pure: the same inputs always give the same
/// outputs, and calls from several threads are allowed.
class CostFunction {
 public:
  virtual ~CostFunction() = default;
  virtual double value(const Eigen::VectorXd& own,
                       const Eigen::VectorXd& aggregate) const = 0;
  /// Gradient with respect to the agent's own strategy (first argument).
  virtual Eigen::VectorXd grad_own(const Eigen::VectorXd& own,
                                   const Eigen::VectorXd& aggregate) const = 0;
  /// Gradient with respect to the aggregate (second argument).
  virtual Eigen::VectorXd grad_aggregate(
      const Eigen::VectorXd& own, const Eigen::VectorXd& aggregate) const = 0;
};

struct AgentSpec {
  LocalSet local_set;
  /// Maps the agent's strategy into aggregate space (n x n_i).
  Eigen::MatrixXd selection;
  /// Added to selection * x before averaging; zero by default.
  Eigen::VectorXd offset;
  std::shared_ptr<const CostFunction> cost;
};

/// Number of communication rounds, or the exact-average limit.
class Rounds {
 public:
  explicit constexpr Rounds(int count) : count_(count) {}
  static constexpr Rounds infinite() { return Rounds(-1); }

  constexpr bool is_infinite() const noexcept { return count_ < 0; }
  constexpr int count() const noexcept { return count_; }

 private:
  int count_;
};

enum class Mode { Nash, Wardrop };

/// Per-agent strategies x^1..x^N, stacked in agent order.
class StrategyProfile {
 public:
  StrategyProfile() = default;
  explicit StrategyProfile(std::vector<Eigen::VectorXd> blocks)
      : blocks_(std::move(blocks)) {}

  static StrategyProfile from_stacked(const Eigen::VectorXd& stacked,
                                      const std::vector<Eigen::Index>& dims);

  int agents() const noexcept { return static_cast<int>(blocks_.size()); }
  const Eigen::VectorXd& operator[](int i) const { return blocks_[i]; }
  Eigen::VectorXd& operator[](int i) { return blocks_[i]; }
  const std::vector<Eigen::VectorXd>& blocks() const noexcept { return blocks_; }
  std::vector<Eigen::Index> dims() const;
  Eigen::VectorXd stacked() const;

 private:
  std::vector<Eigen::VectorXd> blocks_;
};

/// Full game: agents, their local sets and costs, and the shared coupling
/// constraint A sigma <= b on the population average.
class GameSpec {
 public:
  /// Validates every dimension. An empty coupling (0 rows) is allowed.
  GameSpec(std::vector<AgentSpec> agents, Eigen::MatrixXd coupling_matrix,
           Eigen::VectorXd coupling_bound);

  int agents() const noexcept { return static_cast<int>(agents_.size()); }
  const AgentSpec& agent(int i) const { return agents_[i]; }
  Eigen::Index aggregate_dim() const noexcept { return aggregate_dim_; }
  Eigen::Index strategy_dim(int i) const { return agents_[i].selection.cols(); }
  std::vector<Eigen::Index> strategy_dims() const;
  Eigen::Index total_dim() const;

  const Eigen::MatrixXd& coupling_matrix() const noexcept { return coupling_; }
  const Eigen::VectorXd& coupling_bound() const noexcept { return bound_; }
  Eigen::Index coupling_rows() const noexcept { return coupling_.rows(); }

  /// H^i x^i + h^i.
  Eigen::VectorXd image(int i, const Eigen::VectorXd& x) const;

  /// Throws InvalidInput unless the profile matches the agent dimensions.
  void check_profile(const StrategyProfile& x) const;

 private:
  std::vector<AgentSpec> agents_;
  Eigen::MatrixXd coupling_;
  Eigen::VectorXd bound_;
  Eigen::Index aggregate_dim_ = 0;
};

/// (1/N) sum_j (H^j x^j + h^j).
Eigen::VectorXd global_aggregate(const GameSpec& game, const StrategyProfile& x);

/// sum_j [T^rounds]_ij (H^j x^j + h^j). rounds must be finite and >= 1.
Eigen::VectorXd local_aggregate(const GameSpec& game, const CommMatrix& comm,
                                int rounds, const StrategyProfile& x, int agent);

/// Aggregate seen by every agent: local ones for finite rounds, the exact
/// average for Rounds::infinite().
std::vector<Eigen::VectorXd> perceived_aggregates(const GameSpec& game,
                                                  const CommMatrix& comm,
                                                  Rounds rounds,
                                                  const StrategyProfile& x);

/// Weight of an agent's own image in its perceived aggregate:
/// [T^rounds]_ii, or 1/N in the limit.
double self_weight(const CommMatrix& comm, Rounds rounds, int agent);

/// Pseudo-gradient operator. Agent block i is
///   grad_own + w_i (H^i)^T grad_aggregate
/// evaluated at (x^i, perceived aggregate), with w_i = self_weight; Wardrop
/// mode drops the second summand.
StrategyProfile eval_F(const GameSpec& game, const CommMatrix& comm,
                       Rounds rounds, const StrategyProfile& x,
                       Mode mode = Mode::Nash);

struct MonotonicityOptions {
  int samples = 20;
  std::uint64_t seed = 1;
  /// Central-difference step is fd_scale * (1 + ||x||).
  double fd_scale = 1e-6;
  /// Rejection-sampling attempts per agent before projecting a box draw.
  int max_rejections = 1000;
};

/// Central finite-difference Jacobian of the stacked operator.
Eigen::MatrixXd pseudo_gradient_jacobian(const GameSpec& game,
                                         const CommMatrix& comm, Rounds rounds,
                                         const StrategyProfile& x, Mode mode,
                                         double fd_scale = 1e-6);

/// Smallest eigenvalue of the symmetric part of a square matrix.
double min_symmetric_eigenvalue(const Eigen::MatrixXd& m);

/// Minimum over sampled profiles of the smallest eigenvalue of the
/// symmetrized Jacobian of F. A positive value is evidence of strong
/// monotonicity on the sampled region.
double estimate_monotonicity(const GameSpec& game, const CommMatrix& comm,
                             Rounds rounds, const MonotonicityOptions& options,
                             Mode mode = Mode::Nash);

/// Uniform draw in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Draws each block uniformly from its local set's bounding box, rejecting
/// points outside the set; after max_rejections failures the last draw is
/// projected onto the set instead.
StrategyProfile sample_profile(const GameSpec& game, std::mt19937_64& rng,
                               int max_rejections = 1000);

}  // namespace aggnash
