#include "aggnash/game.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "aggnash/errors.hpp"

namespace aggnash {

StrategyProfile StrategyProfile::from_stacked(
    const Eigen::VectorXd& stacked, const std::vector<Eigen::Index>& dims) {
  Eigen::Index total = 0;
  for (auto d : dims) total += d;
  if (total != stacked.size()) {
    throw InvalidInput("stacked vector has " + std::to_string(stacked.size()) +
                       " entries, dimensions sum to " + std::to_string(total));
  }
  std::vector<Eigen::VectorXd> blocks;
  blocks.reserve(dims.size());
  Eigen::Index offset = 0;
  for (auto d : dims) {
    blocks.emplace_back(stacked.segment(offset, d));
    offset += d;
  }
  return StrategyProfile(std::move(blocks));
}

std::vector<Eigen::Index> StrategyProfile::dims() const {
  std::vector<Eigen::Index> d;
  d.reserve(blocks_.size());
  for (const auto& b : blocks_) d.push_back(b.size());
  return d;
}

Eigen::VectorXd StrategyProfile::stacked() const {
  Eigen::Index total = 0;
  for (const auto& b : blocks_) total += b.size();
  Eigen::VectorXd out(total);
  Eigen::Index offset = 0;
  for (const auto& b : blocks_) {
    out.segment(offset, b.size()) = b;
    offset += b.size();
  }
  return out;
}

GameSpec::GameSpec(std::vector<AgentSpec> agents,
                   Eigen::MatrixXd coupling_matrix,
                   Eigen::VectorXd coupling_bound)
    : agents_(std::move(agents)),
      coupling_(std::move(coupling_matrix)),
      bound_(std::move(coupling_bound)) {
  if (agents_.empty()) throw InvalidInput("a game needs at least one agent");
  aggregate_dim_ = agents_[0].selection.rows();
  for (int i = 0; i < this->agents(); ++i) {
    auto& a = agents_[i];
    const std::string who = "agent " + std::to_string(i) + ": ";
    if (!a.cost) throw InvalidInput(who + "missing cost function");
    if (a.selection.rows() != aggregate_dim_) {
      throw InvalidInput(who + "selection matrix maps into dimension " +
                         std::to_string(a.selection.rows()) + ", expected " +
                         std::to_string(aggregate_dim_));
    }
    if (a.selection.cols() != a.local_set.dim()) {
      throw InvalidInput(who + "selection matrix has " +
                         std::to_string(a.selection.cols()) +
                         " columns, local set has dimension " +
                         std::to_string(a.local_set.dim()));
    }
    if (!a.selection.allFinite()) {
      throw InvalidInput(who + "selection matrix has non-finite entries");
    }
    if (a.offset.size() == 0) a.offset = Eigen::VectorXd::Zero(aggregate_dim_);
    if (a.offset.size() != aggregate_dim_) {
      throw InvalidInput(who + "offset dimension mismatch");
    }
  }
  if (coupling_.size() == 0) {
    coupling_.resize(0, aggregate_dim_);
    bound_.resize(0);
  }
  if (coupling_.cols() != aggregate_dim_ || coupling_.rows() != bound_.size()) {
    throw InvalidInput("coupling pair (A, b) is inconsistent with the "
                       "aggregate dimension");
  }
}

std::vector<Eigen::Index> GameSpec::strategy_dims() const {
  std::vector<Eigen::Index> d;
  for (const auto& a : agents_) d.push_back(a.selection.cols());
  return d;
}

Eigen::Index GameSpec::total_dim() const {
  Eigen::Index total = 0;
  for (const auto& a : agents_) total += a.selection.cols();
  return total;
}

Eigen::VectorXd GameSpec::image(int i, const Eigen::VectorXd& x) const {
  return agents_[i].selection * x + agents_[i].offset;
}

void GameSpec::check_profile(const StrategyProfile& x) const {
  if (x.agents() != agents()) {
    throw InvalidInput("profile has " + std::to_string(x.agents()) +
                       " agents, game has " + std::to_string(agents()));
  }
  for (int i = 0; i < this->agents(); ++i) {
    if (x[i].size() != strategy_dim(i)) {
      throw InvalidInput("profile block " + std::to_string(i) +
                         " has dimension " + std::to_string(x[i].size()) +
                         ", expected " + std::to_string(strategy_dim(i)));
    }
  }
}

Eigen::VectorXd global_aggregate(const GameSpec& game,
                                 const StrategyProfile& x) {
  game.check_profile(x);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(game.aggregate_dim());
  for (int j = 0; j < game.agents(); ++j) sum += game.image(j, x[j]);
  return sum / game.agents();
}

Eigen::VectorXd local_aggregate(const GameSpec& game, const CommMatrix& comm,
                                int rounds, const StrategyProfile& x,
                                int agent) {
  game.check_profile(x);
  if (comm.size() != game.agents()) {
    throw InvalidInput("communication matrix size differs from agent count");
  }
  if (rounds < 1) throw InvalidInput("local aggregate needs rounds >= 1");
  const Eigen::MatrixXd& tp = comm.power(rounds);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(game.aggregate_dim());
  for (int j = 0; j < game.agents(); ++j) {
    if (tp(agent, j) != 0.0) sum += tp(agent, j) * game.image(j, x[j]);
  }
  return sum;
}

std::vector<Eigen::VectorXd> perceived_aggregates(const GameSpec& game,
                                                  const CommMatrix& comm,
                                                  Rounds rounds,
                                                  const StrategyProfile& x) {
  game.check_profile(x);
  const int n = game.agents();
  std::vector<Eigen::VectorXd> images;
  images.reserve(n);
  for (int j = 0; j < n; ++j) images.push_back(game.image(j, x[j]));

  if (rounds.is_infinite()) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(game.aggregate_dim());
    for (const auto& y : images) mean += y;
    mean /= n;
    return std::vector<Eigen::VectorXd>(n, mean);
  }
  if (comm.size() != n) {
    throw InvalidInput("communication matrix size differs from agent count");
  }
  if (rounds.count() < 1) throw InvalidInput("rounds must be >= 1");
  const Eigen::MatrixXd& tp = comm.power(rounds.count());
  std::vector<Eigen::VectorXd> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].setZero(game.aggregate_dim());
    for (int j = 0; j < n; ++j) {
      if (tp(i, j) != 0.0) out[i] += tp(i, j) * images[j];
    }
  }
  return out;
}

double self_weight(const CommMatrix& comm, Rounds rounds, int agent) {
  if (rounds.is_infinite()) return 1.0 / comm.size();
  return comm.power(rounds.count())(agent, agent);
}

StrategyProfile eval_F(const GameSpec& game, const CommMatrix& comm,
                       Rounds rounds, const StrategyProfile& x, Mode mode) {
  const auto aggregates = perceived_aggregates(game, comm, rounds, x);
  std::vector<Eigen::VectorXd> blocks(game.agents());
  for (int i = 0; i < game.agents(); ++i) {
    const auto& agent = game.agent(i);
    Eigen::VectorXd g = agent.cost->grad_own(x[i], aggregates[i]);
    if (g.size() != x[i].size()) {
      throw InvalidInput("agent " + std::to_string(i) +
                         ": grad_own returned the wrong dimension");
    }
    if (mode == Mode::Nash) {
      const Eigen::VectorXd ga = agent.cost->grad_aggregate(x[i], aggregates[i]);
      if (ga.size() != game.aggregate_dim()) {
        throw InvalidInput("agent " + std::to_string(i) +
                           ": grad_aggregate returned the wrong dimension");
      }
      g.noalias() += self_weight(comm, rounds, i) *
                     (agent.selection.transpose() * ga);
    }
    blocks[i] = std::move(g);
  }
  return StrategyProfile(std::move(blocks));
}

Eigen::MatrixXd pseudo_gradient_jacobian(const GameSpec& game,
                                         const CommMatrix& comm, Rounds rounds,
                                         const StrategyProfile& x, Mode mode,
                                         double fd_scale) {
  const auto dims = game.strategy_dims();
  const Eigen::VectorXd base = x.stacked();
  const Eigen::Index n = base.size();
  const double h = fd_scale * (1.0 + base.norm());

  Eigen::MatrixXd jac(n, n);
  Eigen::VectorXd probe = base;
  for (Eigen::Index k = 0; k < n; ++k) {
    probe[k] = base[k] + h;
    const Eigen::VectorXd plus =
        eval_F(game, comm, rounds, StrategyProfile::from_stacked(probe, dims),
               mode)
            .stacked();
    probe[k] = base[k] - h;
    const Eigen::VectorXd minus =
        eval_F(game, comm, rounds, StrategyProfile::from_stacked(probe, dims),
               mode)
            .stacked();
    probe[k] = base[k];
    jac.col(k) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

double min_symmetric_eigenvalue(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym,
                                                        Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

StrategyProfile sample_profile(const GameSpec& game, std::mt19937_64& rng,
                               int max_rejections) {
  std::vector<Eigen::VectorXd> blocks(game.agents());
  for (int i = 0; i < game.agents(); ++i) {
    const LocalSet& set = game.agent(i).local_set;
    Eigen::VectorXd draw(set.dim());
    bool inside = false;
    for (int attempt = 0; attempt < std::max(1, max_rejections); ++attempt) {
      for (Eigen::Index k = 0; k < draw.size(); ++k) {
        draw[k] = set.lower()[k] +
                  uniform01(rng) * (set.upper()[k] - set.lower()[k]);
      }
      if (set.contains(draw)) {
        inside = true;
        break;
      }
    }
    blocks[i] = inside ? draw : project_polyhedron(draw, set);
  }
  return StrategyProfile(std::move(blocks));
}

double estimate_monotonicity(const GameSpec& game, const CommMatrix& comm,
                             Rounds rounds, const MonotonicityOptions& options,
                             Mode mode) {
  if (options.samples < 1) {
    throw InvalidInput("estimate_monotonicity needs sample_count >= 1");
  }
  std::mt19937_64 rng(options.seed);
  double alpha = std::numeric_limits<double>::infinity();
  for (int s = 0; s < options.samples; ++s) {
    const StrategyProfile x = sample_profile(game, rng, options.max_rejections);
    const Eigen::MatrixXd jac =
        pseudo_gradient_jacobian(game, comm, rounds, x, mode, options.fd_scale);
    alpha = std::min(alpha, min_symmetric_eigenvalue(jac));
  }
  return alpha;
}

}  // namespace aggnash
