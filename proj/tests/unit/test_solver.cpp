#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "aggnash/cournot.hpp"
#include "aggnash/errors.hpp"
#include "aggnash/solver.hpp"
#include "support.hpp"

using namespace aggnash;

namespace {

struct Iterate {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;
};

Eigen::VectorXd stack(const std::vector<Eigen::VectorXd>& v) {
  Eigen::Index n = 0;
  for (const auto& b : v) n += b.size();
  Eigen::VectorXd out(n);
  n = 0;
  for (const auto& b : v) {
    out.segment(n, b.size()) = b;
    n += b.size();
  }
  return out;
}

std::vector<Iterate> record(const GameSpec& game, const CommMatrix& comm, const SolverConfig& cfg,
                            bool compact) {
  std::vector<Iterate> out;
  auto obs = [&](long, const StrategyProfile& x, const std::vector<Eigen::VectorXd>& l) {
    out.push_back({x.stacked(), stack(l)});
  };
  if (compact) {
    run_compact(game, comm, cfg, std::nullopt, obs);
  } else {
    run_distributed(game, comm, cfg, std::nullopt, obs);
  }
  return out;
}

SolverConfig fixed_length(double tau, int nu, long iters) {
  SolverConfig cfg;
  cfg.tau = tau;
  cfg.nu = nu;
  cfg.stop_tol = 1e-300;
  cfg.max_iter = iters;
  return cfg;
}

// Six firms on a small random road graph with every market capped tightly
// enough that the duals become active.
cournot::CournotGame six_firm_game() {
  auto g = cournot::make_surrogate_graph(7, 9, 17);
  auto inst = cournot::build_network_instance(g, {0, 1, 2, 3, 5, 6}, 4.0, 2.0);
  return std::move(inst.cournot);
}

class NanCost final : public CostFunction {
 public:
  double value(const Eigen::VectorXd&, const Eigen::VectorXd&) const override { return 0; }
  Eigen::VectorXd grad_own(const Eigen::VectorXd& x, const Eigen::VectorXd&) const override {
    return Eigen::VectorXd::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
  }
  Eigen::VectorXd grad_aggregate(const Eigen::VectorXd&, const Eigen::VectorXd& s) const override {
    return Eigen::VectorXd::Zero(s.size());
  }
};

}  // namespace

TEST(StepSizeBound, Arithmetic) {
  EXPECT_NEAR(step_size_bound(1, 1, 1).bound, (std::sqrt(5.0) - 1) / 2, 1e-12);
  StepSizeBound b = step_size_bound(1, 0.1, 4);
  EXPECT_DOUBLE_EQ(b.inverse_norm, 0.25);
  EXPECT_DOUBLE_EQ(b.tau_max(), std::min(b.bound, 0.25));
  // Matches the textbook form where it does not cancel.
  const double a = 0.7, l = 1.3, n = 2.1;
  const double textbook = (-l * l + std::sqrt(std::pow(l, 4) + 4 * a * a * n * n)) / (2 * a * n * n);
  EXPECT_NEAR(step_size_bound(a, l, n).bound, textbook, 1e-14);
  EXPECT_THROW(step_size_bound(0, 1, 1), InvalidInput);
  EXPECT_THROW(step_size_bound(1, -1, 1), InvalidInput);
  EXPECT_THROW(step_size_bound(1, 1, 0), InvalidInput);
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = SolverConfig{};
  c.nu = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = SolverConfig{};
  c.stop_tol = -1;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(RunDistributed, ConvergedReportIsAFixedPoint) {
  auto ex = cournot::build_small_example(true);
  SolverConfig cfg;
  auto rep = run_distributed(ex.cournot.game, ex.comm, cfg);
  ASSERT_TRUE(rep.converged);
  EXPECT_LT(rep.last_delta, cfg.stop_tol);
  auto res = fixed_point_residual(ex.cournot.game, ex.comm, cfg, rep.profile, rep.duals);
  EXPECT_LT(res.primal, 10 * cfg.stop_tol);
  EXPECT_LT(res.dual, 10 * cfg.stop_tol);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(rep.profile[i](8), 5.0, 1e-3);
}

TEST(RunDistributed, WardropFixedPoint) {
  auto ex = cournot::build_small_example(false);
  SolverConfig cfg;
  cfg.mode = Mode::Wardrop;
  auto rep = run_distributed(ex.cournot.game, ex.comm, cfg);
  ASSERT_TRUE(rep.converged);
  auto res = fixed_point_residual(ex.cournot.game, ex.comm, cfg, rep.profile, rep.duals);
  EXPECT_LT(res.primal, 10 * cfg.stop_tol);
  cfg.mode = Mode::Nash;
  auto nash = fixed_point_residual(ex.cournot.game, ex.comm, cfg, rep.profile, rep.duals);
  EXPECT_GT(nash.primal, 10 * res.primal);
}

TEST(RunDistributed, MaxIterationsReported) {
  auto ex = cournot::build_small_example(false);
  SolverConfig cfg;
  cfg.max_iter = 25;
  cfg.record_every = 10;
  auto rep = run_distributed(ex.cournot.game, ex.comm, cfg);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.iterations, 25);
  ASSERT_EQ(rep.trace.size(), 3u);
  EXPECT_EQ(rep.trace.back().iteration, 25);
}

TEST(RunDistributed, NonFiniteUpdateNamesIterationAndAgent) {
  auto bad = std::make_shared<NanCost>();
  auto ok = cournot::build_small_example(false).cournot.game.agent(0);
  AgentSpec a{ok.local_set, ok.selection, Eigen::VectorXd(), ok.cost};
  AgentSpec b{ok.local_set, ok.selection, Eigen::VectorXd(), bad};
  GameSpec game({a, b}, Eigen::MatrixXd(0, 5), Eigen::VectorXd(0));
  try {
    run_distributed(game, CommMatrix::uniform(2), SolverConfig{});
    FAIL() << "NaN went unnoticed";
  } catch (const NumericalDivergence& e) {
    EXPECT_EQ(e.iteration(), 1);
    EXPECT_EQ(e.agent(), 1);
  }
}

TEST(RunDistributed, RejectsMismatchedInputs) {
  auto ex = cournot::build_small_example(false);
  EXPECT_THROW(run_distributed(ex.cournot.game, CommMatrix::uniform(4), SolverConfig{}),
               InvalidInput);
  InitialPoint init = default_initial_point(ex.cournot.game);
  init.lambda[0] = -Eigen::VectorXd::Ones(1);
  EXPECT_THROW(run_distributed(ex.cournot.game, ex.comm, SolverConfig{}, init), InvalidInput);
}

TEST(RunDistributed, DualsStayNonnegative) {
  auto small = cournot::build_small_example(true);
  cournot::CournotGame six = six_firm_game();
  std::mt19937_64 rng(3);
  CommMatrix t6(testing_support::random_doubly_stochastic(rng, 6));
  long checked = 0;
  double smallest = 0.0, largest = 0.0;
  auto obs = [&](long, const StrategyProfile&, const std::vector<Eigen::VectorXd>& l) {
    for (const auto& v : l) {
      if (v.size()) {
        smallest = std::min(smallest, v.minCoeff());
        largest = std::max(largest, v.maxCoeff());
      }
    }
    ++checked;
  };
  run_distributed(small.cournot.game, small.comm, SolverConfig{}, std::nullopt, obs);
  SolverConfig cfg;
  cfg.tau = 0.02;
  cfg.nu = 3;
  run_distributed(six.game, t6, cfg, std::nullopt, obs);
  EXPECT_GT(checked, 1000);
  EXPECT_GE(smallest, 0.0);
  EXPECT_GT(largest, 0.0);
}

TEST(RunDistributed, ZeroOperatorLetsDualsDecay) {
  auto zero = std::make_shared<testing_support::QuadraticCost>(
      Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2));
  AgentSpec a{LocalSet(Eigen::VectorXd::Constant(2, -1), Eigen::VectorXd::Constant(2, 1)),
              Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd(), zero};
  GameSpec game({a, a}, Eigen::RowVector2d(1, 1), Eigen::VectorXd::Constant(1, 3.0));
  InitialPoint init{StrategyProfile({Eigen::Vector2d(0.2, -0.1), Eigen::Vector2d(0.1, 0.3)}),
                    {Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 0.5)}};
  SolverConfig cfg;
  cfg.tau = 0.1;
  cfg.nu = 1;
  cfg.stop_tol = 1e-12;
  auto rep = run_distributed(game, CommMatrix::uniform(2), cfg, init);
  ASSERT_TRUE(rep.converged);
  EXPECT_EQ(rep.duals[0](0), 0.0);
  EXPECT_EQ(rep.duals[1](0), 0.0);
  // Only the dual moves x, and it pushes along -(1, 1) while positive.
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd shift = rep.profile[i] - init.x[i];
    EXPECT_NEAR(shift(0), shift(1), 1e-15);
    EXPECT_LE(shift(0), 0.0);
  }
}

// With a single agent the iteration is projected gradient descent on
// z -> J(z, H z).
TEST(RunDistributed, SingleAgentIsProjectedGradient) {
  auto ex = cournot::build_small_example(false);
  std::vector<cournot::FirmSpec> firm{ex.cournot.firms[1]};
  firm[0].transport.clear();
  auto one = cournot::build_cournot_game(
      ex.cournot.network, firm, ex.cournot.price,
      Eigen::VectorXd::Constant(5, std::numeric_limits<double>::infinity()));
  const GameSpec& game = one.game;
  ASSERT_EQ(game.coupling_rows(), 0);
  const AgentSpec& agent = game.agent(0);

  SolverConfig cfg = fixed_length(0.005, 7, 400);
  std::vector<Eigen::VectorXd> iterates;
  run_distributed(game, CommMatrix(Eigen::MatrixXd::Ones(1, 1)), cfg, std::nullopt,
                  [&](long, const StrategyProfile& x, const std::vector<Eigen::VectorXd>&) {
                    iterates.push_back(x[0]);
                  });
  ASSERT_EQ(iterates.size(), 400u);

  Eigen::VectorXd z = default_initial_point(game).x[0];
  double worst = 0.0;
  for (const auto& got : iterates) {
    const Eigen::VectorXd s = agent.selection * z;
    const Eigen::VectorXd grad = agent.cost->grad_own(z, s) +
                                 agent.selection.transpose() * agent.cost->grad_aggregate(z, s);
    z = project_polyhedron(z - cfg.tau * grad, agent.local_set,
                           {.tol = 1e-13, .method = ProjectionMethod::DualNewton});
    worst = std::max(worst, (got - z).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(RunCompact, AgreesWithDistributedOnSmallInstance) {
  for (bool coupled : {false, true}) {
    auto ex = cournot::build_small_example(coupled);
    SolverConfig cfg = fixed_length(0.005, 10, 500);
    auto d = record(ex.cournot.game, ex.comm, cfg, false);
    auto c = record(ex.cournot.game, ex.comm, cfg, true);
    ASSERT_EQ(d.size(), c.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      worst = std::max(worst, (d[k].x - c[k].x).cwiseAbs().maxCoeff());
      worst = std::max(worst, (d[k].lambda - c[k].lambda).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-12) << "coupled " << coupled;
  }
}

TEST(RunCompact, AgreesWithDistributedOnAsymmetricNetwork) {
  cournot::CournotGame six = six_firm_game();
  std::mt19937_64 rng(12);
  Eigen::MatrixXd t = testing_support::random_doubly_stochastic(rng, 6);
  ASSERT_GT((t - t.transpose()).cwiseAbs().maxCoeff(), 0.05);
  CommMatrix comm(t);
  ASSERT_TRUE(validate_comm_matrix(comm).primitive);
  SolverConfig cfg = fixed_length(0.02, 3, 500);
  auto d = record(six.game, comm, cfg, false);
  auto c = record(six.game, comm, cfg, true);
  double worst = 0.0, dual_max = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    worst = std::max(worst, (d[k].x - c[k].x).cwiseAbs().maxCoeff());
    worst = std::max(worst, (d[k].lambda - c[k].lambda).cwiseAbs().maxCoeff());
    dual_max = std::max(dual_max, d[k].lambda.maxCoeff());
  }
  EXPECT_GT(dual_max, 0.0);
  EXPECT_LT(worst, 1e-12);
}

TEST(RunCompact, SameReportOnSmallInstance) {
  auto ex = cournot::build_small_example(true);
  auto d = run_distributed(ex.cournot.game, ex.comm, SolverConfig{});
  auto c = run_compact(ex.cournot.game, ex.comm, SolverConfig{});
  EXPECT_EQ(d.iterations, c.iterations);
  EXPECT_EQ(d.converged, c.converged);
  EXPECT_LT((d.profile.stacked() - c.profile.stacked()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(StackedCoupling, LimitUsesExactAverage) {
  auto ex = cournot::build_small_example(true);
  Eigen::MatrixXd a_inf = stacked_coupling_matrix(ex.cournot.game, ex.comm, Rounds::infinite());
  Eigen::MatrixXd a_1 = stacked_coupling_matrix(ex.cournot.game, CommMatrix::uniform(3), Rounds(1));
  EXPECT_LT((a_inf - a_1).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(a_inf.rows(), 3);
  EXPECT_EQ(a_inf.cols(), 27);
}

// Below the step bound the delta sequence settles into monotone decay.
TEST(RunDistributed, DeltasEventuallyDecreaseBelowStepBound) {
  auto ex = cournot::build_small_example(false);
  auto k = cournot::cournot_constants(ex.cournot, ex.comm, 10);
  const double tau = 0.9 * step_size_bound(k.alpha, k.lipschitz, k.norm_A).tau_max();
  SolverConfig cfg = fixed_length(tau, 10, 20000);
  std::vector<double> deltas;
  Eigen::VectorXd prev = default_initial_point(ex.cournot.game).x.stacked();
  run_distributed(ex.cournot.game, ex.comm, cfg, std::nullopt,
                  [&](long, const StrategyProfile& x, const std::vector<Eigen::VectorXd>&) {
                    Eigen::VectorXd s = x.stacked();
                    deltas.push_back((s - prev).cwiseAbs().maxCoeff());
                    prev = s;
                  });
  for (std::size_t i = deltas.size() / 2 + 1; i < deltas.size(); ++i) {
    ASSERT_LE(deltas[i], deltas[i - 1] * (1 + 1e-9)) << "iteration " << i + 1;
  }
}

TEST(TraceCsv, HeaderAndRows) {
  std::ostringstream out;
  write_trace_csv(out, {{10, 0.5, 0.25, 0.0}, {20, 0.125, 0.0, 1e-3}});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iter,dx_inf,dlambda_inf,feas_residual");
  std::getline(in, line);
  EXPECT_EQ(line, "10,0.5,0.25,0");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 9), "20,0.125,");
}
