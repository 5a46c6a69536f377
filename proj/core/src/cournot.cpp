#include "aggnash/cournot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>

#include "aggnash/errors.hpp"

namespace aggnash::cournot {

namespace {

constexpr double kPsdTolerance = 1e-10;

double min_sym_eig(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_sym_eig(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

void check_price(const PriceModel& price, int markets, double max_capacity) {
  if (const auto* affine = std::get_if<AffinePrice>(&price)) {
    if (affine->slope.rows() != markets || affine->slope.cols() != markets ||
        affine->intercept.size() != markets) {
      throw InvalidInput("affine price dimensions do not match " +
                         std::to_string(markets) + " markets");
    }
    if (!affine->slope.allFinite() || !affine->intercept.allFinite()) {
      throw InvalidInput("affine price has non-finite entries");
    }
    double lo = min_sym_eig(affine->slope);
    if (lo < -kPsdTolerance) {
      std::ostringstream msg;
      msg << "price slope matrix is not positive semidefinite (smallest "
             "eigenvalue of its symmetric part is "
          << lo << ")";
      throw InvalidInput(msg.str());
    }
    return;
  }
  const auto& sep = std::get<SeparablePrice>(price);
  if (static_cast<int>(sep.markets.size()) != markets) {
    throw InvalidInput("separable price needs one function per market");
  }
  // The aggregate is an average of per-firm sales, so it never exceeds the
  // largest capacity.
  constexpr int kSamples = 64;
  for (int v = 0; v < markets; ++v) {
    const auto& m = sep.markets[v];
    if (!m.p || !m.dp || !m.d2p) {
      throw InvalidInput("separable price for market " + std::to_string(v + 1) +
                         " is missing an oracle");
    }
    double prev = m.p(0.0);
    for (int k = 1; k <= kSamples; ++k) {
      double s = max_capacity * k / kSamples;
      double cur = m.p(s);
      if (!(cur < prev) || !(m.dp(s) < 0.0)) {
        throw InvalidInput("price at market " + std::to_string(v + 1) +
                           " is not strictly decreasing on [0, " +
                           std::to_string(max_capacity) + "]");
      }
      prev = cur;
    }
  }
}

}  // namespace

TransportNetwork::TransportNetwork(Eigen::MatrixXd incidence,
                                   Eigen::VectorXd edge_length,
                                   std::vector<Road> roads)
    : incidence_(std::move(incidence)),
      edge_length_(std::move(edge_length)),
      roads_(std::move(roads)) {
  if (incidence_.rows() < 1) throw InvalidInput("network needs a market");
  if (edge_length_.size() != incidence_.cols()) {
    throw InvalidInput("edge_length has " + std::to_string(edge_length_.size()) +
                       " entries for " + std::to_string(incidence_.cols()) +
                       " edges");
  }
  for (Eigen::Index e = 0; e < incidence_.cols(); ++e) {
    int plus = 0, minus = 0;
    for (Eigen::Index v = 0; v < incidence_.rows(); ++v) {
      double a = incidence_(v, e);
      if (a == 1.0) {
        ++plus;
      } else if (a == -1.0) {
        ++minus;
      } else if (a != 0.0) {
        throw InvalidInput("incidence entry (" + std::to_string(v) + ", " +
                           std::to_string(e) + ") is not in {-1, 0, 1}");
      }
    }
    if (plus != 1 || minus != 1) {
      throw InvalidInput("incidence column " + std::to_string(e) +
                         " needs exactly one +1 and one -1");
    }
    double rho = edge_length_(e);
    if (!(rho > 0.0 && rho <= 1.0)) {
      throw InvalidInput("edge length " + std::to_string(e) +
                         " is outside (0, 1]");
    }
  }
  for (const Road& r : roads_) {
    if (r.u < 0 || r.v < 0 || r.u >= vertices() || r.v >= vertices() ||
        r.u == r.v) {
      throw InvalidInput("road joins invalid markets");
    }
    if (!(r.length > 0.0 && r.length <= 1.0)) {
      throw InvalidInput("road length is outside (0, 1]");
    }
  }
}

TransportNetwork TransportNetwork::from_roads(int vertices,
                                              std::vector<Road> roads,
                                              bool two_columns) {
  if (vertices < 1) throw InvalidInput("network needs a market");
  const Eigen::Index per_road = two_columns ? 2 : 1;
  const auto cols = static_cast<Eigen::Index>(roads.size()) * per_road;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(vertices, cols);
  Eigen::VectorXd len(cols);
  Eigen::Index e = 0;
  for (const Road& r : roads) {
    if (r.u < 0 || r.v < 0 || r.u >= vertices || r.v >= vertices || r.u == r.v) {
      throw InvalidInput("road (" + std::to_string(r.u + 1) + ", " +
                         std::to_string(r.v + 1) + ") joins invalid markets");
    }
    b(r.u, e) = -1.0;
    b(r.v, e) = 1.0;
    len(e++) = r.length;
    if (two_columns) {
      b(r.v, e) = -1.0;
      b(r.u, e) = 1.0;
      len(e++) = r.length;
    }
  }
  return TransportNetwork(std::move(b), std::move(len), std::move(roads));
}

ScalarCost ScalarCost::canonical(double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidInput("cost scale must be positive and finite");
  }
  return ScalarCost{
      [scale](double q) { return scale * q * q / (1.0 + q); },
      [scale](double q) { return scale * (1.0 - 1.0 / ((1.0 + q) * (1.0 + q))); },
      [scale](double q) { return 2.0 * scale / ((1.0 + q) * (1.0 + q) * (1.0 + q)); },
  };
}

ScalarCost ScalarCost::linear_minus_discount(
    double beta, std::function<double(double)> gamma,
    std::function<double(double)> dgamma,
    std::function<double(double)> d2gamma) {
  if (!gamma || !dgamma || !d2gamma) {
    throw InvalidInput("discount needs value and two derivative oracles");
  }
  return ScalarCost{
      [beta, gamma](double q) { return beta * q - gamma(q); },
      [beta, dgamma](double q) { return beta - dgamma(q); },
      [d2gamma](double q) { return -d2gamma(q); },
  };
}

CournotCost::CournotCost(Eigen::MatrixXd selection, ScalarCost production,
                         std::vector<ScalarCost> transport, PriceModel price)
    : selection_(std::move(selection)),
      production_(std::move(production)),
      transport_(std::move(transport)),
      price_(std::move(price)) {
  if (static_cast<Eigen::Index>(transport_.size()) + 1 != selection_.cols()) {
    throw InvalidInput("one transport cost per edge is required");
  }
}

Eigen::VectorXd CournotCost::prices(const Eigen::VectorXd& aggregate) const {
  if (const auto* affine = std::get_if<AffinePrice>(&price_)) {
    return affine->intercept - affine->slope * aggregate;
  }
  const auto& sep = std::get<SeparablePrice>(price_);
  Eigen::VectorXd p(aggregate.size());
  for (Eigen::Index v = 0; v < aggregate.size(); ++v) {
    p(v) = sep.markets[v].p(aggregate(v));
  }
  return p;
}

double CournotCost::value(const Eigen::VectorXd& own,
                          const Eigen::VectorXd& aggregate) const {
  const auto edges = static_cast<Eigen::Index>(transport_.size());
  double j = production_.value(own(edges));
  for (Eigen::Index e = 0; e < edges; ++e) j += transport_[e].value(own(e));
  return j - prices(aggregate).dot(selection_ * own);
}

Eigen::VectorXd CournotCost::grad_own(const Eigen::VectorXd& own,
                                      const Eigen::VectorXd& aggregate) const {
  const auto edges = static_cast<Eigen::Index>(transport_.size());
  Eigen::VectorXd g(edges + 1);
  for (Eigen::Index e = 0; e < edges; ++e) g(e) = transport_[e].d1(own(e));
  g(edges) = production_.d1(own(edges));
  g.noalias() -= selection_.transpose() * prices(aggregate);
  return g;
}

Eigen::VectorXd CournotCost::grad_aggregate(
    const Eigen::VectorXd& own, const Eigen::VectorXd& aggregate) const {
  Eigen::VectorXd sales = selection_ * own;
  if (const auto* affine = std::get_if<AffinePrice>(&price_)) {
    return affine->slope.transpose() * sales;
  }
  const auto& sep = std::get<SeparablePrice>(price_);
  Eigen::VectorXd g(sales.size());
  for (Eigen::Index v = 0; v < sales.size(); ++v) {
    g(v) = -sep.markets[v].dp(aggregate(v)) * sales(v);
  }
  return g;
}

Eigen::VectorXd CournotCost::cost_curvature(const Eigen::VectorXd& own) const {
  const auto edges = static_cast<Eigen::Index>(transport_.size());
  Eigen::VectorXd c(edges + 1);
  for (Eigen::Index e = 0; e < edges; ++e) c(e) = transport_[e].d2(own(e));
  c(edges) = production_.d2(own(edges));
  return c;
}

Eigen::MatrixXd selection_matrix(const TransportNetwork& network, int location) {
  if (location < 0 || location >= network.vertices()) {
    throw InvalidInput("firm location " + std::to_string(location + 1) +
                       " is not a market");
  }
  Eigen::MatrixXd h(network.vertices(), network.edges() + 1);
  h.leftCols(network.edges()) = network.incidence();
  h.col(network.edges()).setZero();
  h(location, network.edges()) = 1.0;
  return h;
}

CournotGame build_cournot_game(const TransportNetwork& network,
                               std::vector<FirmSpec> firms, PriceModel price,
                               const Eigen::VectorXd& market_capacity,
                               TransportRule rule) {
  const int markets = network.vertices();
  const int edges = network.edges();
  if (firms.empty()) throw InvalidInput("at least one firm is required");
  if (market_capacity.size() != markets) {
    throw InvalidInput("market capacity has " +
                       std::to_string(market_capacity.size()) +
                       " entries for " + std::to_string(markets) + " markets");
  }
  double max_cap = 0.0;
  for (std::size_t i = 0; i < firms.size(); ++i) {
    const FirmSpec& f = firms[i];
    if (!(f.capacity > 0.0) || !std::isfinite(f.capacity)) {
      throw InvalidInput("firm " + std::to_string(i + 1) +
                         " needs a positive finite capacity");
    }
    if (f.location < 0 || f.location >= markets) {
      throw InvalidInput("firm " + std::to_string(i + 1) + " location " +
                         std::to_string(f.location + 1) + " is not a market");
    }
    if (!f.transport.empty() && static_cast<int>(f.transport.size()) != edges) {
      throw InvalidInput("firm " + std::to_string(i + 1) +
                         " needs one transport cost per edge");
    }
    max_cap = std::max(max_cap, f.capacity);
  }
  check_price(price, markets, max_cap);

  std::vector<int> constrained;
  for (int v = 0; v < markets; ++v) {
    double k = market_capacity(v);
    if (std::isnan(k) || !(k > 0.0)) {
      throw InvalidInput("market capacity " + std::to_string(v + 1) +
                         " must be positive");
    }
    if (std::isfinite(k)) constrained.push_back(v);
  }

  std::vector<AgentSpec> agents;
  agents.reserve(firms.size());
  for (FirmSpec& f : firms) {
    if (f.transport.empty()) {
      f.transport.reserve(edges);
      for (int e = 0; e < edges; ++e) {
        double scale = rule == TransportRule::Length ? network.edge_length()(e) : 1.0;
        f.transport.push_back(ScalarCost::canonical(scale));
      }
    }
    Eigen::MatrixXd h = selection_matrix(network, f.location);
    const Eigen::Index n = edges + 1;
    // H x >= 0 written as -H x <= 0.
    LocalSet set(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Constant(n, f.capacity),
                 -h, Eigen::VectorXd::Zero(markets));
    auto cost = std::make_shared<CournotCost>(h, f.production, f.transport, price);
    agents.push_back(AgentSpec{std::move(set), std::move(h), Eigen::VectorXd(), std::move(cost)});
  }

  const auto rows = static_cast<Eigen::Index>(constrained.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, markets);
  Eigen::VectorXd b(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    a(r, constrained[r]) = 1.0;
    b(r) = market_capacity(constrained[r]);
  }
  GameSpec game(std::move(agents), std::move(a), std::move(b));
  return CournotGame{std::move(game), network, std::move(firms), std::move(price),
                     std::move(constrained)};
}

Eigen::MatrixXd price_jacobian_bound(const CournotGame& cg,
                                     const CommMatrix& comm, int rounds) {
  const auto* affine = std::get_if<AffinePrice>(&cg.price);
  if (affine == nullptr) {
    throw Unsupported("closed-form constants need an affine price; use the "
                      "sampled estimators instead");
  }
  const GameSpec& game = cg.game;
  const int n_agents = game.agents();
  if (comm.size() != n_agents) {
    throw InvalidInput("communication matrix size does not match the agents");
  }
  if (rounds < 1) throw InvalidInput("rounds must be at least 1");
  const Eigen::MatrixXd& tn = comm.power(rounds);
  const Eigen::MatrixXd& d = affine->slope;

  // Block (i, j) of the middle factor is T^nu_ij D, plus T^nu_ii D^T on the
  // diagonal; H_blkd then acts blockwise.
  std::vector<Eigen::Index> offset(n_agents + 1, 0);
  for (int i = 0; i < n_agents; ++i) offset[i + 1] = offset[i] + game.strategy_dim(i);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(offset.back(), offset.back());
  for (int i = 0; i < n_agents; ++i) {
    const Eigen::MatrixXd& hi = game.agent(i).selection;
    for (int j = 0; j < n_agents; ++j) {
      if (tn(i, j) == 0.0) continue;
      Eigen::MatrixXd mid = tn(i, j) * d;
      if (i == j) mid += tn(i, i) * d.transpose();
      m.block(offset[i], offset[j], game.strategy_dim(i), game.strategy_dim(j)) =
          hi.transpose() * mid * game.agent(j).selection;
    }
  }
  return m;
}

CournotConstants cournot_constants(const CournotGame& cg, const CommMatrix& comm,
                                   int rounds) {
  Eigen::MatrixXd m = price_jacobian_bound(cg, comm, rounds);
  double rmax = 0.0;
  for (const FirmSpec& f : cg.firms) rmax = std::max(rmax, f.capacity);
  CournotConstants out{};
  out.alpha = 4.0 / std::pow(1.0 + rmax, 3);
  out.lipschitz = max_sym_eig(m);
  const Eigen::MatrixXd& a = cg.game.coupling_matrix();
  if (a.size() == 0) {
    out.norm_A = 0.0;
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    out.norm_A = svd.singularValues()(0);
  }
  return out;
}

PriceMatrix build_price_matrix(const TransportNetwork& network, double base,
                               double self_weight, double neighbor_factor) {
  const int markets = network.vertices();
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(markets, markets) * self_weight;
  std::vector<Road> roads = network.roads();
  if (roads.empty()) {
    // Recover roads from incidence columns when none were recorded.
    for (int e = 0; e < network.edges(); ++e) {
      Road r;
      for (int v = 0; v < markets; ++v) {
        if (network.incidence()(v, e) < 0) r.u = v;
        if (network.incidence()(v, e) > 0) r.v = v;
      }
      r.length = network.edge_length()(e);
      roads.push_back(r);
    }
  }
  Eigen::MatrixXd shortest = Eigen::MatrixXd::Constant(
      markets, markets, std::numeric_limits<double>::infinity());
  for (const Road& r : roads) {
    shortest(r.u, r.v) = std::min(shortest(r.u, r.v), r.length);
    shortest(r.v, r.u) = shortest(r.u, r.v);
  }
  for (int h = 0; h < markets; ++h) {
    for (int k = 0; k < markets; ++k) {
      if (h != k && std::isfinite(shortest(h, k))) {
        d(h, k) = neighbor_factor * (1.0 - shortest(h, k));
      }
    }
  }
  PriceMatrix out;
  out.price = AffinePrice{d, Eigen::VectorXd::Constant(markets, base)};
  out.min_eigenvalue = min_sym_eig(d);
  out.positive_semidefinite = out.min_eigenvalue >= -kPsdTolerance;
  return out;
}

CommMatrix build_ring_comm(int agents) {
  if (agents < 3) throw InvalidInput("a ring needs at least 3 agents");
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(agents, agents);
  for (int i = 0; i < agents; ++i) {
    t(i, (i + 1) % agents) = 0.5;
    t(i, (i + agents - 1) % agents) = 0.5;
  }
  return CommMatrix(std::move(t));
}

Example build_small_example(bool coupled) {
  std::vector<Road> roads{{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}};
  TransportNetwork net = TransportNetwork::from_roads(5, std::move(roads));
  std::vector<FirmSpec> firms(3);
  const int locations[] = {0, 2, 4};
  for (int i = 0; i < 3; ++i) {
    firms[i].location = locations[i];
    firms[i].capacity = 5.0;
  }
  AffinePrice price{Eigen::MatrixXd::Identity(5, 5), Eigen::VectorXd::Constant(5, 10.0)};
  Eigen::VectorXd cap = Eigen::VectorXd::Constant(5, std::numeric_limits<double>::infinity());
  cap(2) = coupled ? 1.0 / 3.0 : 1e6;
  CournotGame cg = build_cournot_game(net, std::move(firms), std::move(price), cap,
                                      TransportRule::Unit);
  Eigen::Matrix3d t;
  t << 2.0 / 3, 1.0 / 3, 0.0,
       1.0 / 3, 1.0 / 3, 1.0 / 3,
       0.0, 1.0 / 3, 2.0 / 3;
  return Example{std::move(cg), CommMatrix(t)};
}

LargeInstance build_network_instance(const RoadGraph& graph,
                                     const std::vector<int>& locations,
                                     double capacity, double market_capacity,
                                     bool two_columns) {
  if (locations.empty()) throw InvalidInput("at least one firm is required");
  TransportNetwork net = TransportNetwork::from_roads(graph.vertices, graph.roads,
                                                      two_columns);
  PriceMatrix pm = build_price_matrix(net);
  std::vector<FirmSpec> firms(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) {
    firms[i].location = locations[i];
    firms[i].capacity = capacity;
  }
  Eigen::VectorXd cap = Eigen::VectorXd::Constant(
      graph.vertices, market_capacity / static_cast<double>(locations.size()));
  CournotGame cg = build_cournot_game(net, std::move(firms), pm.price, cap,
                                      TransportRule::Length);
  return LargeInstance{std::move(cg), std::move(pm)};
}

}  // namespace aggnash::cournot
