#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "aggnash/comm.hpp"
#include "aggnash/game.hpp"

namespace aggnash::cournot {

/// Undirected road between two markets (0-based), length normalized to (0, 1].
struct Road {
  int u = 0;
  int v = 0;
  double length = 1.0;
};

/// Directed transportation graph as a V x E incidence matrix: column e has
/// -1 at the vertex it leaves and +1 at the vertex it enters.
class TransportNetwork {
 public:
  /// Throws InvalidInput unless every column has exactly one +1, one -1 and
  /// zeros elsewhere, and every length lies in (0, 1].
  TransportNetwork(Eigen::MatrixXd incidence, Eigen::VectorXd edge_length,
                   std::vector<Road> roads = {});

  /// One column per road direction when two_columns is true (flows are
  /// nonnegative, so both directions need a column); otherwise a single
  /// column oriented u -> v.
  static TransportNetwork from_roads(int vertices, std::vector<Road> roads,
                                     bool two_columns = true);

  int vertices() const noexcept { return static_cast<int>(incidence_.rows()); }
  int edges() const noexcept { return static_cast<int>(incidence_.cols()); }
  const Eigen::MatrixXd& incidence() const noexcept { return incidence_; }
  const Eigen::VectorXd& edge_length() const noexcept { return edge_length_; }
  const std::vector<Road>& roads() const noexcept { return roads_; }

 private:
  Eigen::MatrixXd incidence_;
  Eigen::VectorXd edge_length_;
  std::vector<Road> roads_;
};

/// Strongly convex scalar cost with its first two derivatives.
struct ScalarCost {
  std::function<double(double)> value;
  std::function<double(double)> d1;
  std::function<double(double)> d2;

  /// scale * (q - (1 - 1/(1+q))) = scale * q^2 / (1+q).
  static ScalarCost canonical(double scale);
  /// beta * q - gamma(q) with gamma concave increasing, gamma' < beta.
  static ScalarCost linear_minus_discount(double beta,
                                          std::function<double(double)> gamma,
                                          std::function<double(double)> dgamma,
                                          std::function<double(double)> d2gamma);
};

struct FirmSpec {
  int location = 0;  ///< 0-based market index
  double capacity = 1.0;
  ScalarCost production = ScalarCost::canonical(2.0);
  /// One cost per incidence column; empty selects the canonical form
  /// according to TransportRule.
  std::vector<ScalarCost> transport;
};

enum class TransportRule {
  Unit,    ///< c_e(t) = t - (1 - 1/(1+t))
  Length,  ///< c_e(t) = rho_e (t - (1 - 1/(1+t)))
};

/// p(sigma) = intercept - slope * sigma.
struct AffinePrice {
  Eigen::MatrixXd slope;
  Eigen::VectorXd intercept;
};

/// p_v depends on sigma_v only.
struct MarketPrice {
  std::function<double(double)> p;
  std::function<double(double)> dp;
  std::function<double(double)> d2p;
};
struct SeparablePrice {
  std::vector<MarketPrice> markets;
};

using PriceModel = std::variant<AffinePrice, SeparablePrice>;

/// J^i(x, s) = a(r) + sum_e c_e(t_e) - p(s)^T H^i x with x = [t; r].
class CournotCost final : public CostFunction {
 public:
  CournotCost(Eigen::MatrixXd selection, ScalarCost production,
              std::vector<ScalarCost> transport, PriceModel price);

  double value(const Eigen::VectorXd& own,
               const Eigen::VectorXd& aggregate) const override;
  Eigen::VectorXd grad_own(const Eigen::VectorXd& own,
                           const Eigen::VectorXd& aggregate) const override;
  Eigen::VectorXd grad_aggregate(
      const Eigen::VectorXd& own,
      const Eigen::VectorXd& aggregate) const override;

  /// Diagonal second derivatives of the production and transport costs.
  Eigen::VectorXd cost_curvature(const Eigen::VectorXd& own) const;

 private:
  Eigen::VectorXd prices(const Eigen::VectorXd& aggregate) const;

  Eigen::MatrixXd selection_;
  ScalarCost production_;
  std::vector<ScalarCost> transport_;
  PriceModel price_;
};

/// A built game together with the data it came from.
struct CournotGame {
  GameSpec game;
  TransportNetwork network;
  std::vector<FirmSpec> firms;
  PriceModel price;
  /// Markets carrying a coupling row, in row order.
  std::vector<int> constrained_markets;
};

/// H^i = [B, e_loc]: sales per market of a strategy x = [t; r].
Eigen::MatrixXd selection_matrix(const TransportNetwork& network, int location);

/// Strategies x^i = [t^i; r^i] in {0 <= x <= capacity, H^i x >= 0}; one
/// coupling row per market with finite capacity (sigma_v <= K_v).
CournotGame build_cournot_game(const TransportNetwork& network,
                               std::vector<FirmSpec> firms, PriceModel price,
                               const Eigen::VectorXd& market_capacity,
                               TransportRule rule = TransportRule::Unit);

struct CournotConstants {
  double alpha;      ///< 4 / (1 + max capacity)^3
  double lipschitz;  ///< top eigenvalue of the price-part Jacobian bound
  double norm_A;     ///< spectral norm of the coupling matrix
};

/// Closed-form constants for the step-size bound. Affine prices only;
/// throws Unsupported otherwise.
CournotConstants cournot_constants(const CournotGame& cg, const CommMatrix& comm,
                                   int rounds);

/// H_blkd^T [(I_N kron D)(T^nu kron I_V) + diag(T^nu) kron D^T] H_blkd.
Eigen::MatrixXd price_jacobian_bound(const CournotGame& cg,
                                     const CommMatrix& comm, int rounds);

struct PriceMatrix {
  AffinePrice price;
  double min_eigenvalue = 0.0;
  bool positive_semidefinite = false;
};

/// D_hh = self_weight, D_hk = neighbor_factor (1 - rho) for a road of
/// normalized length rho between h and k (the shortest road when several
/// exist), intercept = base * 1. PSD-ness is reported, not enforced.
PriceMatrix build_price_matrix(const TransportNetwork& network,
                               double base = 10.0, double self_weight = 1.0,
                               double neighbor_factor = 0.3);

/// Symmetric ring: each agent weighs itself 0 and both neighbors 0.5.
CommMatrix build_ring_comm(int agents);

struct Example {
  CournotGame cournot;
  CommMatrix comm;
};

/// Five markets on a chain, firms at markets 1, 3, 5 with capacity 5,
/// p_v = 10 - sigma_v, and the 3-agent path communication matrix. With
/// coupling the third market is capped at sigma_3 <= 1/3; without it the
/// same row carries an inactive bound of 1e6.
Example build_small_example(bool coupled);

/// Road graph as read from disk, lengths already normalized by the maximum.
struct RoadGraph {
  int vertices = 0;
  std::vector<Road> roads;
  /// Empty, or one (x, y) per vertex.
  std::vector<Eigen::Vector2d> coordinates;
};

/// Header "V E", E lines "u v length" (1-based, length > 0), then optionally
/// V lines "v x y". Lines starting with '#' and blank lines are skipped.
/// Errors carry the line number.
RoadGraph read_road_graph(std::istream& in);
RoadGraph load_road_graph(const std::filesystem::path& path);
void write_road_graph(std::ostream& out, const RoadGraph& graph);

/// Lines "location capacity" with 1-based locations.
std::vector<FirmSpec> read_firms(std::istream& in, int vertices);
std::vector<FirmSpec> load_firms(const std::filesystem::path& path, int vertices);

/// Deterministic connected planar graph: seeded uniform points in the unit
/// square joined by their Euclidean minimum spanning tree, then the shortest
/// remaining pairs whose segments cross no existing road until `roads` roads
/// exist.
RoadGraph make_surrogate_graph(int vertices, int roads, std::uint64_t seed);

/// Firms with canonical costs at the given 0-based locations, length-scaled
/// transport and the neighbor-discount price matrix. Every market can absorb
/// market_capacity in total, i.e. the average is capped at
/// market_capacity / N.
struct LargeInstance {
  CournotGame cournot;
  PriceMatrix price;
};
LargeInstance build_network_instance(const RoadGraph& graph,
                                     const std::vector<int>& locations,
                                     double capacity, double market_capacity,
                                     bool two_columns = true);

}  // namespace aggnash::cournot
