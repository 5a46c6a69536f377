#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace aggnash {

/// Largest agent count accepted by validate_comm_matrix. The primitivity
/// check squares dense N x N matrices up to log2((N-1)^2 + 1) times.
inline constexpr int kMaxValidatedAgents = 2000;

/// Absolute tolerance on every row and column sum.
inline constexpr double kStochasticTolerance = 1e-12;

/// Row-stochastic weights of the communication network: entry (i, j) is the
/// weight agent i gives to what it receives from agent j.
///
/// Entries are immutable after construction. Powers T^nu are memoized; the
/// cache is shared between copies and guarded for concurrent readers.
class CommMatrix {
 public:
  /// Throws InvalidInput for a non-square matrix or an entry outside [0, 1]
  /// (the message names the first offending index).
  explicit CommMatrix(Eigen::MatrixXd entries);

  /// (1/N) 1 1^T: one round of communication yields the exact average.
  static CommMatrix uniform(int agents);

  int size() const noexcept { return static_cast<int>(entries_.rows()); }
  const Eigen::MatrixXd& entries() const noexcept { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }

  /// T^rounds, computed by repeated squaring and memoized. rounds >= 0.
  const Eigen::MatrixXd& power(int rounds) const;

 private:
  struct PowerCache {
    std::mutex mutex;
    std::map<int, Eigen::MatrixXd> powers;
  };

  Eigen::MatrixXd entries_;
  std::shared_ptr<PowerCache> cache_;
};

struct CommValidation {
  bool doubly_stochastic = false;
  bool primitive = false;
  /// Smallest power found entrywise positive during the squaring search,
  /// 0 when none was found.
  int positive_power = 0;
  double max_row_error = 0.0;
  double max_col_error = 0.0;
};

/// Checks double stochasticity and primitivity. Throws InvalidInput when the
/// matrix has more than kMaxValidatedAgents rows.
CommValidation validate_comm_matrix(const CommMatrix& comm);

enum class Direction {
  In,   ///< agent i receives sum_j T_ij v^j
  Out,  ///< agent i receives sum_j T_ji v^j
};

/// Runs `rounds` synchronous neighbor-averaging rounds. Each round only reads
/// values produced by the previous round.
std::vector<Eigen::VectorXd> consensus_rounds(
    const CommMatrix& comm, std::span<const Eigen::VectorXd> values,
    int rounds, Direction direction);

/// max_ij |[T^rounds]_ij - 1/N|.
double consensus_gap(const CommMatrix& comm, int rounds);

/// Dense text format: N on the first line, then N rows of N reals.
CommMatrix read_comm_matrix(std::istream& in);
CommMatrix load_comm_matrix(const std::filesystem::path& path);

}  // namespace aggnash
