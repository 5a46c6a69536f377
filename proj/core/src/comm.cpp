#include "aggnash/comm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "aggnash/errors.hpp"

namespace aggnash {

namespace {

std::string index_string(Eigen::Index i, Eigen::Index j) {
  std::ostringstream os;
  os << "(" << i << ", " << j << ")";
  return os.str();
}

bool all_positive(const Eigen::MatrixXd& m) { return (m.array() > 0.0).all(); }

}  // namespace

CommMatrix::CommMatrix(Eigen::MatrixXd entries)
    : entries_(std::move(entries)), cache_(std::make_shared<PowerCache>()) {
  if (entries_.rows() != entries_.cols()) {
    std::ostringstream os;
    os << "communication matrix must be square, got " << entries_.rows()
       << "x" << entries_.cols();
    throw InvalidInput(os.str());
  }
  if (entries_.rows() == 0) {
    throw InvalidInput("communication matrix must have at least one agent");
  }
  for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
    for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
      const double v = entries_(i, j);
      if (!std::isfinite(v)) {
        throw InvalidInput("communication matrix entry " + index_string(i, j) +
                           " is not finite");
      }
      if (v < 0.0) {
        throw InvalidInput("communication matrix entry " + index_string(i, j) +
                           " is negative");
      }
      if (v > 1.0) {
        throw InvalidInput("communication matrix entry " + index_string(i, j) +
                           " exceeds 1");
      }
    }
  }
}

CommMatrix CommMatrix::uniform(int agents) {
  if (agents < 1) throw InvalidInput("uniform communication needs N >= 1");
  return CommMatrix(Eigen::MatrixXd::Constant(agents, agents, 1.0 / agents));
}

const Eigen::MatrixXd& CommMatrix::power(int rounds) const {
  if (rounds < 0) throw InvalidInput("matrix power needs rounds >= 0");
  std::lock_guard lock(cache_->mutex);
  auto& powers = cache_->powers;
  if (auto it = powers.find(rounds); it != powers.end()) return it->second;

  const auto n = entries_.rows();
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd base = entries_;
  for (int e = rounds; e > 0; e >>= 1) {
    if (e & 1) result = result * base;
    if (e > 1) base = base * base;
  }
  // std::map never moves its nodes, so the reference stays valid.
  return powers.emplace(rounds, std::move(result)).first->second;
}

CommValidation validate_comm_matrix(const CommMatrix& comm) {
  const int n = comm.size();
  if (n > kMaxValidatedAgents) {
    throw InvalidInput("validation is capped at " +
                       std::to_string(kMaxValidatedAgents) + " agents, got " +
                       std::to_string(n));
  }
  const Eigen::MatrixXd& t = comm.entries();

  CommValidation report;
  report.max_row_error = (t.rowwise().sum().array() - 1.0).abs().maxCoeff();
  report.max_col_error = (t.colwise().sum().array() - 1.0).abs().maxCoeff();
  report.doubly_stochastic = report.max_row_error <= kStochasticTolerance &&
                             report.max_col_error <= kStochasticTolerance;

  // A zero row or column rules out irreducibility. Otherwise positivity of
  // T^k persists for all larger k, so repeated squaring up to the Wielandt
  // bound (N-1)^2 + 1 decides primitivity.
  const Eigen::MatrixXd pattern = (t.array() > 0.0).cast<double>().matrix();
  const bool empty_line =
      ((pattern.rowwise().sum().array() == 0.0).any()) ||
      ((pattern.colwise().sum().array() == 0.0).any());
  if (empty_line) return report;

  const long wielandt = static_cast<long>(n - 1) * (n - 1) + 1;
  Eigen::MatrixXd current = pattern;
  long exponent = 1;
  while (true) {
    if (all_positive(current)) {
      report.primitive = true;
      report.positive_power = static_cast<int>(exponent);
      break;
    }
    if (exponent >= wielandt) break;
    current = current * current;
    // Clamp to a 0/1 pattern so magnitudes never overflow.
    current = (current.array() > 0.0).cast<double>().matrix();
    exponent *= 2;
  }
  return report;
}

std::vector<Eigen::VectorXd> consensus_rounds(
    const CommMatrix& comm, std::span<const Eigen::VectorXd> values,
    int rounds, Direction direction) {
  const int n = comm.size();
  if (static_cast<int>(values.size()) != n) {
    throw InvalidInput("consensus needs one vector per agent: expected " +
                       std::to_string(n) + ", got " +
                       std::to_string(values.size()));
  }
  if (rounds < 0) throw InvalidInput("consensus needs rounds >= 0");
  for (int i = 1; i < n; ++i) {
    if (values[i].size() != values[0].size()) {
      throw InvalidInput("consensus vectors differ in dimension at agent " +
                         std::to_string(i));
    }
  }

  std::vector<Eigen::VectorXd> current(values.begin(), values.end());
  std::vector<Eigen::VectorXd> next(current.size());
  const Eigen::MatrixXd& t = comm.entries();
  for (int r = 0; r < rounds; ++r) {
    for (int i = 0; i < n; ++i) {
      next[i].setZero(current[i].size());
      for (int j = 0; j < n; ++j) {
        const double w = direction == Direction::In ? t(i, j) : t(j, i);
        if (w != 0.0) next[i] += w * current[j];
      }
    }
    std::swap(current, next);
  }
  return current;
}

double consensus_gap(const CommMatrix& comm, int rounds) {
  const int n = comm.size();
  return (comm.power(rounds).array() - 1.0 / n).abs().maxCoeff();
}

CommMatrix read_comm_matrix(std::istream& in) {
  long n = 0;
  if (!(in >> n) || n < 1) {
    throw InvalidInput("comm matrix file: first token must be a positive N");
  }
  Eigen::MatrixXd m(n, n);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      if (!(in >> m(i, j))) {
        throw InvalidInput("comm matrix file: missing or malformed entry " +
                           index_string(i, j));
      }
    }
  }
  std::string extra;
  if (in >> extra) {
    throw InvalidInput("comm matrix file: trailing token '" + extra + "'");
  }
  return CommMatrix(std::move(m));
}

CommMatrix load_comm_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open comm matrix file " + path.string());
  return read_comm_matrix(in);
}

}  // namespace aggnash
