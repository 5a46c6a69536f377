#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aggnash/cournot.hpp"
#include "aggnash/solver.hpp"

namespace aggnash::cli {

inline constexpr const char* kToolVersion = "0.3.0";

/// Raised for malformed or inconsistent configuration; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GameSource { Small, Network };

struct GameConfig {
  GameSource source = GameSource::Small;
  bool coupled = false;  ///< small only

  /// network only: graph file, or empty for the seeded surrogate
  std::filesystem::path graph;
  int surrogate_vertices = 43;
  int surrogate_roads = 51;
  std::uint64_t surrogate_seed = 2024;

  /// network only: firm file, or 1-based locations sharing one capacity
  std::filesystem::path firms;
  std::vector<int> locations;
  double capacity = 10.0;
  /// Total a market can absorb; the average is capped at this / N.
  /// Infinite means no coupling.
  double market_capacity = 1.5;
  bool two_columns = true;
  cournot::TransportRule transport = cournot::TransportRule::Length;

  /// "small", "ring", "uniform" or a matrix file
  std::string comm = "small";
};

struct QualityConfig {
  bool compute = true;
  double feasibility_tol = 1e-6;
  double best_response_tol = 1e-8;
};

struct ExperimentConfig {
  GameConfig game;
  SolverConfig solver;
  std::vector<int> sweep;
  QualityConfig quality;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  int monotonicity_samples = 20;

  /// Canonical key = value listing of every effective setting; its hash
  /// tags every output file.
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// Flat INI text: [section] headers, key = value lines, '#' or ';'
/// comments. Relative paths resolve against base_dir. Errors name the line
/// and the offending section.key.
ExperimentConfig parse_config(std::istream& in,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

}  // namespace aggnash::cli
