#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "aggnash/cli/config.hpp"
#include "aggnash/comm.hpp"
#include "aggnash/cournot.hpp"
#include "aggnash/quality.hpp"

namespace aggnash::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct Instance {
  cournot::CournotGame cournot;
  CommMatrix comm;
  /// Set for network instances built with the neighbor-discount rule.
  std::optional<cournot::PriceMatrix> price;
};

Instance build_instance(const ExperimentConfig& cfg);

/// "# aggnash <version> config <hash>"; the first line of every output file.
std::string provenance_line(const ExperimentConfig& cfg);

struct QualitySummary {
  QualityReport report;
  /// The profile violated the coupling, so each agent's admissible set was
  /// loosened to contain its current strategy.
  bool relaxed_coupling = false;
  double vi_residual = 0.0;
};

/// Epsilon-Nash report against the exact average plus the natural-map
/// residual for the configured rounds.
QualitySummary evaluate_quality(const Instance& inst, const ExperimentConfig& cfg,
                                const StrategyProfile& profile);

/// CSV "agent,component,value" with 1-based indices; '#' lines are skipped.
StrategyProfile read_profile_csv(std::istream& in, const GameSpec& game);
void write_profile_csv(std::ostream& out, const StrategyProfile& profile);

int cmd_validate(const ExperimentConfig& cfg, std::ostream& out);
int cmd_solve(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);
int cmd_epsilon(const ExperimentConfig& cfg, const std::filesystem::path& profile,
                std::ostream& log);

}  // namespace aggnash::cli
