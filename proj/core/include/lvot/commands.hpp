#pragma once

// Subcommands behind the lvot tool. Each returns a process exit code:
// 0 success or converged, 2 complete but not converged (or partial report),
// and throws on hard failures (the tool maps exceptions to 1).

#include "lvot/config.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lvot {

struct CommandOptions {
  std::filesystem::path out_dir;                  // empty: config output.directory
  std::optional<std::uint64_t> seed;              // overrides config seed
  std::optional<std::size_t> paths;               // overrides verify.n_paths
  std::optional<std::size_t> scale_override;      // single-scale ladder with this N_T
  std::optional<std::filesystem::path> instruments;  // default <out>/instruments.csv
  std::optional<std::filesystem::path> surface;      // default <out>/surface.csv
  std::vector<std::filesystem::path> inputs;      // report: residual logs
  std::ostream* log = nullptr;                    // progress messages
};

std::filesystem::path output_dir(const RunConfig& config, const CommandOptions& options);

/// Writes <out>/instruments.csv.
int cmd_generate_market(const RunConfig& config, const CommandOptions& options);

/// Runs the scale ladder on the instrument file (generated from the config
/// when absent) and writes residual logs, surfaces and comparison tables.
int cmd_calibrate(const RunConfig& config, const CommandOptions& options);

/// Monte-Carlo audit of a surface file; writes <out>/mc_audit.csv. Refuses
/// to run without a seed.
int cmd_verify(const RunConfig& config, const CommandOptions& options);

/// Merges per-scale residual logs into <out>/convergence.csv with a scale
/// column and a boundary marker on the first row of every scale after the
/// first. Missing inputs are listed and skipped.
int cmd_report(const RunConfig& config, const CommandOptions& options);

/// Residual logs in `dir` named residuals_scale_<N>.csv, sorted by N.
std::vector<std::filesystem::path> find_residual_logs(const std::filesystem::path& dir);

}  // namespace lvot
