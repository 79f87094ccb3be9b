#pragma once

// Run configuration: a JSON document with one object per block. Every field
// is optional and defaults to the values below; unknown keys are rejected.

#include "lvot/market_model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lvot {

struct MarketBlock {
  SsviParams ssvi;
  double spot = 100.0;
  std::vector<double> calibration_times{0.2, 0.4, 0.6, 0.8, 1.0};
  StrikeRule strikes;

  bool operator==(const MarketBlock&) const = default;
};

struct DiscretizationBlock {
  double delta = 5.0;
  double points_per_std = 4.0;
  std::size_t max_points = 4096;
  double initial_stdev = 0.0;
  double variance_floor = 1e-4;

  bool operator==(const DiscretizationBlock&) const = default;
};

struct SolverBlock {
  double c_mart = 1e4;
  double gamma = 1e4;  // penalty weight written into generated instruments
  double stop_tol = 1e-9;
  std::size_t max_iterations = 2000;
  double newton_tol = 1e-12;
  int max_newton = 100;
  int max_halvings = 30;

  bool operator==(const SolverBlock&) const = default;
};

struct AccelerationBlock {
  bool enabled = true;
  std::size_t depth = 5;
  double ridge = 1e-10;
  bool relative_ridge = true;
  double tau = 2.0;

  bool operator==(const AccelerationBlock&) const = default;
};

struct LadderBlock {
  std::vector<std::size_t> step_counts{5, 10, 20, 40, 80};

  bool operator==(const LadderBlock&) const = default;
};

struct OutputBlock {
  std::string directory = "out";
  int verbosity = 1;
  std::vector<std::string> tables{"residuals", "surface", "implied_vols", "reference",
                                  "marginals", "moments"};

  bool emits(const std::string& table) const;
  bool operator==(const OutputBlock&) const = default;
};

struct VerifyBlock {
  std::size_t n_paths = 1'000'000;
  std::size_t block_size = 16384;

  bool operator==(const VerifyBlock&) const = default;
};

struct RunConfig {
  MarketBlock market;
  DiscretizationBlock discretization;
  SolverBlock solver;
  AccelerationBlock acceleration;
  LadderBlock ladder;
  OutputBlock output;
  VerifyBlock verify;
  std::optional<std::uint64_t> seed;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses and validates; errors carry dotted field paths such as "solver.c_mart".
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Pretty-printed JSON with every field present.
std::string serialize_config(const RunConfig& config);

}  // namespace lvot
