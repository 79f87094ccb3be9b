#pragma once

// Coarse-to-fine time ladder. Each scale is solved from zero potentials; the
// local variance it calibrates, interpolated in time, becomes the reference
// volatility of the next scale. All scales share one space grid.

#include "lvot/discretization.hpp"
#include "lvot/market_model.hpp"
#include "lvot/operator.hpp"
#include "lvot/solvers.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace lvot {

/// Local variance per step on the common grid. Row k describes the
/// transition over [t_k, t_k + step] and is attached to its midpoint.
struct LocalVarianceTable {
  double step = 0.0;
  std::vector<double> times;              // t_k, k = 0..N-1
  SpaceGrid grid;
  std::vector<Eigen::VectorXd> variance;  // per step, on grid
  std::vector<std::vector<bool>> filled;  // point copied from a neighbour

  std::size_t n_steps() const { return variance.size(); }
  double midpoint(std::size_t k) const { return times.at(k) + 0.5 * step; }
  /// Nearest grid point in x, step containing t (clamped to the table).
  double lookup(double t, double x) const;
};

/// Conditional variance alpha - h beta^2 of every calibrated transition.
/// Points whose marginal mass is below rel_mass_floor times the largest one
/// take the value of the nearest well-supported point; every entry is
/// clipped below at variance_floor.
LocalVarianceTable extract_surface(const TiltedChain& chain, const PotentialSet& pot,
                                   const Propagators& props, double variance_floor = 1e-4,
                                   double rel_mass_floor = 1e-10);

/// Piecewise-linear interpolation in time between step midpoints, constant
/// beyond the first and last midpoints, evaluated at the midpoints of `target`.
std::vector<Eigen::VectorXd> refine(const LocalVarianceTable& table, const TimeGrid& target);

/// refine() packaged as martingale coefficients (drift -variance / 2).
Coefficients refine_coefficients(const LocalVarianceTable& table, const TimeGrid& target);

struct ScaleLadder {
  std::vector<std::size_t> step_counts{5, 10, 20};

  /// Throws DomainError unless counts increase and keep every calibration time on-grid.
  void validate(double horizon, const std::vector<double>& calibration_times) const;
};

struct LadderConfig {
  ScaleLadder ladder;
  double spot = 100.0;
  double initial_stdev = 0.0;  // 0: Dirac initial law
  double delta = 5.0;
  double points_per_std = 4.0;
  std::size_t max_points = 4096;
  double variance_floor = 1e-4;
  double c_mart = 1e4;
  SolverConfig solver;
};

struct ScaleResult {
  std::size_t n_steps = 0;
  RunReport report;
  LocalVarianceTable surface;
  std::vector<std::string> warnings;
};

struct LadderResult {
  SpaceGrid grid;
  std::vector<Interval> bounds;           // finest-scale truncation bounds
  PiecewiseVol initial_vol;               // bootstrapped reference volatility
  std::vector<ScaleResult> scales;
  std::unique_ptr<ReferenceMeasure> reference;  // of the last scale
  std::unique_ptr<SinkhornSolver> solver;       // of the last scale, holds its state
  bool converged = false;                 // every scale converged
};

/// Runs every scale of the ladder in order. Non-converged scales are kept
/// with a warning and the ladder continues.
LadderResult run_ladder(const LadderConfig& config, const InstrumentSet& instruments,
                        const std::function<void(const ScaleResult&)>& on_scale = {});

/// Columns: t,x,sigma2. One row per step and grid point; t is the step start.
void write_surface(std::ostream& out, const LocalVarianceTable& table);
/// The step is horizon / (number of distinct t values).
LocalVarianceTable read_surface(std::istream& in, double horizon);

}  // namespace lvot
