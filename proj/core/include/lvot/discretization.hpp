#pragma once

// Time and space discretisation of the log-price diffusion and the
// Euler-Maruyama reference chain built on it.
//
// All steps share one uniform space grid. The grid is anchored so that the
// initial log-price is a grid point; this keeps a Dirac initial law exact.

#include "lvot/market_model.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace lvot {

/// Stand-in for log(0). Large enough to vanish under exp() after a max-shift,
/// small enough that sums of a few of them stay finite.
inline constexpr double kLogZero = -1e300;

struct TimeGrid {
  std::size_t n_steps = 0;
  double step = 0.0;
  std::vector<double> times;                   // t_k = k * step, k = 0..n_steps
  std::vector<std::size_t> calibration_steps;  // grid index of each calibration time

  /// Throws DomainError when a calibration time falls off the grid.
  static TimeGrid uniform(double horizon, std::size_t n_steps,
                          std::span<const double> calibration_times = {});

  double horizon() const { return times.back(); }

  /// Instrument indices grouped by the step carrying their maturity.
  std::vector<std::vector<std::size_t>> calib_map(const InstrumentSet& set) const;
};

/// True when every calibration time is a multiple of horizon / n_steps.
bool calibration_aligned(double horizon, std::size_t n_steps,
                         std::span<const double> calibration_times);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct SpaceGrid {
  double lower = 0.0;
  double upper = 0.0;
  double dx = 0.0;
  std::size_t n_points = 0;
  Eigen::VectorXd points;

  static SpaceGrid uniform(double lower, double dx, std::size_t n_points);
  std::size_t nearest(double x) const;
};

/// Reference drift and volatility in log-price, one function pair per step,
/// with their extremes over the working domain.
struct Coefficients {
  std::function<double(std::size_t, double)> drift;
  std::function<double(std::size_t, double)> vol;
  std::vector<double> drift_min, drift_max, vol_min, vol_max;

  std::size_t n_steps() const { return vol_min.size(); }
  double min_vol() const;

  static Coefficients constant(double drift, double vol, std::size_t n_steps);
  /// State-independent volatility per step with drift -vol^2/2.
  static Coefficients martingale(std::vector<double> vol_per_step);
  /// Variance tables on the grid points (nearest-point lookup), drift -var/2.
  static Coefficients martingale_table(const SpaceGrid& grid,
                                       std::vector<Eigen::VectorXd> variance);
};

/// Piecewise-constant volatility; sigma[i] applies on (times[i-1], times[i]].
struct PiecewiseVol {
  std::vector<double> times;
  std::vector<double> sigma;

  double at(double t) const;
  /// Sampled at step midpoints of `grid`, as martingale coefficients.
  Coefficients coefficients(const TimeGrid& grid) const;
};

/// Per-step bounds [m_k - delta v_k, m_k + delta v_k], k = 0..n_steps, where
/// m_k and v_k accumulate drift and variance over the steps before k. The
/// lower bound uses the smallest drift, the upper bound the largest.
std::vector<Interval> truncate_domain(double m0, double v0, const Coefficients& coeffs,
                                      const TimeGrid& grid, double delta);

/// Common grid covering every interval, spacing min_vol * sqrt(h) / points_per_std,
/// with `anchor` on a grid point. Throws ResourceError when the point count
/// would exceed max_points; the error names `limiting_step`.
SpaceGrid build_space_grid(std::span<const Interval> bounds, double h, double min_vol,
                           double points_per_std, std::size_t max_points, double anchor,
                           std::size_t limiting_step = 0);
SpaceGrid build_space_grid(std::span<const Interval> bounds, double h,
                           const Coefficients& coeffs, double points_per_std,
                           std::size_t max_points, double anchor);

/// Initial law: a grid Dirac at x0 when stdev == 0, otherwise a discretised
/// Gaussian of that standard deviation.
struct InitialLaw {
  double x0 = 0.0;
  double stdev = 0.0;
};

/// Row-normalised log transition matrix stored in both orientations:
/// xy(i, j) = yx(j, i) = log P(x_i -> x_j).
struct LogKernel {
  Eigen::MatrixXd xy;
  Eigen::MatrixXd yx;
};

struct ReferenceMeasure {
  TimeGrid time;
  SpaceGrid space;
  Eigen::VectorXd rho0;
  Eigen::VectorXd log_rho0;             // kLogZero off the support
  std::vector<Eigen::VectorXd> drift;   // per step k = 0..n_steps-1
  std::vector<Eigen::VectorXd> vol;
  std::vector<std::shared_ptr<const LogKernel>> kernels;

  std::size_t n_steps() const { return time.n_steps; }
  std::size_t n_points() const { return space.n_points; }
  double h() const { return time.step; }
  const Eigen::MatrixXd& log_kernel(std::size_t k) const { return kernels.at(k)->xy; }
  Eigen::MatrixXd kernel(std::size_t k) const;

  /// rho0 pushed through the kernels, k = 0..n_steps.
  std::vector<Eigen::VectorXd> forward_marginals() const;
};

/// Gaussian kernels N(x + drift h, vol^2 h) evaluated on the grid and
/// renormalised per row. Steps with identical coefficients share storage.
ReferenceMeasure build_reference(const TimeGrid& time, const SpaceGrid& space,
                                 const Coefficients& coeffs, const InitialLaw& law);

/// Forward-variance bootstrap of ATM implied vols into a piecewise-constant
/// instantaneous volatility. Decreasing total variance throws DomainError.
PiecewiseVol bootstrap_reference_vol(std::span<const double> atm_vols,
                                     std::span<const double> calibration_times);

/// ATM implied vol per calibration time, interpolated linearly in
/// log-moneyness between the two quotes nearest the forward.
std::vector<double> atm_vols_from_instruments(const InstrumentSet& set, double forward);

/// Columns: step,t,lower,upper,n_points,vol_min,vol_max,drift_min,drift_max.
void write_reference_summary(std::ostream& out, const ReferenceMeasure& ref,
                             std::span<const Interval> step_bounds);

}  // namespace lvot
