#include "lvot/discretization.hpp"

#include "lvot/errors.hpp"
#include "lvot/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace lvot {

namespace {

// Relative tolerance for deciding that a calibration time sits on the grid.
constexpr double kAlignTol = 1e-9;

bool on_grid(double t, double h, std::size_t n_steps, std::size_t* index) {
  const double q = t / h;
  const double r = std::round(q);
  if (std::abs(q - r) > kAlignTol * std::max(1.0, q) || r < 0.0 ||
      r > static_cast<double>(n_steps)) {
    return false;
  }
  if (index) *index = static_cast<std::size_t>(r);
  return true;
}

}  // namespace

TimeGrid TimeGrid::uniform(double horizon, std::size_t n_steps,
                           std::span<const double> calibration_times) {
  if (!(horizon > 0.0)) throw DomainError("time grid: horizon must be positive");
  if (n_steps == 0) throw DomainError("time grid: at least one step is required");
  TimeGrid grid;
  grid.n_steps = n_steps;
  grid.step = horizon / static_cast<double>(n_steps);
  grid.times.resize(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) grid.times[k] = grid.step * static_cast<double>(k);
  grid.times.back() = horizon;
  for (double t : calibration_times) {
    std::size_t index = 0;
    if (!on_grid(t, grid.step, n_steps, &index)) {
      throw DomainError("time grid: calibration time " + format_double(t) +
                        " is not a multiple of the step " + format_double(grid.step));
    }
    grid.calibration_steps.push_back(index);
  }
  return grid;
}

std::vector<std::vector<std::size_t>> TimeGrid::calib_map(const InstrumentSet& set) const {
  if (set.calibration_times.size() != calibration_steps.size()) {
    throw DomainError("time grid: built for a different set of calibration times");
  }
  std::vector<std::vector<std::size_t>> map(n_steps + 1);
  for (std::size_t i = 0; i < set.instruments.size(); ++i) {
    map.at(calibration_steps.at(set.instruments[i].maturity_index)).push_back(i);
  }
  return map;
}

bool calibration_aligned(double horizon, std::size_t n_steps,
                         std::span<const double> calibration_times) {
  if (n_steps == 0 || !(horizon > 0.0)) return false;
  const double h = horizon / static_cast<double>(n_steps);
  return std::all_of(calibration_times.begin(), calibration_times.end(),
                     [&](double t) { return on_grid(t, h, n_steps, nullptr); });
}

SpaceGrid SpaceGrid::uniform(double lower, double dx, std::size_t n_points) {
  if (n_points < 2 || !(dx > 0.0)) throw DomainError("space grid: need dx > 0 and two points");
  SpaceGrid g;
  g.lower = lower;
  g.dx = dx;
  g.n_points = n_points;
  g.points = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n_points), 0.0,
                                        static_cast<double>(n_points - 1));
  g.points = (g.points.array() * dx + lower).matrix();
  g.upper = g.points(g.points.size() - 1);
  return g;
}

std::size_t SpaceGrid::nearest(double x) const {
  const double q = std::round((x - lower) / dx);
  if (q <= 0.0) return 0;
  if (q >= static_cast<double>(n_points - 1)) return n_points - 1;
  return static_cast<std::size_t>(q);
}

double Coefficients::min_vol() const {
  return *std::min_element(vol_min.begin(), vol_min.end());
}

Coefficients Coefficients::constant(double drift, double vol, std::size_t n_steps) {
  Coefficients c;
  c.drift = [drift](std::size_t, double) { return drift; };
  c.vol = [vol](std::size_t, double) { return vol; };
  c.drift_min.assign(n_steps, drift);
  c.drift_max.assign(n_steps, drift);
  c.vol_min.assign(n_steps, vol);
  c.vol_max.assign(n_steps, vol);
  return c;
}

Coefficients Coefficients::martingale(std::vector<double> vol_per_step) {
  Coefficients c;
  for (double s : vol_per_step) {
    c.drift_min.push_back(-0.5 * s * s);
    c.vol_min.push_back(s);
  }
  c.drift_max = c.drift_min;
  c.vol_max = c.vol_min;
  auto vols = std::make_shared<std::vector<double>>(std::move(vol_per_step));
  c.drift = [vols](std::size_t k, double) { return -0.5 * (*vols)[k] * (*vols)[k]; };
  c.vol = [vols](std::size_t k, double) { return (*vols)[k]; };
  return c;
}

Coefficients Coefficients::martingale_table(const SpaceGrid& grid,
                                            std::vector<Eigen::VectorXd> variance) {
  Coefficients c;
  for (const auto& v : variance) {
    if (static_cast<std::size_t>(v.size()) != grid.n_points) {
      throw DomainError("coefficients: variance table does not match the grid");
    }
    if (!(v.minCoeff() > 0.0)) throw DomainError("coefficients: non-positive variance");
    c.vol_min.push_back(std::sqrt(v.minCoeff()));
    c.vol_max.push_back(std::sqrt(v.maxCoeff()));
    c.drift_min.push_back(-0.5 * v.maxCoeff());
    c.drift_max.push_back(-0.5 * v.minCoeff());
  }
  auto table = std::make_shared<std::vector<Eigen::VectorXd>>(std::move(variance));
  const SpaceGrid g = grid;
  c.drift = [table, g](std::size_t k, double x) {
    return -0.5 * (*table)[k](static_cast<Eigen::Index>(g.nearest(x)));
  };
  c.vol = [table, g](std::size_t k, double x) {
    return std::sqrt((*table)[k](static_cast<Eigen::Index>(g.nearest(x))));
  };
  return c;
}

double PiecewiseVol::at(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (t <= times[i] * (1.0 + kAlignTol)) return sigma[i];
  }
  return sigma.back();
}

Coefficients PiecewiseVol::coefficients(const TimeGrid& grid) const {
  std::vector<double> vols(grid.n_steps);
  for (std::size_t k = 0; k < grid.n_steps; ++k) vols[k] = at(grid.times[k] + 0.5 * grid.step);
  return Coefficients::martingale(std::move(vols));
}

std::vector<Interval> truncate_domain(double m0, double v0, const Coefficients& coeffs,
                                      const TimeGrid& grid, double delta) {
  if (!(delta > 0.0)) throw DomainError("truncate_domain: delta must be positive");
  if (coeffs.n_steps() < grid.n_steps) {
    throw DomainError("truncate_domain: coefficients cover fewer steps than the grid");
  }
  std::vector<Interval> bounds(grid.n_steps + 1);
  double lo = m0;
  double hi = m0;
  double var = v0 * v0;
  for (std::size_t k = 0; k <= grid.n_steps; ++k) {
    const double spread = delta * std::sqrt(var);
    bounds[k] = {lo - spread, hi + spread};
    if (k == grid.n_steps) break;
    lo += grid.step * coeffs.drift_min[k];
    hi += grid.step * coeffs.drift_max[k];
    var += grid.step * coeffs.vol_max[k] * coeffs.vol_max[k];
  }
  return bounds;
}

SpaceGrid build_space_grid(std::span<const Interval> bounds, double h, double min_vol,
                           double points_per_std, std::size_t max_points, double anchor,
                           std::size_t limiting_step) {
  if (bounds.empty()) throw DomainError("build_space_grid: no bounds");
  if (!(points_per_std >= 2.0)) throw DomainError("build_space_grid: points_per_std must be >= 2");
  if (!(min_vol > 0.0) || !(h > 0.0)) throw DomainError("build_space_grid: need vol > 0 and h > 0");
  double lower = anchor;
  double upper = anchor;
  for (const auto& b : bounds) {
    lower = std::min(lower, b.lower);
    upper = std::max(upper, b.upper);
  }
  const double dx = min_vol * std::sqrt(h) / points_per_std;
  const double below = std::max(1.0, std::ceil((anchor - lower) / dx - 1e-9));
  const double above = std::max(1.0, std::ceil((upper - anchor) / dx - 1e-9));
  const double total = below + above + 1.0;
  if (total > static_cast<double>(max_points)) {
    throw ResourceError("build_space_grid: " + format_double(total) +
                            " points needed at step " + std::to_string(limiting_step) +
                            ", cap is " + std::to_string(max_points),
                        limiting_step);
  }
  const auto n_below = static_cast<std::size_t>(below);
  SpaceGrid g = SpaceGrid::uniform(anchor - below * dx, dx, static_cast<std::size_t>(total));
  // Place the anchor exactly, independent of rounding in lower + i * dx.
  for (std::size_t i = 0; i < g.n_points; ++i) {
    g.points(static_cast<Eigen::Index>(i)) =
        anchor + (static_cast<double>(i) - static_cast<double>(n_below)) * dx;
  }
  g.lower = g.points(0);
  g.upper = g.points(g.points.size() - 1);
  return g;
}

SpaceGrid build_space_grid(std::span<const Interval> bounds, double h,
                           const Coefficients& coeffs, double points_per_std,
                           std::size_t max_points, double anchor) {
  const auto it = std::min_element(coeffs.vol_min.begin(), coeffs.vol_min.end());
  if (it == coeffs.vol_min.end()) throw DomainError("build_space_grid: empty coefficients");
  return build_space_grid(bounds, h, *it, points_per_std, max_points, anchor,
                          static_cast<std::size_t>(it - coeffs.vol_min.begin()));
}

Eigen::MatrixXd ReferenceMeasure::kernel(std::size_t k) const {
  return log_kernel(k).array().exp().matrix();
}

std::vector<Eigen::VectorXd> ReferenceMeasure::forward_marginals() const {
  std::vector<Eigen::VectorXd> out;
  out.push_back(rho0);
  for (std::size_t k = 0; k < n_steps(); ++k) {
    out.push_back(kernel(k).transpose() * out.back());
  }
  return out;
}

namespace {

std::shared_ptr<const LogKernel> gaussian_kernel(const SpaceGrid& space, const Eigen::VectorXd& mu,
                                                 const Eigen::VectorXd& sigma, double h) {
  const Eigen::Index n = static_cast<Eigen::Index>(space.n_points);
  auto kernel = std::make_shared<LogKernel>();
  kernel->xy.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = space.points(i) + mu(i) * h;
    const double inv_var = 1.0 / (sigma(i) * sigma(i) * h);
    double row_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = space.points(j) - mean;
      const double v = -0.5 * d * d * inv_var;
      kernel->xy(i, j) = v;
      row_max = std::max(row_max, v);
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) sum += std::exp(kernel->xy(i, j) - row_max);
    kernel->xy.row(i).array() -= row_max + std::log(sum);
  }
  kernel->yx = kernel->xy.transpose();
  return kernel;
}

}  // namespace

ReferenceMeasure build_reference(const TimeGrid& time, const SpaceGrid& space,
                                 const Coefficients& coeffs, const InitialLaw& law) {
  if (coeffs.n_steps() < time.n_steps) {
    throw DomainError("build_reference: coefficients cover fewer steps than the grid");
  }
  ReferenceMeasure ref;
  ref.time = time;
  ref.space = space;
  const Eigen::Index n = static_cast<Eigen::Index>(space.n_points);

  ref.rho0 = Eigen::VectorXd::Zero(n);
  if (law.stdev == 0.0) {
    ref.rho0(static_cast<Eigen::Index>(space.nearest(law.x0))) = 1.0;
  } else if (law.stdev > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = (space.points(i) - law.x0) / law.stdev;
      ref.rho0(i) = std::exp(-0.5 * z * z);
    }
    ref.rho0 /= ref.rho0.sum();
  } else {
    throw DomainError("build_reference: initial stdev must be non-negative");
  }
  ref.log_rho0.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ref.log_rho0(i) = ref.rho0(i) > 0.0 ? std::log(ref.rho0(i)) : kLogZero;
  }

  for (std::size_t k = 0; k < time.n_steps; ++k) {
    Eigen::VectorXd mu(n), sigma(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = coeffs.drift(k, space.points(i));
      sigma(i) = coeffs.vol(k, space.points(i));
      if (!(sigma(i) > 0.0) || !std::isfinite(sigma(i)) || !std::isfinite(mu(i))) {
        throw DomainError("build_reference: volatility must be positive and finite (step " +
                          std::to_string(k) + ")");
      }
    }
    std::shared_ptr<const LogKernel> kernel;
    for (std::size_t j = 0; j < k; ++j) {
      if (ref.drift[j] == mu && ref.vol[j] == sigma) {
        kernel = ref.kernels[j];
        break;
      }
    }
    if (!kernel) kernel = gaussian_kernel(space, mu, sigma, time.step);
    ref.drift.push_back(std::move(mu));
    ref.vol.push_back(std::move(sigma));
    ref.kernels.push_back(std::move(kernel));
  }
  return ref;
}

PiecewiseVol bootstrap_reference_vol(std::span<const double> atm_vols,
                                     std::span<const double> calibration_times) {
  if (atm_vols.size() != calibration_times.size() || atm_vols.empty()) {
    throw DomainError("bootstrap_reference_vol: one vol per calibration time is required");
  }
  PiecewiseVol out;
  double prev_t = 0.0;
  double prev_w = 0.0;
  for (std::size_t i = 0; i < atm_vols.size(); ++i) {
    const double t = calibration_times[i];
    if (!(atm_vols[i] > 0.0)) throw DomainError("bootstrap_reference_vol: vols must be positive");
    if (!(t > prev_t)) throw DomainError("bootstrap_reference_vol: times must increase");
    const double w = atm_vols[i] * atm_vols[i] * t;
    if (!(w > prev_w)) {
      throw DomainError("bootstrap_reference_vol: total variance decreases at t=" +
                        format_double(t));
    }
    out.times.push_back(t);
    out.sigma.push_back(std::sqrt((w - prev_w) / (t - prev_t)));
    prev_t = t;
    prev_w = w;
  }
  return out;
}

std::vector<double> atm_vols_from_instruments(const InstrumentSet& set, double forward) {
  std::vector<double> vols;
  for (std::size_t m = 0; m < set.calibration_times.size(); ++m) {
    const double t = set.calibration_times[m];
    // Nearest quote on each side of the forward, in log-moneyness.
    double k_lo = -std::numeric_limits<double>::infinity(), v_lo = 0.0;
    double k_hi = std::numeric_limits<double>::infinity(), v_hi = 0.0;
    for (const auto& inst : set.instruments) {
      if (inst.maturity_index != m) continue;
      const double k = std::log(inst.strike / forward);
      if (k <= 0.0 && k > k_lo) {
        k_lo = k;
        v_lo = implied_vol(inst.target_price, forward, inst.strike, t, inst.kind);
      }
      if (k >= 0.0 && k < k_hi) {
        k_hi = k;
        v_hi = implied_vol(inst.target_price, forward, inst.strike, t, inst.kind);
      }
    }
    const bool has_lo = std::isfinite(k_lo);
    const bool has_hi = std::isfinite(k_hi);
    if (!has_lo && !has_hi) {
      throw DomainError("atm_vols_from_instruments: no quotes at t=" + format_double(t));
    }
    if (has_lo && has_hi && k_hi > k_lo) {
      vols.push_back(v_lo + (v_hi - v_lo) * (0.0 - k_lo) / (k_hi - k_lo));
    } else {
      vols.push_back(has_lo ? v_lo : v_hi);
    }
  }
  return vols;
}

void write_reference_summary(std::ostream& out, const ReferenceMeasure& ref,
                             std::span<const Interval> step_bounds) {
  CsvWriter csv(out, {"step", "t", "lower", "upper", "n_points", "vol_min", "vol_max",
                      "drift_min", "drift_max"});
  for (std::size_t k = 0; k < ref.n_steps(); ++k) {
    const Interval b = k < step_bounds.size() ? step_bounds[k]
                                              : Interval{ref.space.lower, ref.space.upper};
    csv << k << ref.time.times[k] << b.lower << b.upper << ref.n_points()
        << ref.vol[k].minCoeff() << ref.vol[k].maxCoeff() << ref.drift[k].minCoeff()
        << ref.drift[k].maxCoeff();
    csv.end_row();
  }
}

}  // namespace lvot
