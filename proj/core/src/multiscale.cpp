#include "lvot/multiscale.hpp"

#include "lvot/errors.hpp"
#include "lvot/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string>

namespace lvot {

double LocalVarianceTable::lookup(double t, double x) const {
  if (variance.empty()) throw DomainError("local variance table is empty");
  const double q = std::floor(t / step + 1e-9);
  const std::size_t k =
      q <= 0.0 ? 0 : std::min(static_cast<std::size_t>(q), variance.size() - 1);
  return variance[k](static_cast<Eigen::Index>(grid.nearest(x)));
}

LocalVarianceTable extract_surface(const TiltedChain& chain, const PotentialSet& pot,
                                   const Propagators& props, double variance_floor,
                                   double rel_mass_floor) {
  const ReferenceMeasure& ref = chain.reference();
  LocalVarianceTable table;
  table.step = ref.h();
  table.grid = ref.space;
  const Eigen::Index n = static_cast<Eigen::Index>(ref.n_points());
  for (std::size_t k = 0; k < ref.n_steps(); ++k) {
    table.times.push_back(ref.time.times[k]);
    const ConditionalMoments cm = chain.conditional_moments(k, pot, props, rel_mass_floor);
    Eigen::VectorXd v = cm.local_var;
    std::vector<bool> filled(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> good;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!cm.missing[static_cast<std::size_t>(i)] && std::isfinite(v(i))) good.push_back(i);
    }
    if (good.empty()) {
      throw DegenerateMassError("extract_surface: no supported point", k);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!cm.missing[static_cast<std::size_t>(i)] && std::isfinite(v(i))) continue;
      auto it = std::lower_bound(good.begin(), good.end(), i);
      Eigen::Index pick;
      if (it == good.end()) {
        pick = good.back();
      } else if (it == good.begin()) {
        pick = *it;
      } else {
        pick = (i - *(it - 1) <= *it - i) ? *(it - 1) : *it;
      }
      v(i) = cm.local_var(pick);
      filled[static_cast<std::size_t>(i)] = true;
    }
    table.variance.push_back(v.cwiseMax(variance_floor));
    table.filled.push_back(std::move(filled));
  }
  return table;
}

std::vector<Eigen::VectorXd> refine(const LocalVarianceTable& table, const TimeGrid& target) {
  const std::size_t n = table.n_steps();
  if (n == 0) throw DomainError("refine: empty table");
  std::vector<Eigen::VectorXd> out;
  for (std::size_t j = 0; j < target.n_steps; ++j) {
    const double t = target.times[j] + 0.5 * target.step;
    if (t <= table.midpoint(0)) {
      out.push_back(table.variance.front());
      continue;
    }
    if (t >= table.midpoint(n - 1)) {
      out.push_back(table.variance.back());
      continue;
    }
    std::size_t k = 0;
    while (k + 1 < n && table.midpoint(k + 1) < t) ++k;
    const double t0 = table.midpoint(k);
    const double t1 = table.midpoint(k + 1);
    const double w = (t - t0) / (t1 - t0);
    out.push_back((1.0 - w) * table.variance[k] + w * table.variance[k + 1]);
  }
  return out;
}

Coefficients refine_coefficients(const LocalVarianceTable& table, const TimeGrid& target) {
  return Coefficients::martingale_table(table.grid, refine(table, target));
}

void ScaleLadder::validate(double horizon, const std::vector<double>& calibration_times) const {
  if (step_counts.empty()) throw DomainError("ladder: no scales");
  for (std::size_t i = 0; i < step_counts.size(); ++i) {
    if (step_counts[i] == 0 || (i > 0 && step_counts[i] <= step_counts[i - 1])) {
      throw DomainError("ladder: step counts must be positive and strictly increasing");
    }
    if (!calibration_aligned(horizon, step_counts[i], calibration_times)) {
      throw DomainError("ladder: calibration times are not on the grid with " +
                        std::to_string(step_counts[i]) + " steps");
    }
  }
}

LadderResult run_ladder(const LadderConfig& config, const InstrumentSet& instruments,
                        const std::function<void(const ScaleResult&)>& on_scale) {
  if (instruments.calibration_times.empty()) throw DomainError("ladder: no calibration times");
  const double horizon = instruments.calibration_times.back();
  config.ladder.validate(horizon, instruments.calibration_times);

  LadderResult result;
  const std::vector<double> atm = atm_vols_from_instruments(instruments, config.spot);
  result.initial_vol = bootstrap_reference_vol(atm, instruments.calibration_times);

  // One grid for the whole ladder, sized for the finest step.
  const double x0 = std::log(config.spot);
  const TimeGrid finest =
      TimeGrid::uniform(horizon, config.ladder.step_counts.back(), instruments.calibration_times);
  const Coefficients finest_coeffs = result.initial_vol.coefficients(finest);
  result.bounds = truncate_domain(x0, config.initial_stdev, finest_coeffs, finest, config.delta);
  result.grid = build_space_grid(result.bounds, finest.step, finest_coeffs, config.points_per_std,
                                 config.max_points, x0);

  result.converged = true;
  for (std::size_t s = 0; s < config.ladder.step_counts.size(); ++s) {
    const TimeGrid time = TimeGrid::uniform(horizon, config.ladder.step_counts[s],
                                            instruments.calibration_times);
    const Coefficients coeffs = s == 0 ? result.initial_vol.coefficients(time)
                                       : refine_coefficients(result.scales.back().surface, time);
    auto ref = std::make_unique<ReferenceMeasure>(
        build_reference(time, result.grid, coeffs, InitialLaw{x0, config.initial_stdev}));
    auto solver = std::make_unique<SinkhornSolver>(
        *ref, ConstraintSpec::from_instruments(instruments, *ref, config.c_mart), config.solver);

    ScaleResult scale;
    scale.n_steps = time.n_steps;
    scale.report = solver->run();
    if (!scale.report.converged) {
      result.converged = false;
      scale.warnings.push_back("scale with " + std::to_string(time.n_steps) +
                               " steps stopped after " +
                               std::to_string(scale.report.iterations) +
                               " iterations without converging");
    }
    if (scale.report.stats.flagged_points > 0) {
      scale.warnings.push_back(std::to_string(scale.report.stats.flagged_points) +
                               " pointwise moment solves kept their previous value");
    }
    if (scale.report.stats.rejected_blocks > 0) {
      scale.warnings.push_back(std::to_string(scale.report.stats.rejected_blocks) +
                               " price-block solves were rejected");
    }
    scale.surface = extract_surface(solver->chain(), solver->potentials(), solver->props(),
                                    config.variance_floor);
    if (on_scale) on_scale(scale);
    result.scales.push_back(std::move(scale));
    // The solver refers to its reference measure; release the old pair together.
    result.solver.reset();
    result.reference = std::move(ref);
    result.solver = std::move(solver);
  }
  return result;
}

void write_surface(std::ostream& out, const LocalVarianceTable& table) {
  CsvWriter csv(out, {"t", "x", "sigma2"});
  for (std::size_t k = 0; k < table.n_steps(); ++k) {
    for (Eigen::Index i = 0; i < table.variance[k].size(); ++i) {
      csv << table.times[k] << table.grid.points(i) << table.variance[k](i);
      csv.end_row();
    }
  }
}

LocalVarianceTable read_surface(std::istream& in, double horizon) {
  const CsvTable csv = read_csv(in);
  std::map<double, std::map<double, double>> rows;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    rows[csv.number(r, "t")][csv.number(r, "x")] = csv.number(r, "sigma2");
  }
  if (rows.empty()) throw DomainError("surface table is empty");
  LocalVarianceTable table;
  table.step = horizon / static_cast<double>(rows.size());
  const auto& first = rows.begin()->second;
  const auto n = static_cast<Eigen::Index>(first.size());
  if (n < 2) throw DomainError("surface table needs at least two x values");
  const double lo = first.begin()->first;
  const double hi = first.rbegin()->first;
  table.grid = SpaceGrid::uniform(lo, (hi - lo) / static_cast<double>(n - 1),
                                  static_cast<std::size_t>(n));
  Eigen::Index i = 0;
  for (const auto& [x, v] : first) table.grid.points(i++) = x;
  table.grid.upper = hi;
  for (const auto& [t, by_x] : rows) {
    if (static_cast<Eigen::Index>(by_x.size()) != n) {
      throw DomainError("surface table: step at t=" + format_double(t) + " has a different grid");
    }
    table.times.push_back(t);
    Eigen::VectorXd v(n);
    Eigen::Index j = 0;
    for (const auto& [x, s2] : by_x) v(j++) = s2;
    table.variance.push_back(std::move(v));
    table.filled.emplace_back(static_cast<std::size_t>(n), false);
  }
  return table;
}

}  // namespace lvot
