#include "lvot/mc_audit.hpp"

#include "lvot/errors.hpp"
#include "lvot/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

namespace lvot {

namespace {

struct BlockSums {
  std::vector<double> sum;
  std::vector<double> sum_sq;
};

std::size_t maturity_step(double t, double step, std::size_t n_steps) {
  const double q = t / step;
  const double r = std::round(q);
  if (std::abs(q - r) > 1e-9 * std::max(1.0, q) || r < 1.0 ||
      r > static_cast<double>(n_steps)) {
    throw DomainError("mc_reprice: maturity " + format_double(t) +
                      " is not a step of the surface table");
  }
  return static_cast<std::size_t>(r);
}

}  // namespace

std::vector<McQuote> mc_reprice(const LocalVarianceTable& surface,
                                const InstrumentSet& instruments, double spot,
                                const McConfig& config) {
  if (config.n_paths < 2) throw DomainError("mc_reprice: need at least two paths");
  if (config.block_size == 0) throw DomainError("mc_reprice: block size must be positive");
  if (!(spot > 0.0)) throw DomainError("mc_reprice: spot must be positive");
  const std::size_t n_steps = surface.n_steps();
  if (n_steps == 0) throw DomainError("mc_reprice: empty surface");
  const double h = surface.step;
  const double sqrt_h = std::sqrt(h);

  const std::size_t n_inst = instruments.size();
  // Instruments grouped by the step at which they pay.
  std::vector<std::vector<std::size_t>> at_step(n_steps + 1);
  std::size_t last = 0;
  for (std::size_t i = 0; i < n_inst; ++i) {
    const std::size_t k =
        maturity_step(instruments.maturity(instruments.instruments[i]), h, n_steps);
    at_step[k].push_back(i);
    last = std::max(last, k);
  }

  // Volatility per step and grid point, precomputed once.
  std::vector<Eigen::VectorXd> vol(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) vol[k] = surface.variance[k].cwiseMax(0.0).cwiseSqrt();
  const SpaceGrid& grid = surface.grid;
  const double x0 = std::log(spot);

  const std::size_t n_blocks = (config.n_paths + config.block_size - 1) / config.block_size;
  std::vector<BlockSums> blocks(n_blocks);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(n_blocks); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    const std::size_t begin = b * config.block_size;
    const std::size_t count = std::min(config.block_size, config.n_paths - begin);
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    BlockSums sums{std::vector<double>(n_inst, 0.0), std::vector<double>(n_inst, 0.0)};
    for (std::size_t p = 0; p < count; ++p) {
      // y = X - log(spot), so an unmoved path pays exactly at the spot.
      double y = 0.0;
      for (std::size_t k = 0; k < last; ++k) {
        const double s = vol[k](static_cast<Eigen::Index>(grid.nearest(x0 + y)));
        y += -0.5 * s * s * h + s * sqrt_h * normal(rng);
        for (std::size_t i : at_step[k + 1]) {
          const Instrument& inst = instruments.instruments[i];
          const double st = spot * std::exp(y);
          const double pay = inst.kind == OptionKind::call ? std::max(st - inst.strike, 0.0)
                                                           : std::max(inst.strike - st, 0.0);
          sums.sum[i] += pay;
          sums.sum_sq[i] += pay * pay;
        }
      }
    }
    blocks[b] = std::move(sums);
  }

  std::vector<double> sum(n_inst, 0.0), sum_sq(n_inst, 0.0);
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < n_inst; ++i) {
      sum[i] += b.sum[i];
      sum_sq[i] += b.sum_sq[i];
    }
  }

  const double n = static_cast<double>(config.n_paths);
  std::vector<McQuote> quotes(n_inst);
  for (std::size_t i = 0; i < n_inst; ++i) {
    const Instrument& inst = instruments.instruments[i];
    McQuote& q = quotes[i];
    q.price = sum[i] / n;
    const double var = std::max(sum_sq[i] / n - q.price * q.price, 0.0) * n / (n - 1.0);
    q.std_error = std::sqrt(var / n);
    try {
      q.implied_vol = implied_vol(q.price, spot, inst.strike, instruments.maturity(inst), inst.kind);
    } catch (const DomainError&) {
      q.implied_vol = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return quotes;
}

void write_mc_audit(std::ostream& out, const InstrumentSet& instruments,
                    const std::vector<McQuote>& quotes) {
  CsvWriter csv(out, {"maturity_time", "kind", "strike", "target_price", "mc_price",
                      "mc_std_error", "mc_implied_vol"});
  for (std::size_t i = 0; i < instruments.size(); ++i) {
    const Instrument& inst = instruments.instruments[i];
    csv << instruments.maturity(inst) << to_string(inst.kind) << inst.strike
        << inst.target_price << quotes.at(i).price << quotes.at(i).std_error
        << quotes.at(i).implied_vol;
    csv.end_row();
  }
}

}  // namespace lvot
