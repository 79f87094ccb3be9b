#pragma once

// Monte-Carlo repricing of vanillas under a calibrated local variance table.
// The Euler chain X_{k+1} = X_k - sigma^2 h / 2 + sigma sqrt(h) Z starts at
// log(spot); sigma^2 is read at the nearest grid point, with no interpolation.
//
// Paths are split into fixed-size blocks. Each block draws from its own
// generator seeded from (seed, block index), and block results are summed in
// block order, so the output does not depend on the thread count.

#include "lvot/market_model.hpp"
#include "lvot/multiscale.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace lvot {

struct McConfig {
  std::size_t n_paths = 1'000'000;
  std::uint64_t seed = 0;
  std::size_t block_size = 16384;
};

struct McQuote {
  double price = 0.0;
  double std_error = 0.0;
  double implied_vol = 0.0;  // NaN when the price is outside the arbitrage bounds
};

/// One quote per instrument, in instrument order. Every maturity must be a
/// whole number of table steps (DomainError otherwise).
std::vector<McQuote> mc_reprice(const LocalVarianceTable& surface,
                                const InstrumentSet& instruments, double spot,
                                const McConfig& config);

/// Columns: maturity_time,kind,strike,target_price,mc_price,mc_std_error,mc_implied_vol.
void write_mc_audit(std::ostream& out, const InstrumentSet& instruments,
                    const std::vector<McQuote>& quotes);

}  // namespace lvot
