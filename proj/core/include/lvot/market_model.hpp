#pragma once

// Synthetic option market: SSVI implied total variance, undiscounted
// Black-Scholes prices on the forward, implied volatility inversion and
// vanilla payoffs in log-price coordinates. Rates and dividends are zero, so
// the forward equals the spot throughout.

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lvot {

enum class OptionKind { call, put };

std::string to_string(OptionKind kind);
OptionKind parse_option_kind(const std::string& text);

/// Power-law SSVI parameters. The ATM total variance is theta_slope * t.
struct SsviParams {
  double eta = 1.6;
  double lambda = 0.4;
  double rho = -0.15;
  double theta_slope = 0.04;

  /// Throws DomainError when a parameter is out of range.
  void validate() const;
  bool operator==(const SsviParams&) const = default;
};

/// Total implied variance w(k, t) at log-moneyness k = log(K/F).
double ssvi_total_variance(const SsviParams& p, double log_moneyness, double t);

/// Undiscounted Black-Scholes price on the forward. A zero total variance
/// returns the intrinsic value.
double bs_price(double forward, double strike, double total_variance, OptionKind kind);

struct PriceBounds {
  double lower;
  double upper;
};

/// Static no-arbitrage bounds for an undiscounted vanilla on the forward.
PriceBounds arbitrage_bounds(double forward, double strike, OptionKind kind);

/// Black-Scholes volatility reproducing `price`. The price must lie strictly
/// inside arbitrage_bounds(); otherwise OutOfBoundsError names the bound.
double implied_vol(double price, double forward, double strike, double maturity,
                   OptionKind kind);

struct Instrument {
  std::size_t maturity_index = 0;  // into InstrumentSet::calibration_times
  OptionKind kind = OptionKind::call;
  double strike = 0.0;
  double target_price = 0.0;
  double penalty_weight = 1.0;
};

struct InstrumentSet {
  std::vector<double> calibration_times;
  std::vector<Instrument> instruments;
  std::vector<std::string> warnings;

  double maturity(const Instrument& inst) const {
    return calibration_times.at(inst.maturity_index);
  }
  std::size_t size() const { return instruments.size(); }
};

/// Calls at spot + offset + spacing * j and puts at spot - offset - spacing * j,
/// j = 0..counts[i], for the i-th calibration time.
struct StrikeRule {
  std::vector<int> counts{5, 7, 9, 10, 12};
  double offset = 1.0;
  double spacing = 4.0;

  bool operator==(const StrikeRule&) const = default;
};

InstrumentSet generate_market(const SsviParams& params, double spot,
                              std::span<const double> calibration_times,
                              const StrikeRule& rule, double penalty_weight = 1.0);

/// Payoff of a vanilla evaluated at log-prices x: max(e^x - K, 0) or max(K - e^x, 0).
Eigen::VectorXd payoff_vector(OptionKind kind, double strike,
                              const Eigen::VectorXd& log_points);

/// Columns: maturity_time,kind,strike,target_price,penalty_weight.
void write_instruments(std::ostream& out, const InstrumentSet& set);
InstrumentSet read_instruments(std::istream& in);

}  // namespace lvot
