#include "lvot/market_model.hpp"

#include "lvot/errors.hpp"
#include "lvot/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

namespace lvot {

std::string to_string(OptionKind kind) {
  return kind == OptionKind::call ? "call" : "put";
}

OptionKind parse_option_kind(const std::string& text) {
  if (text == "call") return OptionKind::call;
  if (text == "put") return OptionKind::put;
  throw DomainError("unknown option kind '" + text + "'");
}

void SsviParams::validate() const {
  if (!(eta > 0.0)) throw DomainError("ssvi: eta must be positive");
  if (!(lambda > 0.0 && lambda < 1.0)) throw DomainError("ssvi: lambda must lie in (0,1)");
  if (!(std::abs(rho) < 1.0)) throw DomainError("ssvi: |rho| must be below 1");
  if (!(theta_slope > 0.0)) throw DomainError("ssvi: theta_slope must be positive");
}

double ssvi_total_variance(const SsviParams& p, double log_moneyness, double t) {
  if (!(t > 0.0)) throw DomainError("ssvi_total_variance: t must be positive");
  const double theta = p.theta_slope * t;
  const double phi = p.eta * std::pow(theta, -p.lambda);
  const double pk = phi * log_moneyness;
  const double w = 0.5 * theta *
                   (1.0 + p.rho * pk + std::sqrt((pk + p.rho) * (pk + p.rho) + 1.0 - p.rho * p.rho));
  if (!std::isfinite(w) || !(w > 0.0)) {
    throw DomainError("ssvi_total_variance: non-finite or non-positive variance");
  }
  return w;
}

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double intrinsic(double forward, double strike, OptionKind kind) {
  return kind == OptionKind::call ? std::max(forward - strike, 0.0)
                                  : std::max(strike - forward, 0.0);
}

}  // namespace

double bs_price(double forward, double strike, double total_variance, OptionKind kind) {
  if (!(forward > 0.0) || !(strike > 0.0) || !(total_variance >= 0.0)) {
    throw DomainError("bs_price: requires forward > 0, strike > 0, variance >= 0");
  }
  if (total_variance == 0.0) return intrinsic(forward, strike, kind);
  const double s = std::sqrt(total_variance);
  const double d1 = std::log(forward / strike) / s + 0.5 * s;
  const double d2 = d1 - s;
  if (kind == OptionKind::call) {
    return forward * norm_cdf(d1) - strike * norm_cdf(d2);
  }
  return strike * norm_cdf(-d2) - forward * norm_cdf(-d1);
}

PriceBounds arbitrage_bounds(double forward, double strike, OptionKind kind) {
  if (kind == OptionKind::call) return {std::max(forward - strike, 0.0), forward};
  return {std::max(strike - forward, 0.0), strike};
}

double implied_vol(double price, double forward, double strike, double maturity,
                   OptionKind kind) {
  if (!(forward > 0.0) || !(strike > 0.0) || !(maturity > 0.0)) {
    throw DomainError("implied_vol: requires forward, strike and maturity > 0");
  }
  const PriceBounds bounds = arbitrage_bounds(forward, strike, kind);
  if (!(price > bounds.lower)) {
    throw OutOfBoundsError("implied_vol: price at or below intrinsic value", bounds.lower, true);
  }
  if (!(price < bounds.upper)) {
    throw OutOfBoundsError("implied_vol: price at or above upper bound", bounds.upper, false);
  }

  // Invert the out-of-the-money side, whose price carries no intrinsic part.
  OptionKind otm = kind;
  double target = price;
  if (kind == OptionKind::call && strike < forward) {
    otm = OptionKind::put;
    target = price - (forward - strike);
  } else if (kind == OptionKind::put && strike > forward) {
    otm = OptionKind::call;
    target = price - (strike - forward);
  }
  const double sqrt_t = std::sqrt(maturity);
  auto value = [&](double sigma) {
    return bs_price(forward, strike, sigma * sigma * maturity, otm) - target;
  };

  double lo = 0.0;
  double hi = 1.0;
  while (value(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e4) throw DomainError("implied_vol: no volatility bracket found");
  }

  // Bisection until the bracket is reasonably tight, then safeguarded Newton.
  double sigma = 0.5 * (lo + hi);
  for (int i = 0; i < 20; ++i) {
    sigma = 0.5 * (lo + hi);
    (value(sigma) < 0.0 ? lo : hi) = sigma;
  }
  sigma = 0.5 * (lo + hi);
  for (int i = 0; i < 100; ++i) {
    const double f = value(sigma);
    if (f == 0.0) break;
    (f < 0.0 ? lo : hi) = sigma;
    const double s = sigma * sqrt_t;
    const double d1 = std::log(forward / strike) / s + 0.5 * s;
    const double vega = forward * norm_pdf(d1) * sqrt_t;
    double next = vega > 0.0 ? sigma - f / vega : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - sigma) <= 1e-16 * sigma || hi - lo <= 2e-16 * hi) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma;
}

InstrumentSet generate_market(const SsviParams& params, double spot,
                              std::span<const double> calibration_times,
                              const StrikeRule& rule, double penalty_weight) {
  params.validate();
  if (!(spot > 0.0)) throw DomainError("generate_market: spot must be positive");
  if (calibration_times.empty()) throw DomainError("generate_market: no calibration times");
  if (rule.counts.size() != calibration_times.size()) {
    throw DomainError("generate_market: one strike count per calibration time is required");
  }
  if (!(penalty_weight > 0.0)) throw DomainError("generate_market: penalty weight must be positive");
  for (std::size_t i = 0; i < calibration_times.size(); ++i) {
    if (!(calibration_times[i] > 0.0) ||
        (i > 0 && !(calibration_times[i] > calibration_times[i - 1]))) {
      throw DomainError("generate_market: calibration times must be positive and increasing");
    }
  }

  InstrumentSet set;
  set.calibration_times.assign(calibration_times.begin(), calibration_times.end());
  const double forward = spot;
  for (std::size_t i = 0; i < calibration_times.size(); ++i) {
    const double t = calibration_times[i];
    auto emit = [&](OptionKind kind, double strike) {
      if (!(strike > 0.0)) {
        set.warnings.push_back("dropped " + to_string(kind) + " with non-positive strike " +
                               format_double(strike) + " at t=" + format_double(t));
        return;
      }
      const double w = ssvi_total_variance(params, std::log(strike / forward), t);
      set.instruments.push_back(
          {i, kind, strike, bs_price(forward, strike, w, kind), penalty_weight});
    };
    for (int j = 0; j <= rule.counts[i]; ++j) {
      emit(OptionKind::call, spot + rule.offset + rule.spacing * j);
    }
    for (int j = 0; j <= rule.counts[i]; ++j) {
      emit(OptionKind::put, spot - rule.offset - rule.spacing * j);
    }
  }
  return set;
}

Eigen::VectorXd payoff_vector(OptionKind kind, double strike,
                              const Eigen::VectorXd& log_points) {
  const Eigen::ArrayXd s = log_points.array().exp();
  if (kind == OptionKind::call) return (s - strike).max(0.0).matrix();
  return (strike - s).max(0.0).matrix();
}

void write_instruments(std::ostream& out, const InstrumentSet& set) {
  CsvWriter csv(out, {"maturity_time", "kind", "strike", "target_price", "penalty_weight"});
  for (const auto& inst : set.instruments) {
    csv << set.maturity(inst) << to_string(inst.kind) << inst.strike << inst.target_price
        << inst.penalty_weight;
    csv.end_row();
  }
}

InstrumentSet read_instruments(std::istream& in) {
  const CsvTable table = read_csv(in);
  InstrumentSet set;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double t = table.number(r, "maturity_time");
    auto it = std::find(set.calibration_times.begin(), set.calibration_times.end(), t);
    std::size_t index = static_cast<std::size_t>(it - set.calibration_times.begin());
    if (it == set.calibration_times.end()) set.calibration_times.push_back(t);
    set.instruments.push_back({index, parse_option_kind(table.text(r, "kind")),
                               table.number(r, "strike"), table.number(r, "target_price"),
                               table.number(r, "penalty_weight")});
  }
  // Keep calibration times sorted; remap indices accordingly.
  std::vector<double> sorted = set.calibration_times;
  std::sort(sorted.begin(), sorted.end());
  for (auto& inst : set.instruments) {
    const double t = set.calibration_times[inst.maturity_index];
    inst.maturity_index =
        static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
  }
  set.calibration_times = std::move(sorted);
  return set;
}

}  // namespace lvot
