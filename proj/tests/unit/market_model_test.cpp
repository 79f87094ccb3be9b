#include "lvot/errors.hpp"
#include "lvot/market_model.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

namespace lvot {
namespace {

TEST(Ssvi, MatchesExtendedPrecision) {
  const SsviParams p;
  for (double t : {0.05, 0.2, 0.6, 1.0, 3.0}) {
    for (double k : {-1.5, -0.3, -0.01, 0.0, 0.02, 0.4, 1.2}) {
      const double want = oracle::ssvi_total_variance_mp(p.eta, p.lambda, p.rho, p.theta_slope, k, t);
      EXPECT_NEAR(ssvi_total_variance(p, k, t), want, 1e-15 * want) << "t=" << t << " k=" << k;
    }
  }
}

TEST(Ssvi, AtTheMoneyVarianceIsThetaT) {
  const SsviParams p;
  EXPECT_NEAR(ssvi_total_variance(p, 0.0, 0.5), 0.04 * 0.5, 1e-16);
}

TEST(Ssvi, RejectsBadInputs) {
  SsviParams p;
  EXPECT_THROW(ssvi_total_variance(p, 0.0, 0.0), DomainError);
  p.rho = 1.0;
  EXPECT_THROW(p.validate(), DomainError);
}

TEST(BlackScholes, MatchesQuadrature) {
  for (double strike : {60.0, 90.0, 100.0, 101.0, 130.0}) {
    for (double w : {0.001, 0.01, 0.04, 0.25}) {
      for (auto kind : {OptionKind::call, OptionKind::put}) {
        const double want = oracle::bs_price_quadrature(100.0, strike, w, kind);
        EXPECT_NEAR(bs_price(100.0, strike, w, kind), want, 1e-10 * (1.0 + want));
      }
    }
  }
}

TEST(BlackScholes, ZeroVarianceIsIntrinsic) {
  EXPECT_EQ(bs_price(100.0, 90.0, 0.0, OptionKind::call), 10.0);
  EXPECT_EQ(bs_price(100.0, 90.0, 0.0, OptionKind::put), 0.0);
}

TEST(BlackScholes, PutCallParity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ks(50.0, 150.0), ws(1e-4, 0.5);
  for (int i = 0; i < 200; ++i) {
    const double k = ks(rng), w = ws(rng);
    const double c = bs_price(100.0, k, w, OptionKind::call);
    const double p = bs_price(100.0, k, w, OptionKind::put);
    EXPECT_NEAR(c - p, 100.0 - k, 1e-12 * 100.0);
  }
}

TEST(ImpliedVol, RoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ks(70.0, 130.0), vs(0.1, 0.6);
  for (int i = 0; i < 100; ++i) {
    const double k = ks(rng), v = vs(rng), t = 1.0;
    const auto kind = i % 2 ? OptionKind::call : OptionKind::put;
    const double price = bs_price(100.0, k, v * v * t, kind);
    EXPECT_NEAR(implied_vol(price, 100.0, k, t, kind), v, 1e-10);
  }
}

TEST(ImpliedVol, OutOfBoundsNamesTheBound) {
  const PriceBounds b = arbitrage_bounds(100.0, 90.0, OptionKind::call);
  EXPECT_EQ(b.lower, 10.0);
  EXPECT_EQ(b.upper, 100.0);
  try {
    implied_vol(9.0, 100.0, 90.0, 1.0, OptionKind::call);
    FAIL();
  } catch (const OutOfBoundsError& e) {
    EXPECT_TRUE(e.is_lower());
    EXPECT_EQ(e.bound(), 10.0);
  }
  try {
    implied_vol(100.0, 100.0, 90.0, 1.0, OptionKind::call);
    FAIL();
  } catch (const OutOfBoundsError& e) {
    EXPECT_FALSE(e.is_lower());
  }
}

TEST(Market, DefaultStrikeRuleGives96Instruments) {
  const std::vector<double> times{0.2, 0.4, 0.6, 0.8, 1.0};
  const InstrumentSet set = generate_market(SsviParams{}, 100.0, times, StrikeRule{});
  EXPECT_EQ(set.size(), 96u);
  EXPECT_TRUE(set.warnings.empty());
  // First maturity: calls 101..121, puts 99..79.
  EXPECT_EQ(set.instruments.front().strike, 101.0);
  for (const auto& inst : set.instruments) {
    const double t = set.maturity(inst);
    const double w = ssvi_total_variance(SsviParams{}, std::log(inst.strike / 100.0), t);
    EXPECT_DOUBLE_EQ(inst.target_price, bs_price(100.0, inst.strike, w, inst.kind));
    if (inst.kind == OptionKind::call) EXPECT_GT(inst.strike, 100.0);
    if (inst.kind == OptionKind::put) EXPECT_LT(inst.strike, 100.0);
  }
}

TEST(Market, NonPositiveStrikesAreDroppedWithWarning) {
  StrikeRule rule;
  rule.counts = {30};
  const std::vector<double> times{1.0};
  const InstrumentSet set = generate_market(SsviParams{}, 100.0, times, rule);
  EXPECT_FALSE(set.warnings.empty());
  for (const auto& inst : set.instruments) EXPECT_GT(inst.strike, 0.0);
}

TEST(Market, InstrumentTableRoundTrip) {
  const std::vector<double> times{0.2, 0.4};
  StrikeRule rule;
  rule.counts = {2, 3};
  const InstrumentSet set = generate_market(SsviParams{}, 100.0, times, rule, 7.5);
  std::stringstream io;
  write_instruments(io, set);
  const InstrumentSet back = read_instruments(io);
  ASSERT_EQ(back.size(), set.size());
  EXPECT_EQ(back.calibration_times, set.calibration_times);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(back.instruments[i].strike, set.instruments[i].strike);
    EXPECT_EQ(back.instruments[i].target_price, set.instruments[i].target_price);
    EXPECT_EQ(back.instruments[i].penalty_weight, 7.5);
    EXPECT_EQ(back.instruments[i].kind, set.instruments[i].kind);
    EXPECT_EQ(back.maturity(back.instruments[i]), set.maturity(set.instruments[i]));
  }
}

TEST(Market, PayoffVector) {
  Eigen::VectorXd x(3);
  x << std::log(90.0), std::log(100.0), std::log(110.0);
  const Eigen::VectorXd c = payoff_vector(OptionKind::call, 100.0, x);
  const Eigen::VectorXd p = payoff_vector(OptionKind::put, 100.0, x);
  EXPECT_EQ(c(0), 0.0);
  EXPECT_NEAR(c(2), 10.0, 1e-12);
  EXPECT_NEAR(p(0), 10.0, 1e-12);
  EXPECT_EQ(p(2), 0.0);
}

}  // namespace
}  // namespace lvot
