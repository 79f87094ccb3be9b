#include "lvot/errors.hpp"
#include "lvot/mc_audit.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace lvot {
namespace {

LocalVarianceTable flat_surface(double variance, std::size_t steps, double horizon) {
  LocalVarianceTable t;
  t.step = horizon / static_cast<double>(steps);
  t.grid = SpaceGrid::uniform(std::log(100.0) - 3.0, 0.01, 601);
  for (std::size_t k = 0; k < steps; ++k) {
    t.times.push_back(t.step * static_cast<double>(k));
    t.variance.push_back(Eigen::VectorXd::Constant(601, variance));
    t.filled.emplace_back(601, false);
  }
  return t;
}

InstrumentSet atm_call(double t) {
  InstrumentSet set;
  set.calibration_times = {t};
  set.instruments.push_back({0, OptionKind::call, 100.0, 0.0, 1.0});
  set.instruments.push_back({0, OptionKind::put, 90.0, 0.0, 1.0});
  return set;
}

TEST(McAudit, ConstantVolMatchesBlackScholes) {
  const LocalVarianceTable s = flat_surface(0.04, 5, 1.0);
  const InstrumentSet set = atm_call(1.0);
  McConfig cfg;
  cfg.n_paths = 1'000'000;
  cfg.seed = 20240601;
  const auto q = mc_reprice(s, set, 100.0, cfg);
  const double want = bs_price(100.0, 100.0, 0.04, OptionKind::call);
  EXPECT_LT(std::abs(q[0].price - want), 3.0 * q[0].std_error);
  EXPECT_GT(q[0].std_error, 0.0);
  EXPECT_NEAR(q[0].implied_vol, 0.2, 3e-3);
  const double put = bs_price(100.0, 90.0, 0.04, OptionKind::put);
  EXPECT_LT(std::abs(q[1].price - put), 3.0 * q[1].std_error);
}

TEST(McAudit, ZeroVarianceGivesIntrinsicExactly) {
  const LocalVarianceTable s = flat_surface(0.0, 4, 1.0);
  InstrumentSet set;
  set.calibration_times = {0.5, 1.0};
  set.instruments.push_back({0, OptionKind::call, 90.0, 0.0, 1.0});
  set.instruments.push_back({1, OptionKind::put, 110.0, 0.0, 1.0});
  set.instruments.push_back({1, OptionKind::call, 110.0, 0.0, 1.0});
  McConfig cfg;
  cfg.n_paths = 1000;
  cfg.seed = 1;
  const auto q = mc_reprice(s, set, 100.0, cfg);
  EXPECT_EQ(q[0].price, 10.0);
  EXPECT_EQ(q[1].price, 10.0);
  EXPECT_EQ(q[2].price, 0.0);
  EXPECT_EQ(q[0].std_error, 0.0);
}

TEST(McAudit, SameSeedIsBitReproducible) {
  const LocalVarianceTable s = flat_surface(0.04, 5, 1.0);
  const InstrumentSet set = atm_call(1.0);
  McConfig cfg;
  cfg.n_paths = 50'000;
  cfg.block_size = 1000;
  cfg.seed = 77;
  const auto a = mc_reprice(s, set, 100.0, cfg);
  const auto b = mc_reprice(s, set, 100.0, cfg);
  EXPECT_EQ(a[0].price, b[0].price);
  EXPECT_EQ(a[1].std_error, b[1].std_error);
  cfg.seed = 78;
  const auto c = mc_reprice(s, set, 100.0, cfg);
  EXPECT_NE(a[0].price, c[0].price);
}

TEST(McAudit, ErrorShrinksLikeInverseSquareRoot) {
  const LocalVarianceTable s = flat_surface(0.04, 2, 1.0);
  const InstrumentSet set = atm_call(1.0);
  const double want = bs_price(100.0, 100.0, 0.04, OptionKind::call);
  // Average the absolute error over seeds at two path counts (ratio 16).
  double small = 0.0, large = 0.0;
  const int seeds = 24;
  double se_small = 0.0, se_large = 0.0;
  for (int i = 0; i < seeds; ++i) {
    McConfig cfg;
    cfg.seed = 1000 + static_cast<std::uint64_t>(i);
    cfg.n_paths = 4000;
    const auto a = mc_reprice(s, set, 100.0, cfg);
    cfg.n_paths = 64000;
    const auto b = mc_reprice(s, set, 100.0, cfg);
    small += std::abs(a[0].price - want);
    large += std::abs(b[0].price - want);
    se_small += a[0].std_error;
    se_large += b[0].std_error;
  }
  EXPECT_NEAR(se_small / se_large, 4.0, 0.2);
  const double ratio = small / large;
  EXPECT_GT(ratio, 2.0);
  EXPECT_LT(ratio, 8.0);
}

TEST(McAudit, OffGridMaturityIsRejected) {
  const LocalVarianceTable s = flat_surface(0.04, 4, 1.0);
  McConfig cfg;
  cfg.n_paths = 10;
  EXPECT_THROW(mc_reprice(s, atm_call(0.3), 100.0, cfg), DomainError);
  EXPECT_THROW(mc_reprice(s, atm_call(2.0), 100.0, cfg), DomainError);
}

TEST(McAudit, AuditTableSchema) {
  const InstrumentSet set = atm_call(1.0);
  std::vector<McQuote> q(2);
  std::stringstream out;
  write_mc_audit(out, set, q);
  std::string header;
  std::getline(out, header);
  EXPECT_EQ(header, "maturity_time,kind,strike,target_price,mc_price,mc_std_error,mc_implied_vol");
}

}  // namespace
}  // namespace lvot
