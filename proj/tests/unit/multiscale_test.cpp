#include "lvot/errors.hpp"
#include "lvot/multiscale.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace lvot {
namespace {

LocalVarianceTable two_step_table() {
  LocalVarianceTable t;
  t.step = 0.5;
  t.times = {0.0, 0.5};
  t.grid = SpaceGrid::uniform(0.0, 1.0, 3);
  t.variance = {Eigen::Vector3d(0.04, 0.05, 0.06), Eigen::Vector3d(0.08, 0.09, 0.10)};
  t.filled = {std::vector<bool>(3, false), std::vector<bool>(3, false)};
  return t;
}

TEST(Refine, LinearBetweenMidpointsConstantOutside) {
  const LocalVarianceTable t = two_step_table();
  // Midpoints of the coarse steps: 0.25 and 0.75. Target midpoints: 0.125, 0.375, 0.625, 0.875.
  const auto v = refine(t, TimeGrid::uniform(1.0, 4));
  ASSERT_EQ(v.size(), 4u);
  EXPECT_NEAR(v[0](0), 0.04, 1e-15);
  EXPECT_NEAR(v[1](0), 0.04 + 0.25 * 0.04, 1e-15);
  EXPECT_NEAR(v[2](2), 0.06 + 0.75 * 0.04, 1e-15);
  EXPECT_NEAR(v[3](1), 0.09, 1e-15);
}

TEST(Refine, SameGridIsIdentity) {
  const LocalVarianceTable t = two_step_table();
  const auto v = refine(t, TimeGrid::uniform(1.0, 2));
  EXPECT_EQ(v[0], t.variance[0]);
  EXPECT_EQ(v[1], t.variance[1]);
}

TEST(Refine, CoefficientsAreMartingaleDrift) {
  const LocalVarianceTable t = two_step_table();
  const Coefficients c = refine_coefficients(t, TimeGrid::uniform(1.0, 2));
  EXPECT_NEAR(c.vol(1, 2.0), std::sqrt(0.10), 1e-15);
  EXPECT_NEAR(c.drift(0, 0.0), -0.02, 1e-15);
  EXPECT_NEAR(c.vol_max[1], std::sqrt(0.10), 1e-15);
  EXPECT_NEAR(c.drift_min[1], -0.05, 1e-15);
}

TEST(Surface, LookupUsesStepAndNearestPoint) {
  const LocalVarianceTable t = two_step_table();
  EXPECT_EQ(t.lookup(0.0, 0.4), 0.04);
  EXPECT_EQ(t.lookup(0.49, 1.6), 0.06);
  EXPECT_EQ(t.lookup(0.5, 1.0), 0.09);
  EXPECT_EQ(t.lookup(3.0, -5.0), 0.08);
}

TEST(Surface, TableRoundTripIsExact) {
  const LocalVarianceTable t = two_step_table();
  std::stringstream io;
  write_surface(io, t);
  const LocalVarianceTable back = read_surface(io, 1.0);
  EXPECT_EQ(back.step, 0.5);
  EXPECT_EQ(back.times, t.times);
  EXPECT_EQ(back.grid.points, t.grid.points);
  EXPECT_EQ(back.variance[0], t.variance[0]);
  EXPECT_EQ(back.variance[1], t.variance[1]);
}

TEST(Surface, ReferenceChainGivesReferenceVariance) {
  const TimeGrid time = TimeGrid::uniform(0.5, 2);
  const SpaceGrid s = SpaceGrid::uniform(-1.5, 0.01, 301);
  const ReferenceMeasure ref =
      build_reference(time, s, Coefficients::martingale({0.2, 0.3}), {0.0, 0.0});
  const MomentTable table = MomentTable::tabulate(MomentFunction::martingale(), s);
  const TiltedChain chain(ref, table, std::vector<Eigen::MatrixXd>(3, Eigen::MatrixXd(301, 0)));
  const PotentialSet pot = PotentialSet::zeros(2, 301, 1, {0, 0, 0});
  const LocalVarianceTable t = extract_surface(chain, pot, chain.sweeps(pot));
  ASSERT_EQ(t.n_steps(), 2u);
  EXPECT_NEAR(t.variance[0](150), 0.04, 1e-8);
  EXPECT_NEAR(t.variance[1](150), 0.09, 1e-8);
  // Step 0 starts from a Dirac: every other row is unsupported and filled.
  EXPECT_FALSE(t.filled[0][150]);
  EXPECT_TRUE(t.filled[0][0]);
  EXPECT_EQ(t.variance[0](0), t.variance[0](150));
  EXPECT_GE(t.variance[1].minCoeff(), 1e-4);
}

TEST(Ladder, ValidateChecksOrderAndAlignment) {
  const std::vector<double> times{0.2, 1.0};
  EXPECT_NO_THROW((ScaleLadder{{5, 10, 20}}.validate(1.0, times)));
  EXPECT_THROW((ScaleLadder{{5, 4}}.validate(1.0, times)), DomainError);
  EXPECT_THROW((ScaleLadder{{5, 7}}.validate(1.0, times)), DomainError);
  EXPECT_THROW((ScaleLadder{{}}.validate(1.0, times)), DomainError);
}

TEST(Ladder, RunsEveryScaleOnOneGrid) {
  StrikeRule rule;
  rule.counts = {1};
  const std::vector<double> times{1.0};
  const InstrumentSet set = generate_market(SsviParams{}, 100.0, times, rule, 1e4);
  LadderConfig cfg;
  cfg.ladder.step_counts = {2, 4};
  cfg.points_per_std = 2.0;
  cfg.solver.accelerate = true;
  cfg.solver.max_iterations = 300;
  std::vector<std::size_t> seen;
  const LadderResult r = run_ladder(cfg, set, [&](const ScaleResult& s) { seen.push_back(s.n_steps); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{2, 4}));
  ASSERT_EQ(r.scales.size(), 2u);
  EXPECT_EQ(r.reference->n_steps(), 4u);
  EXPECT_EQ(r.reference->n_points(), r.grid.n_points);
  EXPECT_EQ(r.bounds.size(), 5u);
  EXPECT_EQ(r.scales[1].surface.n_steps(), 4u);
  for (const auto& s : r.scales) {
    EXPECT_EQ(s.report.history.size(), s.report.iterations);
    EXPECT_LT(s.report.final.max_rel_price_err, 1e-2);
  }
}

TEST(Ladder, GridCapIsReported) {
  const std::vector<double> times{1.0};
  const InstrumentSet set = generate_market(SsviParams{}, 100.0, times, StrikeRule{{1}, 1.0, 4.0});
  LadderConfig cfg;
  cfg.ladder.step_counts = {50};
  cfg.max_points = 50;
  EXPECT_THROW(run_ladder(cfg, set), ResourceError);
}

}  // namespace
}  // namespace lvot
