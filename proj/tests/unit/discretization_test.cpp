#include "lvot/discretization.hpp"
#include "lvot/errors.hpp"
#include "lvot/market_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace lvot {
namespace {

TEST(TimeGrid, UniformWithCalibrationSteps) {
  const std::vector<double> times{0.2, 0.4, 1.0};
  const TimeGrid g = TimeGrid::uniform(1.0, 10, times);
  EXPECT_EQ(g.n_steps, 10u);
  EXPECT_DOUBLE_EQ(g.step, 0.1);
  EXPECT_EQ(g.times.size(), 11u);
  EXPECT_EQ(g.horizon(), 1.0);
  EXPECT_EQ(g.calibration_steps, (std::vector<std::size_t>{2, 4, 10}));
}

TEST(TimeGrid, OffGridCalibrationTimeThrows) {
  const std::vector<double> times{0.2, 0.5};
  EXPECT_THROW(TimeGrid::uniform(1.0, 5, times), DomainError);
  EXPECT_FALSE(calibration_aligned(1.0, 5, times));
  EXPECT_TRUE(calibration_aligned(1.0, 10, times));
  EXPECT_THROW(TimeGrid::uniform(1.0, 0), DomainError);
}

TEST(Truncation, ConstantCoefficientsByHand) {
  const TimeGrid g = TimeGrid::uniform(1.0, 4);
  const Coefficients c = Coefficients::constant(-0.02, 0.2, 4);
  const auto b = truncate_domain(0.5, 0.0, c, g, 5.0);
  ASSERT_EQ(b.size(), 5u);
  EXPECT_EQ(b[0].lower, 0.5);
  EXPECT_EQ(b[0].upper, 0.5);
  for (std::size_t k = 1; k <= 4; ++k) {
    const double t = 0.25 * static_cast<double>(k);
    const double m = 0.5 - 0.02 * t;
    const double s = 5.0 * 0.2 * std::sqrt(t);
    EXPECT_NEAR(b[k].lower, m - s, 1e-14);
    EXPECT_NEAR(b[k].upper, m + s, 1e-14);
  }
}

TEST(Truncation, BoundsAreNestedForZeroDrift) {
  const TimeGrid g = TimeGrid::uniform(1.0, 8);
  const Coefficients c = Coefficients::martingale({0.1, 0.3, 0.2, 0.25, 0.2, 0.2, 0.1, 0.4});
  const auto b = truncate_domain(0.0, 0.05, c, g, 5.0);
  for (std::size_t k = 1; k < b.size(); ++k) {
    EXPECT_GE(b[k].upper - b[k].lower, b[k - 1].upper - b[k - 1].lower);
  }
}

TEST(SpaceGrid, AnchoredSpacingAndCover) {
  std::vector<Interval> bounds{{4.0, 4.7}, {3.9, 5.2}};
  const double anchor = std::log(100.0);
  const SpaceGrid g = build_space_grid(bounds, 0.04, 0.2, 4.0, 1000, anchor);
  EXPECT_NEAR(g.dx, 0.2 * 0.2 / 4.0, 1e-16);
  EXPECT_LE(g.lower, 3.9);
  EXPECT_GE(g.upper, 5.2);
  EXPECT_EQ(g.points(static_cast<Eigen::Index>(g.nearest(anchor))), anchor);
  for (Eigen::Index i = 1; i < g.points.size(); ++i) {
    EXPECT_NEAR(g.points(i) - g.points(i - 1), g.dx, 1e-12);
  }
  EXPECT_EQ(g.nearest(-100.0), 0u);
  EXPECT_EQ(g.nearest(100.0), g.n_points - 1);
}

TEST(SpaceGrid, CapRaisesResourceErrorWithStep) {
  std::vector<Interval> bounds{{0.0, 10.0}};
  try {
    build_space_grid(bounds, 0.01, 0.2, 4.0, 100, 5.0, 3);
    FAIL();
  } catch (const ResourceError& e) {
    EXPECT_EQ(e.step(), 3u);
  }
}

SpaceGrid small_grid(std::size_t n, double dx) {
  return SpaceGrid::uniform(-dx * static_cast<double>(n / 2), dx, n);
}

TEST(Reference, KernelRowsAreStochastic) {
  const TimeGrid t = TimeGrid::uniform(1.0, 3);
  const SpaceGrid s = small_grid(41, 0.05);
  const ReferenceMeasure ref = build_reference(t, s, Coefficients::constant(0.0, 0.2, 3), {0.0, 0.0});
  for (std::size_t k = 0; k < 3; ++k) {
    const Eigen::MatrixXd p = ref.kernel(k);
    EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-13);
    EXPECT_TRUE((p.array() >= 0.0).all());
    EXPECT_LT((ref.kernels[k]->yx - ref.kernels[k]->xy.transpose()).cwiseAbs().maxCoeff(), 0.0 + 1e-300);
  }
  EXPECT_EQ(ref.rho0.sum(), 1.0);
  EXPECT_EQ(ref.rho0(20), 1.0);
}

TEST(Reference, IdenticalStepsShareKernels) {
  const TimeGrid t = TimeGrid::uniform(1.0, 4);
  const SpaceGrid s = small_grid(21, 0.1);
  const ReferenceMeasure a = build_reference(t, s, Coefficients::constant(0.0, 0.2, 4), {0.0, 0.0});
  EXPECT_EQ(a.kernels[0].get(), a.kernels[3].get());
  const ReferenceMeasure b =
      build_reference(t, s, Coefficients::martingale({0.2, 0.3, 0.2, 0.3}), {0.0, 0.0});
  EXPECT_EQ(b.kernels[0].get(), b.kernels[2].get());
  EXPECT_NE(b.kernels[0].get(), b.kernels[1].get());
}

TEST(Reference, GaussianInitialLawAndMoments) {
  const TimeGrid t = TimeGrid::uniform(0.25, 1);
  const SpaceGrid s = small_grid(201, 0.01);
  const ReferenceMeasure ref =
      build_reference(t, s, Coefficients::constant(0.1, 0.2, 1), {0.0, 0.1});
  EXPECT_NEAR(ref.rho0.sum(), 1.0, 1e-14);
  const Eigen::VectorXd mean0 = ref.rho0.transpose() * s.points;
  EXPECT_NEAR(mean0(0), 0.0, 1e-12);
  // One step from the centre point: mean drift * h, variance vol^2 h.
  const Eigen::MatrixXd p = ref.kernel(0);
  const Eigen::VectorXd row = p.row(100).transpose();
  const double m = row.dot(s.points);
  const double v = row.dot(s.points.cwiseProduct(s.points)) - m * m;
  EXPECT_NEAR(m, 0.1 * 0.25, 1e-6);
  EXPECT_NEAR(v, 0.04 * 0.25, 1e-5);
}

TEST(Reference, RejectsNonPositiveVol) {
  const TimeGrid t = TimeGrid::uniform(1.0, 1);
  EXPECT_THROW(build_reference(t, small_grid(5, 0.1), Coefficients::constant(0.0, 0.0, 1), {}),
               DomainError);
}

TEST(Bootstrap, ForwardVariance) {
  const std::vector<double> vols{0.2, 0.25, 0.22};
  const std::vector<double> times{0.5, 1.0, 2.0};
  const PiecewiseVol pv = bootstrap_reference_vol(vols, times);
  EXPECT_NEAR(pv.sigma[0], 0.2, 1e-15);
  EXPECT_NEAR(pv.sigma[1], std::sqrt((0.0625 - 0.02) / 0.5), 1e-15);
  EXPECT_NEAR(pv.sigma[2], std::sqrt((0.22 * 0.22 * 2.0 - 0.0625) / 1.0), 1e-15);
  // Total variance is reproduced at every calibration time.
  double w = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    w += pv.sigma[i] * pv.sigma[i] * (times[i] - prev);
    prev = times[i];
    EXPECT_NEAR(w, vols[i] * vols[i] * times[i], 1e-15);
  }
  EXPECT_EQ(pv.at(0.7), pv.sigma[1]);
  EXPECT_EQ(pv.at(1.0), pv.sigma[1]);
}

TEST(Bootstrap, DecreasingTotalVarianceThrows) {
  const std::vector<double> vols{0.3, 0.1};
  const std::vector<double> times{0.5, 1.0};
  EXPECT_THROW(bootstrap_reference_vol(vols, times), DomainError);
}

TEST(Bootstrap, AtmVolsFromSsviQuotes) {
  const std::vector<double> times{0.2, 1.0};
  StrikeRule rule;
  rule.counts = {3, 3};
  const InstrumentSet set = generate_market(SsviParams{}, 100.0, times, rule);
  const auto atm = atm_vols_from_instruments(set, 100.0);
  ASSERT_EQ(atm.size(), 2u);
  // The SSVI ATM vol is 0.2; strikes 99 and 101 bracket the forward closely.
  EXPECT_NEAR(atm[0], 0.2, 2e-3);
  EXPECT_NEAR(atm[1], 0.2, 2e-3);
}

TEST(Reference, SummaryTableHasOneRowPerStep) {
  const TimeGrid t = TimeGrid::uniform(1.0, 4);
  const SpaceGrid s = small_grid(21, 0.1);
  const Coefficients c = Coefficients::constant(0.0, 0.2, 4);
  const ReferenceMeasure ref = build_reference(t, s, c, {0.0, 0.0});
  const auto bounds = truncate_domain(0.0, 0.0, c, t, 5.0);
  std::stringstream out;
  write_reference_summary(out, ref, bounds);
  std::string line;
  std::getline(out, line);
  EXPECT_EQ(line, "step,t,lower,upper,n_points,vol_min,vol_max,drift_min,drift_max");
  int rows = 0;
  while (std::getline(out, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

}  // namespace
}  // namespace lvot
