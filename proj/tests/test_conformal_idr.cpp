#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cpsys/conformal_idr.hpp"
#include "cpsys/error.hpp"
#include "cpsys/random.hpp"
#include "oracles.hpp"

namespace {

using cps::PredictiveBand;
using cps::Side;
using cps::WeightedSample;

// Points at which two bands must agree: every breakpoint of either, the
// midpoints between them, and one point beyond each end.
std::vector<double> probe_points(const PredictiveBand& a, const PredictiveBand& b) {
  std::vector<double> pts = a.breakpoints();
  const std::vector<double> pb = b.breakpoints();
  pts.insert(pts.end(), pb.begin(), pb.end());
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  std::vector<double> out;
  if (pts.empty()) return {0.0};
  out.push_back(pts.front() - 1.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.push_back(pts[i]);
    if (i + 1 < pts.size()) out.push_back(0.5 * (pts[i] + pts[i + 1]));
  }
  out.push_back(pts.back() + 1.0);
  return out;
}

void expect_same_band(const PredictiveBand& a, const PredictiveBand& b, double tol) {
  for (double z : probe_points(a, b)) {
    EXPECT_NEAR(a.lower(z), b.lower(z), tol) << "lower at " << z;
    EXPECT_NEAR(a.upper(z), b.upper(z), tol) << "upper at " << z;
  }
}

const WeightedSample kTwoPoint({1.0, 2.0}, {1.0, 2.0});

TEST(CidrBand, TwoPointExample) {
  const PredictiveBand b = cps::cidr_band(kTwoPoint, 1.5, 1.0);
  EXPECT_EQ(b.upper(-0.5), 0.0);
  EXPECT_DOUBLE_EQ(b.upper(0.0), 0.5);
  EXPECT_DOUBLE_EQ(b.upper(0.99), 0.5);
  EXPECT_EQ(b.upper(1.0), 1.0);
  EXPECT_EQ(b.lower(1.99), 0.0);
  EXPECT_DOUBLE_EQ(b.lower(2.0), 0.5);
  EXPECT_DOUBLE_EQ(b.lower(2.99), 0.5);
  EXPECT_EQ(b.lower(3.0), 1.0);
  EXPECT_EQ(cps::band_thickness(b), 1.0);
}

TEST(CidrBand, TwoPointMatchesFiveFitBruteForce) {
  const std::vector<double> grid = {0.0, 1.0, 1.5, 2.0, 3.0};
  expect_same_band(cps::cidr_band(kTwoPoint, 1.5, 1.0), cps::cidr_band_bruteforce(kTwoPoint, 1.5, grid), 0.0);
}

TEST(CidrBand, EqualCovariatesGiveG0Band) {
  const std::vector<double> y = {0.5, 2.0, 1.0, 3.5};
  const WeightedSample s({2.0, 2.0, 2.0, 2.0}, y);
  const PredictiveBand b = cps::cidr_band(s, 2.0);
  for (double z = -2.0; z <= 6.0; z += 0.25) {
    double count = 0.0;
    for (double v : y) count += v <= z ? 1.0 : 0.0;
    if (z >= y.front() - 1.0 && z < 3.5 + 1.0) {
      EXPECT_NEAR(b.lower(z), count / 5.0, 1e-15) << z;
      EXPECT_NEAR(b.upper(z), (count + 1.0) / 5.0, 1e-15) << z;
    }
  }
}

TEST(CidrBand, SinglePointExample) {
  const PredictiveBand b = cps::cidr_band(WeightedSample({0.0}, {0.0}), 0.0, 1.0);
  EXPECT_EQ(b.lower(-0.01), 0.0);
  EXPECT_DOUBLE_EQ(b.lower(0.0), 0.5);
  EXPECT_DOUBLE_EQ(b.lower(0.99), 0.5);
  EXPECT_EQ(b.lower(1.0), 1.0);
  EXPECT_EQ(b.upper(-1.01), 0.0);
  EXPECT_DOUBLE_EQ(b.upper(-1.0), 0.5);
  EXPECT_EQ(b.upper(0.0), 1.0);
  const std::vector<double> grid = {-1.0, 0.0, 1.0};
  expect_same_band(b, cps::cidr_band_bruteforce(WeightedSample({0.0}, {0.0}), 0.0, grid), 0.0);
}

TEST(CidrBand, RejectsBadInput) {
  EXPECT_THROW(cps::cidr_band(kTwoPoint, 1.5, 0.0), cps::UsageError);
  EXPECT_THROW(cps::cidr_band(kTwoPoint, std::nan(""), 1.0), cps::UsageError);
  EXPECT_THROW(cps::cidr_band(WeightedSample(), 1.0), cps::UsageError);
  const std::vector<double> empty;
  EXPECT_THROW(cps::cidr_band_bruteforce(kTwoPoint, 1.5, empty), cps::UsageError);
}

TEST(CidrPredict, TwoPointIsHighUncertainty) {
  const cps::BandPrediction p = cps::cidr_predict(kTwoPoint, 1.5);
  EXPECT_EQ(p.thickness, 1.0);
  EXPECT_EQ(p.epistemic, cps::EpistemicClass::high);
  // lower 0 and upper 1 on [1, 2): minimax gives 1/2.
  EXPECT_DOUBLE_EQ(p.crisp(1.5), 0.5);
}

// 50 hypothesized outcomes: every training outcome, both ends of the widened
// range, and evenly spaced fill.
std::vector<double> fifty_point_grid(const WeightedSample& s, double cutoff) {
  std::vector<double> g(s.y().begin(), s.y().end());
  const double lo = s.min_y() - cutoff, hi = s.max_y() + cutoff;
  g.push_back(lo);
  g.push_back(hi);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  for (std::size_t k = 1; g.size() < 50; ++k) g.push_back(lo + (hi - lo) * static_cast<double>(k) / 64.0);
  std::sort(g.begin(), g.end());
  return g;
}

TEST(CidrProperty, TwoRunEqualsBruteForce) {
  cps::Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 1 + rng.below(20), trial % 3 == 0);
    const double x_new = std::round(rng.uniform(-1.0, 6.0) * 2.0) / 2.0;
    const double cutoff = trial % 2 == 0 ? 1.0 : 0.3;
    const std::vector<double> grid = fifty_point_grid(s, cutoff);
    expect_same_band(cps::cidr_band(s, x_new, cutoff), cps::cidr_band_bruteforce(s, x_new, grid), 1e-12);
  }
}

TEST(CidrProperty, BatchedEqualsPerPoint) {
  cps::Rng rng(32);
  for (int trial = 0; trial < 60; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 1 + rng.below(80), trial % 2 == 0);
    std::vector<double> xs;
    for (int k = 0; k < 25; ++k) xs.push_back(std::round(rng.uniform(-1.0, 6.0) * 4.0) / 4.0);
    const auto batch = cps::cidr_bands(s, xs, 1.0, trial % 3 == 0 ? 1 : 0);
    ASSERT_EQ(batch.size(), xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const PredictiveBand single = cps::cidr_band(s, xs[k], 1.0);
      expect_same_band(batch[k], single, 1e-12);
      EXPECT_EQ(batch[k].outcome_range(), single.outcome_range());
    }
  }
}

TEST(CidrProperty, BoundsOrderedAndProper) {
  cps::Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 1 + rng.below(50), trial % 2 == 0);
    const PredictiveBand b = cps::cidr_band(s, rng.uniform(-1.0, 6.0));
    EXPECT_TRUE(b.has_proper_limits());
    for (double z : probe_points(b, b)) EXPECT_LE(b.lower(z), b.upper(z) + 1e-12);
    const double t = cps::band_thickness(b);
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
  }
}

TEST(CidrProperty, InvariantUnderIncreasingCovariateMap) {
  cps::Rng rng(34);
  auto h = [](double x) { return std::exp(x) + 3.0 * x; };
  for (int trial = 0; trial < 100; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 1 + rng.below(40), trial % 2 == 0);
    std::vector<double> xt;
    for (double x : s.x()) xt.push_back(h(x));
    const WeightedSample st(xt, {s.y().begin(), s.y().end()}, {s.w().begin(), s.w().end()});
    const double x_new = std::round(rng.uniform(-1.0, 6.0) * 4.0) / 4.0;
    expect_same_band(cps::cidr_band(s, x_new), cps::cidr_band(st, h(x_new)), 0.0);
  }
}

TEST(CidrProperty, WellPopulatedRegionsAreThinner) {
  // A dense cloud of covariates in [0, 1] and one far-away x: the interior
  // band is thinner than the band at the unfamiliar covariate.
  cps::Rng rng(35);
  std::vector<double> x, y;
  for (int i = 0; i < 400; ++i) {
    x.push_back(rng.uniform());
    y.push_back(x.back() + rng.normal());
  }
  const WeightedSample s(x, y);
  EXPECT_LT(cps::band_thickness(cps::cidr_band(s, 0.5)), cps::band_thickness(cps::cidr_band(s, 50.0)));
}

}  // namespace
