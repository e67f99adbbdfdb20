#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cpsys/error.hpp"
#include "cpsys/eval.hpp"
#include "cpsys/isotonic.hpp"
#include "cpsys/random.hpp"
#include "oracles.hpp"

namespace {

using cps::Monotone;
using cps::Side;
using cps::WeightedSample;

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

TEST(Pava, Examples) {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  EXPECT_EQ(cps::pava(a, ones(3), Monotone::increasing), a);

  const std::vector<double> b = {1.0, 0.0, 1.0};
  const std::vector<double> expect_b = {0.5, 0.5, 1.0};
  EXPECT_EQ(cps::pava(b, ones(3), Monotone::increasing), expect_b);
  EXPECT_EQ(oracle::isotonic_bruteforce(b, ones(3), true), expect_b);

  const std::vector<double> c = {1.0, 0.0};
  const std::vector<double> wc = {1.0, 3.0};
  const std::vector<double> expect_c = {0.25, 0.25};
  EXPECT_EQ(cps::pava(c, wc, Monotone::increasing), expect_c);
  EXPECT_EQ(oracle::isotonic_bruteforce(c, wc, true), expect_c);
}

TEST(Pava, DecreasingDirection) {
  const std::vector<double> v = {0.0, 1.0, 0.0};
  const std::vector<double> expect = {0.5, 0.5, 0.0};
  EXPECT_EQ(cps::pava(v, ones(3), Monotone::decreasing), expect);
}

TEST(Pava, RejectsBadInput) {
  const std::vector<double> empty;
  EXPECT_THROW(cps::pava(empty, empty), cps::UsageError);
  const std::vector<double> v = {1.0, 2.0};
  const std::vector<double> w0 = {1.0, 0.0};
  const std::vector<double> w1 = {1.0};
  EXPECT_THROW(cps::pava(v, w0), cps::UsageError);
  EXPECT_THROW(cps::pava(v, w1), cps::UsageError);
}

TEST(PavaProperty, MatchesPartitionEnumeration) {
  cps::Rng rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> v(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = std::round(rng.uniform(-3.0, 3.0) * 2.0) / 2.0;
      w[i] = trial % 2 == 0 ? 1.0 : rng.uniform(0.1, 3.0);
    }
    for (bool inc : {true, false}) {
      const auto fit = cps::pava(v, w, inc ? Monotone::increasing : Monotone::decreasing);
      const auto ref = oracle::isotonic_bruteforce(v, w, inc);
      ASSERT_EQ(fit.size(), ref.size());
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(fit[i], ref[i], 1e-12);
    }
  }
}

TEST(PavaProperty, MonotoneMeanPreservingIdempotent) {
  cps::Rng rng(22);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<double> v(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = rng.normal() + 0.01 * static_cast<double>(i);
      w[i] = rng.uniform(0.1, 3.0);
    }
    const auto fit = cps::pava(v, w, Monotone::increasing);
    double mv = 0.0, mf = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mv += w[i] * v[i];
      mf += w[i] * fit[i];
      if (i > 0) {
        EXPECT_GE(fit[i], fit[i - 1] - 1e-12);
      }
    }
    EXPECT_NEAR(mv, mf, 1e-9 * (1.0 + std::abs(mv)));
    const auto again = cps::pava(fit, w, Monotone::increasing);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(again[i], fit[i], 1e-12);
  }
}

TEST(Idr, ThreePointExample) {
  const WeightedSample s({1.0, 2.0, 3.0}, {1.0, 3.0, 2.0});
  const cps::IdrFit fit = cps::idr_fit(s);
  const cps::StepCDF f = cps::idr_cdf_at(fit, 2.0);
  EXPECT_EQ(f(0.5), 0.0);
  EXPECT_EQ(f(1.0), 0.0);
  EXPECT_EQ(f(1.5), 0.0);
  EXPECT_DOUBLE_EQ(f(2.0), 0.5);
  EXPECT_DOUBLE_EQ(f(2.5), 0.5);
  EXPECT_EQ(f(3.0), 1.0);
  EXPECT_EQ(cps::idr_cdf_at(fit, 1.0)(1.0), 1.0);
  EXPECT_DOUBLE_EQ(cps::idr_cdf_at(fit, 3.0)(2.0), 0.5);
}

TEST(Idr, SinglePointIsPointMass) {
  const WeightedSample s({4.0}, {-2.5});
  const cps::StepCDF f = cps::idr_cdf_at(cps::idr_fit(s), 4.0);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f.jumps()[0], -2.5);
  EXPECT_EQ(f.cum()[0], 1.0);
}

TEST(Idr, EqualCovariatesGiveWeightedEmpirical) {
  const std::vector<double> y = {3.0, 1.0, 2.0, 1.0};
  const std::vector<double> w = {1.0, 0.5, 2.0, 1.5};
  const WeightedSample s({7.0, 7.0, 7.0, 7.0}, y, w);
  const cps::StepCDF f = cps::idr_cdf_at(cps::idr_fit(s), 7.0);
  const cps::StepCDF g = cps::StepCDF::empirical(y, w);
  EXPECT_EQ(f.jumps(), g.jumps());
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f.cum()[i], g.cum()[i], 1e-15);
}

TEST(Idr, UnknownCovariateThrows) {
  const cps::IdrFit fit = cps::idr_fit(WeightedSample({1.0, 2.0}, {1.0, 2.0}));
  EXPECT_THROW(cps::idr_cdf_at(fit, 1.5), cps::UsageError);
}

TEST(IdrProperty, MatchesPerThresholdEnumeration) {
  cps::Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 2 + rng.below(14), trial % 2 == 1);
    const cps::IdrFit fit = cps::idr_fit(s);
    const oracle::IdrOracle ref = oracle::idr_bruteforce(s);
    if (ref.covariates.size() > 10) continue;
    ASSERT_EQ(fit.covariates, ref.covariates);
    ASSERT_EQ(fit.thresholds, ref.thresholds);
    for (std::size_t t = 0; t < fit.num_thresholds(); ++t) {
      for (std::size_t g = 0; g < fit.num_groups(); ++g) {
        EXPECT_NEAR(fit.value(g, t), ref.values[t][g], 1e-12);
      }
    }
  }
}

TEST(IdrProperty, RowsAreCdfsColumnsAreAntitone) {
  cps::Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 5 + rng.below(60), trial % 2 == 0);
    const cps::IdrFit fit = cps::idr_fit(s);
    for (std::size_t g = 0; g < fit.num_groups(); ++g) {
      EXPECT_EQ(fit.value(g, fit.num_thresholds() - 1), 1.0);
      for (std::size_t t = 1; t < fit.num_thresholds(); ++t) {
        EXPECT_GE(fit.value(g, t), fit.value(g, t - 1) - 1e-12);
      }
    }
    for (std::size_t t = 0; t < fit.num_thresholds(); ++t) {
      for (std::size_t g = 1; g < fit.num_groups(); ++g) {
        EXPECT_LE(fit.value(g, t), fit.value(g - 1, t) + 1e-12);
      }
    }
  }
}

// Fitting g(y) for strictly increasing g gives the same values at the
// transformed thresholds.
TEST(IdrProperty, InvariantUnderIncreasingOutcomeTransform) {
  cps::Rng rng(25);
  auto g = [](double y) { return y * y * y + y + std::exp(y / 4.0); };
  for (int trial = 0; trial < 100; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 3 + rng.below(40), trial % 2 == 0);
    std::vector<double> yt;
    for (double y : s.y()) yt.push_back(g(y));
    const WeightedSample st({s.x().begin(), s.x().end()}, yt, {s.w().begin(), s.w().end()});
    const cps::IdrFit a = cps::idr_fit(s);
    const cps::IdrFit b = cps::idr_fit(st);
    ASSERT_EQ(a.num_thresholds(), b.num_thresholds());
    for (std::size_t t = 0; t < a.num_thresholds(); ++t) EXPECT_EQ(g(a.thresholds[t]), b.thresholds[t]);
    EXPECT_EQ(a.values, b.values);
  }
}

// Raising one outcome never increases any fitted CDF value.
TEST(IdrProperty, AntitoneInEachOutcome) {
  cps::Rng rng(26);
  for (int trial = 0; trial < 200; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 2 + rng.below(30), trial % 2 == 0);
    const std::size_t i = rng.below(s.size());
    std::vector<double> y2(s.y().begin(), s.y().end());
    y2[i] += 0.25 * static_cast<double>(1 + rng.below(8));
    const WeightedSample s2({s.x().begin(), s.x().end()}, y2, {s.w().begin(), s.w().end()});
    const cps::IdrFit a = cps::idr_fit(s);
    const cps::IdrFit b = cps::idr_fit(s2);
    for (double x : a.covariates) {
      const cps::StepCDF fa = cps::idr_cdf_at(a, x);
      const cps::StepCDF fb = cps::idr_cdf_at(b, x);
      for (double z = -6.0; z <= 12.0; z += 0.125) EXPECT_LE(fb(z), fa(z) + 1e-12) << "x=" << x << " z=" << z;
    }
  }
}

TEST(Idr, WeightsActLikeReplication) {
  const WeightedSample weighted({1.0, 2.0, 3.0}, {2.0, 1.0, 3.0}, {2.0, 1.0, 1.0});
  const WeightedSample replicated({1.0, 1.0, 2.0, 3.0}, {2.0, 2.0, 1.0, 3.0});
  const cps::IdrFit a = cps::idr_fit(weighted);
  const cps::IdrFit b = cps::idr_fit(replicated);
  ASSERT_EQ(a.values.size(), b.values.size());
  for (std::size_t k = 0; k < a.values.size(); ++k) EXPECT_NEAR(a.values[k], b.values[k], 1e-15);
}

TEST(IdrIsocal, ValidFitIsExact) {
  const WeightedSample s({1.0, 2.0, 3.0}, {1.0, 3.0, 2.0});
  EXPECT_EQ(cps::insample_isocal_check(cps::idr_fit(s), s), 0.0);
}

TEST(IdrIsocal, PerturbationIsDetected) {
  const WeightedSample s({1.0, 2.0, 3.0}, {1.0, 3.0, 2.0});
  cps::IdrFit fit = cps::idr_fit(s);
  // Group 0 at threshold 1 is a singleton level set of value 1.
  fit.values[0] -= 0.01;
  EXPECT_NEAR(cps::insample_isocal_check(fit, s), 0.01, 1e-15);
}

TEST(IdrIsocal, RandomFitsAreExact) {
  cps::Rng rng(27);
  for (int trial = 0; trial < 100; ++trial) {
    const WeightedSample s = oracle::random_sample(rng, 30, trial % 2 == 0, 0.1, 0.05);
    EXPECT_LE(cps::insample_isocal_check(cps::idr_fit(s), s), 1e-12);
  }
}

TEST(IdrIsocal, MismatchedFitThrows) {
  const cps::IdrFit fit = cps::idr_fit(WeightedSample({1.0, 2.0}, {1.0, 2.0}));
  EXPECT_THROW(cps::insample_isocal_check(fit, WeightedSample({1.0, 3.0}, {1.0, 2.0})), cps::UsageError);
}

}  // namespace
