#ifndef CPSYS_SCORING_HPP_
#define CPSYS_SCORING_HPP_

#include <cmath>
#include <cstddef>

#include "cpsys/error.hpp"
#include "cpsys/step_cdf.hpp"

namespace cps {

// Continuous ranked probability score of a step CDF, the exact value of
// integral (1{y <= z} - F(z))^2 dz. Between consecutive points of
// {jumps} u {y} the integrand is constant, so the integral is a finite sum.
inline double crps(const StepCDF& cdf, double y) {
  const auto& jumps = cdf.jumps();
  const auto& cum = cdf.cum();
  double total = 0.0;
  double prev_z = jumps.front();
  double level = cum.front();
  // Below the first jump F = 0; the integrand is nonzero there only if y < jumps[0].
  if (y < jumps.front()) total += jumps.front() - y;
  for (std::size_t i = 1; i < jumps.size(); ++i) {
    const double a = prev_z;
    const double b = jumps[i];
    if (y <= a) {
      total += (b - a) * (1.0 - level) * (1.0 - level);
    } else if (y >= b) {
      total += (b - a) * level * level;
    } else {
      total += (y - a) * level * level + (b - y) * (1.0 - level) * (1.0 - level);
    }
    prev_z = b;
    level = cum[i];
  }
  // Beyond the last jump F = 1; nonzero only if y is larger.
  if (y > prev_z) total += y - prev_z;
  return total;
}

// Randomized probability integral transform F(y-) + v (F(y) - F(y-)).
inline double pit(const StepCDF& cdf, double y, double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw UsageError("pit: randomization v must lie in [0,1]");
  const double left = cdf(y, Side::left);
  const double right = cdf(y, Side::right);
  return left + v * (right - left);
}

}  // namespace cps

#endif  // CPSYS_SCORING_HPP_
