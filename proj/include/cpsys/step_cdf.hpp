#ifndef CPSYS_STEP_CDF_HPP_
#define CPSYS_STEP_CDF_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpsys/error.hpp"

namespace cps {

// Absolute tolerance for comparing probabilities.
inline constexpr double kProbTol = 1e-12;

// Which one-sided value to read at a point: F(y) or the left limit F(y-).
enum class Side { right, left };

// A right-continuous, nondecreasing, piecewise-constant function with values
// in [0, 1]. It equals base() on (-inf, jumps[0]) and levels[i] on
// [jumps[i], jumps[i+1]).
//
// Construction canonicalizes the representation: levels within kProbTol of
// the previous level are merged, so every stored jump has positive height.
class StepFunction {
 public:
  StepFunction() = default;

  StepFunction(double base, std::vector<double> jumps, std::vector<double> levels) {
    if (jumps.size() != levels.size()) {
      throw UsageError("StepFunction: jumps and levels differ in length");
    }
    base_ = snap(base);
    if (!(base_ >= 0.0 && base_ <= 1.0)) {
      throw UsageError("StepFunction: base level outside [0,1]");
    }
    double prev = base_;
    double prev_jump = -INFINITY;
    for (std::size_t i = 0; i < jumps.size(); ++i) {
      if (!std::isfinite(jumps[i])) throw UsageError("StepFunction: non-finite jump point");
      if (!(jumps[i] > prev_jump)) {
        throw UsageError("StepFunction: jump points must be strictly increasing");
      }
      prev_jump = jumps[i];
      double level = snap(levels[i]);
      if (!(level >= 0.0 && level <= 1.0)) {
        throw UsageError("StepFunction: level outside [0,1]");
      }
      if (level < prev - kProbTol) {
        throw UsageError("StepFunction: levels must be nondecreasing");
      }
      if (level <= prev + kProbTol) continue;
      jumps_.push_back(jumps[i]);
      levels_.push_back(level);
      prev = level;
    }
  }

  // Constant function.
  static StepFunction constant(double value) { return StepFunction(value, {}, {}); }

  double operator()(double y, Side side = Side::right) const {
    auto it = side == Side::right ? std::upper_bound(jumps_.begin(), jumps_.end(), y)
                                  : std::lower_bound(jumps_.begin(), jumps_.end(), y);
    if (it == jumps_.begin()) return base_;
    return levels_[static_cast<std::size_t>(it - jumps_.begin()) - 1];
  }

  double base() const { return base_; }
  double terminal() const { return levels_.empty() ? base_ : levels_.back(); }
  const std::vector<double>& jumps() const { return jumps_; }
  const std::vector<double>& levels() const { return levels_; }
  bool operator==(const StepFunction&) const = default;

 private:
  static double snap(double v) {
    if (std::abs(v) <= kProbTol) return 0.0;
    if (std::abs(v - 1.0) <= kProbTol) return 1.0;
    return v;
  }

  double base_ = 0.0;
  std::vector<double> jumps_;
  std::vector<double> levels_;
};

// A predictive CDF with finite support: a StepFunction starting at 0 and
// ending at 1. cum()[i] is F at jumps()[i]; cum is strictly increasing.
class StepCDF {
 public:
  // Point mass at zero.
  StepCDF() : fn_(0.0, {0.0}, {1.0}) {}

  StepCDF(std::vector<double> jumps, std::vector<double> cum)
      : fn_(0.0, std::move(jumps), std::move(cum)) {
    validate();
  }

  explicit StepCDF(StepFunction fn) : fn_(std::move(fn)) { validate(); }

  static StepCDF point_mass(double at) { return StepCDF({at}, {1.0}); }

  // Weighted empirical distribution. Weights are normalized; zero weights are
  // allowed as long as the total is positive.
  static StepCDF empirical(std::span<const double> values, std::span<const double> weights) {
    if (values.empty()) throw UsageError("StepCDF::empirical: no values");
    if (values.size() != weights.size()) {
      throw UsageError("StepCDF::empirical: values and weights differ in length");
    }
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("StepCDF::empirical: bad weight");
      total += w;
    }
    if (!(total > 0.0)) throw UsageError("StepCDF::empirical: total weight must be positive");
    std::vector<double> jumps;
    std::vector<double> cum;
    double acc = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      acc += weights[order[i]];
      double v = values[order[i]];
      if (i + 1 < order.size() && values[order[i + 1]] == v) continue;
      jumps.push_back(v);
      cum.push_back(acc / total);
    }
    cum.back() = 1.0;
    return StepCDF(StepFunction(0.0, std::move(jumps), std::move(cum)));
  }

  static StepCDF empirical(std::span<const double> values) {
    std::vector<double> w(values.size(), 1.0);
    return empirical(values, w);
  }

  double operator()(double y, Side side = Side::right) const { return fn_(y, side); }

  const std::vector<double>& jumps() const { return fn_.jumps(); }
  const std::vector<double>& cum() const { return fn_.levels(); }
  const StepFunction& as_function() const { return fn_; }
  std::size_t size() const { return fn_.jumps().size(); }
  bool operator==(const StepCDF&) const = default;

 private:
  void validate() const {
    if (fn_.base() != 0.0) throw UsageError("StepCDF: must vanish at -infinity");
    if (fn_.jumps().empty() || fn_.terminal() != 1.0) {
      throw UsageError("StepCDF: must reach 1 at its last jump");
    }
  }

  StepFunction fn_;
};

// F(y) for side == right, F(y-) for side == left.
inline double cdf_eval(const StepCDF& cdf, double y, Side side = Side::right) {
  return cdf(y, side);
}

}  // namespace cps

#endif  // CPSYS_STEP_CDF_HPP_
