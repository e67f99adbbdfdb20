#ifndef CPSYS_BAND_HPP_
#define CPSYS_BAND_HPP_

#include <algorithm>
#include <cmath>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "cpsys/error.hpp"
#include "cpsys/step_cdf.hpp"

namespace cps {

// Default widening of the outcome range used for crisp extraction and for the
// extreme augmentation points of conformal IDR.
inline constexpr double kDefaultSupportCutoff = 1.0;

// Closed outcome interval [lo, hi].
struct OutcomeRange {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const OutcomeRange&) const = default;
};

// A predictive system (Pi_lower, Pi_upper): two nondecreasing right-continuous
// step functions with lower <= upper everywhere.
//
// The outcome range records the training outcomes the band was built from;
// crisp extraction widens it by a cutoff to close off the support.
class PredictiveBand {
 public:
  PredictiveBand() = default;

  PredictiveBand(StepFunction lower, StepFunction upper, OutcomeRange range)
      : lower_(std::move(lower)), upper_(std::move(upper)), range_(range) {
    if (!(range_.lo <= range_.hi) || !std::isfinite(range_.lo) || !std::isfinite(range_.hi)) {
      throw UsageError("PredictiveBand: invalid outcome range");
    }
    if (lower_.base() > upper_.base() + kProbTol) {
      throw UsageError("PredictiveBand: lower exceeds upper");
    }
    for (double b : breakpoints()) {
      if (lower_(b) > upper_(b) + kProbTol) {
        throw UsageError("PredictiveBand: lower exceeds upper");
      }
    }
  }

  const StepFunction& lower() const { return lower_; }
  const StepFunction& upper() const { return upper_; }
  OutcomeRange outcome_range() const { return range_; }

  double lower(double y, Side side = Side::right) const { return lower_(y, side); }
  double upper(double y, Side side = Side::right) const { return upper_(y, side); }

  // lim_{y->-inf} lower = 0 and lim_{y->+inf} upper = 1. Bands built from
  // degenerate conformity scores (infinite critical values) can fail this.
  bool has_proper_limits() const { return lower_.base() == 0.0 && upper_.terminal() == 1.0; }

  // Sorted union of the jump points of both bounds.
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    out.reserve(lower_.jumps().size() + upper_.jumps().size());
    std::merge(lower_.jumps().begin(), lower_.jumps().end(), upper_.jumps().begin(),
               upper_.jumps().end(), std::back_inserter(out));
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool operator==(const PredictiveBand&) const = default;

 private:
  StepFunction lower_;
  StepFunction upper_;
  OutcomeRange range_;
};

// Essential supremum of upper - lower. Both bounds are constant on each open
// interval between merged breakpoints, and that constant is the right value at
// the interval's left end; values attained only at breakpoints are ignored.
inline double band_thickness(const PredictiveBand& band) {
  double best = band.upper().base() - band.lower().base();
  for (double b : band.breakpoints()) best = std::max(best, band.upper(b) - band.lower(b));
  return std::clamp(best, 0.0, 1.0);
}

namespace detail {

template <class Combine>
StepCDF crisp_from_band(const PredictiveBand& band, double cutoff, Combine combine) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
    throw UsageError("crisp CDF: support cutoff must be positive and finite");
  }
  const double lo = band.outcome_range().lo - cutoff;
  const double hi = band.outcome_range().hi + cutoff;
  std::vector<double> bps = band.breakpoints();
  if (!bps.empty() && (bps.front() < lo || bps.back() > hi)) {
    throw UsageError("crisp CDF: support cutoff does not cover the band breakpoints");
  }
  std::vector<double> jumps;
  std::vector<double> levels;
  jumps.push_back(lo);
  levels.push_back(combine(band.lower(lo), band.upper(lo)));
  for (double b : bps) {
    if (b <= lo || b >= hi) continue;
    jumps.push_back(b);
    levels.push_back(combine(band.lower(b), band.upper(b)));
  }
  if (hi > lo) {
    jumps.push_back(hi);
    levels.push_back(1.0);
  } else {
    levels.back() = 1.0;
  }
  return StepCDF(StepFunction(0.0, std::move(jumps), std::move(levels)));
}

}  // namespace detail

// Pointwise midpoint (lower + upper) / 2 on [lo - C, hi + C]; 0 below, 1 from hi + C.
inline StepCDF crisp_midpoint(const PredictiveBand& band,
                              double support_cutoff = kDefaultSupportCutoff) {
  return detail::crisp_from_band(band, support_cutoff,
                                 [](double l, double u) { return 0.5 * (l + u); });
}

// Pointwise CRPS-minimax choice F = u - u^2/2 + l^2/2, which equalizes the
// worst-case integrand loss at the two bounds.
inline StepCDF crisp_minimax(const PredictiveBand& band,
                             double support_cutoff = kDefaultSupportCutoff) {
  return detail::crisp_from_band(band, support_cutoff, [](double l, double u) {
    return u - 0.5 * u * u + 0.5 * l * l;
  });
}

enum class CrispRule { midpoint, minimax };

inline StepCDF crisp(const PredictiveBand& band, CrispRule rule,
                     double support_cutoff = kDefaultSupportCutoff) {
  return rule == CrispRule::midpoint ? crisp_midpoint(band, support_cutoff)
                                     : crisp_minimax(band, support_cutoff);
}

// Traffic-light grading of epistemic uncertainty by band thickness.
enum class EpistemicClass { low, medium, high };

inline constexpr double kLowThicknessCut = 0.25;
inline constexpr double kHighThicknessCut = 0.5;

// low below 0.25, medium on [0.25, 0.5], high above 0.5.
inline EpistemicClass epistemic_class(double thickness) {
  if (!(thickness >= 0.0 && thickness <= 1.0)) {
    throw UsageError("epistemic_class: thickness must lie in [0,1]");
  }
  if (thickness < kLowThicknessCut) return EpistemicClass::low;
  if (thickness <= kHighThicknessCut) return EpistemicClass::medium;
  return EpistemicClass::high;
}

inline std::string_view to_string(EpistemicClass c) {
  switch (c) {
    case EpistemicClass::low: return "low";
    case EpistemicClass::medium: return "medium";
    case EpistemicClass::high: return "high";
  }
  return "unknown";
}

// A band together with the crisp CDF read from it and its uncertainty grade.
struct BandPrediction {
  PredictiveBand band;
  StepCDF crisp;
  double thickness = 0.0;
  EpistemicClass epistemic = EpistemicClass::low;
};

inline BandPrediction summarize_band(PredictiveBand band, CrispRule rule,
                                     double support_cutoff = kDefaultSupportCutoff) {
  BandPrediction out;
  out.crisp = crisp(band, rule, support_cutoff);
  out.thickness = band_thickness(band);
  out.epistemic = epistemic_class(out.thickness);
  out.band = std::move(band);
  return out;
}

inline std::string_view to_string(CrispRule r) {
  return r == CrispRule::midpoint ? "midpoint" : "minimax";
}

}  // namespace cps

#endif  // CPSYS_BAND_HPP_
