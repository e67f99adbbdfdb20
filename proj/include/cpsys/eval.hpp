#ifndef CPSYS_EVAL_HPP_
#define CPSYS_EVAL_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/binomial.hpp>

#include "cpsys/band.hpp"
#include "cpsys/binning.hpp"
#include "cpsys/error.hpp"
#include "cpsys/isotonic.hpp"
#include "cpsys/sample.hpp"
#include "cpsys/scoring.hpp"
#include "cpsys/step_cdf.hpp"

namespace cps {

struct PpPoint {
  double alpha;
  double ecdf;
  double band_lo;
  double band_hi;
  bool inside() const { return ecdf >= band_lo && ecdf <= band_hi; }
};

// alpha = 0.01, 0.02, ..., 0.99.
inline std::vector<double> default_pp_grid() {
  std::vector<double> g;
  for (int j = 1; j <= 99; ++j) g.push_back(j / 100.0);
  return g;
}

// Empirical CDF of the PIT values on the grid, with a pointwise consistency
// band: the (1 - level)/2 and (1 + level)/2 quantiles of Binomial(m, alpha) / m,
// each the smallest count whose CDF reaches the probability.
inline std::vector<PpPoint> pp_curve(std::span<const double> pits, std::span<const double> grid,
                                     double band_level = 0.9) {
  if (pits.empty()) throw UsageError("pp_curve: empty PIT sample");
  if (!(band_level > 0.0 && band_level < 1.0)) throw UsageError("pp_curve: band level must lie in (0,1)");
  std::vector<double> sorted(pits.begin(), pits.end());
  for (double p : sorted) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("pp_curve: PIT values must lie in [0,1]");
  }
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  const double tail = 0.5 * (1.0 - band_level);
  std::vector<PpPoint> out;
  out.reserve(grid.size());
  for (double a : grid) {
    if (!(a > 0.0 && a < 1.0)) throw UsageError("pp_curve: grid values must lie in (0,1)");
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), a) - sorted.begin();
    using RoundUp = boost::math::policies::policy<
        boost::math::policies::discrete_quantile<boost::math::policies::integer_round_up>>;
    boost::math::binomial_distribution<double, RoundUp> bin(m, a);
    const double lo = boost::math::quantile(bin, tail);
    const double hi = boost::math::quantile(boost::math::complement(bin, tail));
    out.push_back({a, static_cast<double>(count) / m, lo / m, hi / m});
  }
  return out;
}

inline double pp_fraction_inside(std::span<const PpPoint> curve) {
  if (curve.empty()) return 0.0;
  std::size_t inside = 0;
  for (const PpPoint& p : curve) inside += p.inside() ? 1 : 0;
  return static_cast<double>(inside) / static_cast<double>(curve.size());
}

struct ReliabilityPoint {
  double forecast;
  double frequency;
};

// CORP reliability curve: increasing isotonic regression of binary events on
// the forecast probabilities, one point per distinct forecast value.
inline std::vector<ReliabilityPoint> corp_reliability(std::span<const double> probs,
                                                      std::span<const double> events) {
  if (probs.size() != events.size()) throw UsageError("corp_reliability: length mismatch");
  if (probs.empty()) throw UsageError("corp_reliability: empty input");
  std::vector<std::size_t> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw UsageError("corp_reliability: probability outside [0,1]");
    if (events[i] != 0.0 && events[i] != 1.0) throw UsageError("corp_reliability: events must be 0 or 1");
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  std::vector<double> xs, means, weights;
  for (std::size_t i : order) {
    if (xs.empty() || probs[i] != xs.back()) {
      xs.push_back(probs[i]);
      means.push_back(0.0);
      weights.push_back(0.0);
    }
    means.back() += events[i];
    weights.back() += 1.0;
  }
  for (std::size_t g = 0; g < xs.size(); ++g) means[g] /= weights[g];
  const std::vector<double> fit = pava(means, weights, Monotone::increasing);
  std::vector<ReliabilityPoint> out(xs.size());
  for (std::size_t g = 0; g < xs.size(); ++g) out[g] = {xs[g], fit[g]};
  return out;
}

inline double reliability_max_deviation(std::span<const ReliabilityPoint> curve) {
  double d = 0.0;
  for (const ReliabilityPoint& p : curve) d = std::max(d, std::abs(p.frequency - p.forecast));
  return d;
}

// Sample quantile with linear interpolation between order statistics
// (h = (n - 1) p).
inline double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw UsageError("percentile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw UsageError("percentile: level outside [0,1]");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double h = static_cast<double>(s.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline constexpr std::array<double, 5> kReliabilityLevels = {0.10, 0.25, 0.50, 0.75, 0.90};

namespace detail {

// sup_y |F(y) - G(y)|; both are constant between their merged jump points.
inline double sup_distance(const StepCDF& f, const StepCDF& g) {
  double d = 0.0;
  for (double z : f.jumps()) d = std::max(d, std::abs(f(z) - g(z)));
  for (double z : g.jumps()) d = std::max(d, std::abs(f(z) - g(z)));
  return d;
}

}  // namespace detail

// Auto-calibration discrepancy of in-sample forecasts: points are grouped by
// identical forecast CDF, and each group's forecast is compared (sup norm)
// with the weighted empirical CDF of the group's outcomes.
inline double autocal_discrepancy(std::span<const StepCDF> forecasts, const WeightedSample& sample) {
  if (forecasts.size() != sample.size()) throw UsageError("autocal_discrepancy: forecasts do not align with sample");
  using Key = std::pair<std::vector<double>, std::vector<double>>;
  std::map<Key, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    groups[{forecasts[i].jumps(), forecasts[i].cum()}].push_back(i);
  }
  double worst = 0.0;
  std::vector<double> ys, ws;
  for (const auto& [key, members] : groups) {
    ys.clear();
    ws.clear();
    for (std::size_t i : members) {
      ys.push_back(sample.y()[i]);
      ws.push_back(sample.w()[i]);
    }
    double total = 0.0;
    for (double w : ws) total += w;
    if (!(total > 0.0)) continue;  // zero-weight points carry no conditional law
    worst = std::max(worst, detail::sup_distance(forecasts[members.front()], StepCDF::empirical(ys, ws)));
  }
  return worst;
}

// In-sample auto-calibration of the binning procedure on `sample`.
inline double insample_autocal_check(const BinModel& model, const WeightedSample& sample) {
  const std::vector<StepCDF> forecasts = binning_procedure(model, sample);
  return autocal_discrepancy(forecasts, sample);
}

// In-sample isotonic calibration of an IDR fit: at every threshold, each run
// of equal fitted values must carry the weighted mean of its indicators.
// Returns the largest deviation.
inline double insample_isocal_check(const IdrFit& fit, const WeightedSample& sample) {
  const CovariateGroups groups = group_by_covariate(sample);
  if (groups.covariates != fit.covariates) throw UsageError("insample_isocal_check: fit covariates do not match sample");
  std::vector<double> thresholds(sample.y().begin(), sample.y().end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  if (thresholds != fit.thresholds) throw UsageError("insample_isocal_check: fit thresholds do not match sample");
  if (fit.values.size() != fit.covariates.size() * fit.thresholds.size()) {
    throw UsageError("insample_isocal_check: malformed fit");
  }
  const std::size_t m = groups.covariates.size();
  double worst = 0.0;
  std::vector<double> below(m);
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    std::fill(below.begin(), below.end(), 0.0);
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (sample.y()[i] <= thresholds[t]) below[groups.group_of[i]] += sample.w()[i];
    }
    std::size_t start = 0;
    while (start < m) {
      const double v = fit.value(start, t);
      std::size_t end = start + 1;
      while (end < m && fit.value(end, t) == v) ++end;
      double s = 0.0, w = 0.0;
      for (std::size_t g = start; g < end; ++g) {
        s += below[g];
        w += groups.weights[g];
      }
      worst = std::max(worst, std::abs(s / w - v));
      start = end;
    }
  }
  return worst;
}

// Probabilistic calibration of in-sample forecasts at alpha = j/m, j = 1..m-1:
// P(F(Y) < alpha) <= alpha <= P(F(Y-) <= alpha) under the normalized sample
// weights. Returns the largest violation of either inequality (0 if both hold).
// CDF values within kProbTol of alpha count as equal to it.
inline double insample_probcal_check(std::span<const StepCDF> forecasts, const WeightedSample& sample) {
  if (forecasts.size() != sample.size()) throw UsageError("insample_probcal_check: forecasts do not align with sample");
  const std::size_t m = sample.size();
  const double total = sample.total_weight();
  std::vector<double> right(m), left(m);
  for (std::size_t i = 0; i < m; ++i) {
    right[i] = forecasts[i](sample.y()[i], Side::right);
    left[i] = forecasts[i](sample.y()[i], Side::left);
  }
  double worst = 0.0;
  for (std::size_t j = 1; j < m; ++j) {
    const double alpha = static_cast<double>(j) / static_cast<double>(m);
    double p_below = 0.0, p_left = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (right[i] < alpha - kProbTol) p_below += sample.w()[i];
      if (left[i] <= alpha + kProbTol) p_left += sample.w()[i];
    }
    worst = std::max(worst, p_below / total - alpha);
    worst = std::max(worst, alpha - p_left / total);
  }
  return std::max(0.0, worst);
}

struct ThicknessStats {
  double mean = 0.0;
  double max = 0.0;
  std::array<std::size_t, 10> histogram{};  // [0,0.1), ..., [0.9,1.0]
  std::size_t low = 0;
  std::size_t medium = 0;
  std::size_t high = 0;
};

struct ThresholdReliability {
  double level;      // percentile level of the outcomes
  double threshold;  // the outcome value t
  std::vector<ReliabilityPoint> curve;
  double max_deviation = 0.0;
};

struct EvalReport {
  std::string method;
  std::size_t count = 0;
  double mean_crps = 0.0;
  std::vector<double> pits;
  std::vector<PpPoint> pp;
  double pp_inside_fraction = 0.0;
  std::vector<ThresholdReliability> reliability;
  double mean_reliability_deviation = 0.0;
  ThicknessStats thickness;
  std::size_t flagged = 0;
};

// Streaming accumulation of per-record diagnostics for one method.
class EvalAccumulator {
 public:
  EvalAccumulator(std::string method, std::vector<double> thresholds,
                  std::vector<double> levels = {kReliabilityLevels.begin(), kReliabilityLevels.end()})
      : method_(std::move(method)), thresholds_(std::move(thresholds)), levels_(std::move(levels)) {
    if (thresholds_.size() != levels_.size()) throw UsageError("EvalAccumulator: thresholds and levels differ in length");
    probs_.resize(thresholds_.size());
    events_.resize(thresholds_.size());
  }

  // One test record: crisp forecast, realized outcome, randomization uniform,
  // band thickness, and whether the record was flagged.
  void add(const StepCDF& crisp, double y, double v, double thickness, bool flagged = false) {
    crps_sum_ += crps(crisp, y);
    pits_.push_back(pit(crisp, y, v));
    for (std::size_t t = 0; t < thresholds_.size(); ++t) {
      probs_[t].push_back(crisp(thresholds_[t]));
      events_[t].push_back(y <= thresholds_[t] ? 1.0 : 0.0);
    }
    thick_sum_ += thickness;
    thick_.max = std::max(thick_.max, thickness);
    const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(std::floor(thickness * 10.0)));
    ++thick_.histogram[bin];
    switch (epistemic_class(thickness)) {
      case EpistemicClass::low: ++thick_.low; break;
      case EpistemicClass::medium: ++thick_.medium; break;
      case EpistemicClass::high: ++thick_.high; break;
    }
    flagged_ += flagged ? 1 : 0;
  }

  EvalReport finish(std::span<const double> pp_grid, double band_level = 0.9) const {
    if (pits_.empty()) throw UsageError("EvalAccumulator: no records for method " + method_);
    EvalReport r;
    r.method = method_;
    r.count = pits_.size();
    r.mean_crps = crps_sum_ / static_cast<double>(r.count);
    r.pits = pits_;
    r.pp = pp_curve(pits_, pp_grid, band_level);
    r.pp_inside_fraction = pp_fraction_inside(r.pp);
    double dev_sum = 0.0;
    for (std::size_t t = 0; t < thresholds_.size(); ++t) {
      ThresholdReliability tr{levels_[t], thresholds_[t], corp_reliability(probs_[t], events_[t]), 0.0};
      tr.max_deviation = reliability_max_deviation(tr.curve);
      dev_sum += tr.max_deviation;
      r.reliability.push_back(std::move(tr));
    }
    r.mean_reliability_deviation = thresholds_.empty() ? 0.0 : dev_sum / static_cast<double>(thresholds_.size());
    r.thickness = thick_;
    r.thickness.mean = thick_sum_ / static_cast<double>(r.count);
    r.flagged = flagged_;
    return r;
  }

 private:
  std::string method_;
  std::vector<double> thresholds_;
  std::vector<double> levels_;
  double crps_sum_ = 0.0;
  std::vector<double> pits_;
  std::vector<std::vector<double>> probs_, events_;
  double thick_sum_ = 0.0;
  ThicknessStats thick_;
  std::size_t flagged_ = 0;
};

// The reliability thresholds: percentiles of the observed outcomes.
inline std::vector<double> reliability_thresholds(std::span<const double> outcomes) {
  std::vector<double> out;
  for (double p : kReliabilityLevels) out.push_back(percentile(outcomes, p));
  return out;
}

}  // namespace cps

#endif  // CPSYS_EVAL_HPP_
