#ifndef CPSYS_ISOTONIC_HPP_
#define CPSYS_ISOTONIC_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cpsys/error.hpp"
#include "cpsys/sample.hpp"
#include "cpsys/step_cdf.hpp"

namespace cps {

enum class Monotone { increasing, decreasing };

namespace detail {

// A pooled block of consecutive positions: weighted sum, weight, and the
// index one past its last member.
struct PavaBlock {
  double sum;
  double weight;
  std::size_t end;
  double mean() const { return sum / weight; }
};

// Block `left` sitting before `right` violates the order constraint.
inline bool violates(const PavaBlock& left, const PavaBlock& right, Monotone dir) {
  return dir == Monotone::increasing ? left.mean() > right.mean() : left.mean() < right.mean();
}

// Weighted pool-adjacent-violators; fills `blocks` with the final level sets.
// Inputs are assumed validated.
inline void pava_blocks(std::span<const double> values, std::span<const double> weights,
                        Monotone dir, std::vector<PavaBlock>& blocks) {
  blocks.clear();
  for (std::size_t i = 0; i < values.size(); ++i) {
    blocks.push_back({values[i] * weights[i], weights[i], i + 1});
    while (blocks.size() > 1 && violates(blocks[blocks.size() - 2], blocks.back(), dir)) {
      PavaBlock top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().weight += top.weight;
      blocks.back().end = top.end;
    }
  }
}

inline void expand_blocks(const std::vector<PavaBlock>& blocks, std::span<double> out) {
  std::size_t start = 0;
  for (const PavaBlock& b : blocks) {
    const double m = b.mean();
    for (std::size_t i = start; i < b.end; ++i) out[i] = m;
    start = b.end;
  }
}

inline void check_pava_input(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw UsageError("pava: empty input");
  if (values.size() != weights.size()) throw UsageError("pava: values and weights differ in length");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw UsageError("pava: non-finite value");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw UsageError("pava: weights must be positive and finite");
    }
  }
}

}  // namespace detail

// Weighted least-squares projection of `values` onto the cone of monotone
// sequences in the requested direction. Each level set carries the weighted
// mean of its members.
inline std::vector<double> pava(std::span<const double> values, std::span<const double> weights,
                                Monotone dir = Monotone::increasing) {
  detail::check_pava_input(values, weights);
  std::vector<detail::PavaBlock> blocks;
  detail::pava_blocks(values, weights, dir, blocks);
  std::vector<double> out(values.size());
  detail::expand_blocks(blocks, out);
  return out;
}

// Covariate-sorted grouping of a sample: distinct covariates, pooled weights,
// and the member indices of each group.
struct CovariateGroups {
  std::vector<double> covariates;
  std::vector<double> weights;
  std::vector<std::size_t> group_of;  // per sample point
};

inline CovariateGroups group_by_covariate(const WeightedSample& sample) {
  const std::size_t n = sample.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto xs = sample.x();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  CovariateGroups g;
  g.group_of.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t i = order[k];
    if (g.covariates.empty() || xs[i] != g.covariates.back()) {
      g.covariates.push_back(xs[i]);
      g.weights.push_back(0.0);
    }
    g.weights.back() += sample.w()[i];
    g.group_of[i] = g.covariates.size() - 1;
  }
  return g;
}

// Isotonic distributional regression on a totally ordered real covariate.
//
// value(g, t) is the fitted CDF of group g at thresholds[t]: for each
// threshold, the weighted antitonic projection of the per-group indicator
// means 1{y <= t}. CDFs decrease (stochastically increase) with the covariate.
struct IdrFit {
  std::vector<double> covariates;     // sorted, distinct
  std::vector<double> group_weights;  // pooled weights per covariate
  std::vector<double> thresholds;     // sorted distinct outcomes
  std::vector<double> values;         // row-major: group x threshold

  std::size_t num_groups() const { return covariates.size(); }
  std::size_t num_thresholds() const { return thresholds.size(); }
  double value(std::size_t g, std::size_t t) const { return values[g * thresholds.size() + t]; }

  // Index of the group with covariate exactly x; throws if there is none.
  std::size_t group_index(double x) const {
    auto it = std::lower_bound(covariates.begin(), covariates.end(), x);
    if (it == covariates.end() || *it != x) {
      throw UsageError("IdrFit: covariate " + std::to_string(x) + " is not among the fitted groups");
    }
    return static_cast<std::size_t>(it - covariates.begin());
  }
};

inline IdrFit idr_fit(const WeightedSample& sample) {
  if (sample.size() == 0) throw UsageError("idr_fit: empty sample");
  CovariateGroups groups = group_by_covariate(sample);
  const std::size_t m = groups.covariates.size();
  const std::size_t n = sample.size();

  for (double w : groups.weights) {
    if (!(w > 0.0)) throw UsageError("idr_fit: a covariate group has zero total weight");
  }

  std::vector<std::size_t> by_y(n);
  std::iota(by_y.begin(), by_y.end(), std::size_t{0});
  auto ys = sample.y();
  std::stable_sort(by_y.begin(), by_y.end(),
                   [&](std::size_t a, std::size_t b) { return ys[a] < ys[b]; });

  IdrFit fit;
  fit.covariates = groups.covariates;
  fit.group_weights = groups.weights;
  for (std::size_t i : by_y) {
    if (fit.thresholds.empty() || ys[i] != fit.thresholds.back()) fit.thresholds.push_back(ys[i]);
  }
  const std::size_t nt = fit.thresholds.size();
  fit.values.assign(m * nt, 0.0);

  std::vector<double> below(m, 0.0);  // weight with y <= threshold, per group
  std::vector<double> means(m);
  std::vector<double> column(m);
  std::vector<detail::PavaBlock> blocks;
  std::size_t k = 0;
  for (std::size_t t = 0; t < nt; ++t) {
    while (k < n && ys[by_y[k]] <= fit.thresholds[t]) {
      below[groups.group_of[by_y[k]]] += sample.w()[by_y[k]];
      ++k;
    }
    if (t + 1 == nt) {
      for (std::size_t g = 0; g < m; ++g) fit.values[g * nt + t] = 1.0;
      continue;
    }
    for (std::size_t g = 0; g < m; ++g) means[g] = below[g] / groups.weights[g];
    detail::pava_blocks(means, groups.weights, Monotone::decreasing, blocks);
    detail::expand_blocks(blocks, column);
    for (std::size_t g = 0; g < m; ++g) fit.values[g * nt + t] = column[g];
  }
  return fit;
}

// The fitted CDF of the group whose covariate equals x.
inline StepCDF idr_cdf_at(const IdrFit& fit, double x) {
  const std::size_t g = fit.group_index(x);
  std::vector<double> levels(fit.values.begin() + static_cast<std::ptrdiff_t>(g * fit.num_thresholds()),
                             fit.values.begin() + static_cast<std::ptrdiff_t>((g + 1) * fit.num_thresholds()));
  return StepCDF(StepFunction(0.0, fit.thresholds, std::move(levels)));
}

}  // namespace cps

#endif  // CPSYS_ISOTONIC_HPP_
