#ifndef CPSYS_CONFORMAL_IDR_HPP_
#define CPSYS_CONFORMAL_IDR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "cpsys/band.hpp"
#include "cpsys/error.hpp"
#include "cpsys/isotonic.hpp"
#include "cpsys/parallel.hpp"
#include "cpsys/sample.hpp"
#include "cpsys/step_cdf.hpp"

namespace cps {

namespace detail {

inline void check_cutoff(double cutoff) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
    throw UsageError("conformal IDR: cutoff C must be positive and finite");
  }
}

}  // namespace detail

// Conformal IDR band at x_new from two IDR fits: the training sample
// augmented with (x_new, min y - C) gives the upper bound, augmented with
// (x_new, max y + C) the lower bound. IDR is antitone in each outcome, so these
// two fits attain the infimum and supremum over all augmentations.
inline PredictiveBand cidr_band(const WeightedSample& train, double x_new,
                                double cutoff = kDefaultSupportCutoff) {
  if (train.size() == 0) throw UsageError("cidr_band: empty training sample");
  if (!std::isfinite(x_new)) throw UsageError("cidr_band: non-finite covariate");
  detail::check_cutoff(cutoff);
  const double y_min = train.min_y();
  const double y_max = train.max_y();
  IdrFit upper_fit = idr_fit(train.with_point(x_new, y_min - cutoff));
  IdrFit lower_fit = idr_fit(train.with_point(x_new, y_max + cutoff));
  return PredictiveBand(idr_cdf_at(lower_fit, x_new).as_function(),
                        idr_cdf_at(upper_fit, x_new).as_function(), {y_min, y_max});
}

// Test oracle: pointwise min/max over one IDR fit per hypothesized outcome.
inline PredictiveBand cidr_band_bruteforce(const WeightedSample& train, double x_new,
                                           std::span<const double> y_grid) {
  if (y_grid.empty()) throw UsageError("cidr_band_bruteforce: empty outcome grid");
  std::vector<StepCDF> cdfs;
  cdfs.reserve(y_grid.size());
  std::vector<double> points;
  for (double y : y_grid) {
    cdfs.push_back(idr_cdf_at(idr_fit(train.with_point(x_new, y)), x_new));
    points.insert(points.end(), cdfs.back().jumps().begin(), cdfs.back().jumps().end());
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  std::vector<double> lo(points.size(), 1.0);
  std::vector<double> hi(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (const StepCDF& f : cdfs) {
      lo[i] = std::min(lo[i], f(points[i]));
      hi[i] = std::max(hi[i], f(points[i]));
    }
  }
  return PredictiveBand(StepFunction(0.0, points, std::move(lo)),
                        StepFunction(0.0, points, std::move(hi)),
                        {train.min_y(), train.max_y()});
}

// Conformal IDR bands for many test covariates at once.
//
// For each threshold the training indicator means are swept once left to
// right and once right to left with pool-adjacent-violators, keeping every
// intermediate stack as a persistent linked list. The prefix stack ending just
// before a test covariate and the suffix stack starting just after it both
// consist of blocks that are contained in level sets of the full fit, so the
// test point's fitted value follows from pooling it outward with those
// stacks. Cost is O(thresholds * (groups + tests * pooled blocks)) instead of
// O(tests * thresholds * groups) for refitting. Output matches cidr_band.
inline std::vector<PredictiveBand> cidr_bands(const WeightedSample& train,
                                              std::span<const double> xs_new,
                                              double cutoff = kDefaultSupportCutoff,
                                              unsigned threads = 0) {
  if (train.size() == 0) throw UsageError("cidr_bands: empty training sample");
  detail::check_cutoff(cutoff);
  for (double x : xs_new) {
    if (!std::isfinite(x)) throw UsageError("cidr_bands: non-finite covariate");
  }
  const CovariateGroups groups = group_by_covariate(train);
  const std::size_t m = groups.covariates.size();
  for (double w : groups.weights) {
    if (!(w > 0.0)) throw UsageError("cidr_bands: a covariate group has zero total weight");
  }
  const std::size_t n = train.size();
  auto ys = train.y();
  std::vector<std::size_t> by_y(n);
  std::iota(by_y.begin(), by_y.end(), std::size_t{0});
  std::stable_sort(by_y.begin(), by_y.end(),
                   [&](std::size_t a, std::size_t b) { return ys[a] < ys[b]; });

  const double y_min = ys[by_y.front()];
  const double y_max = ys[by_y.back()];
  std::vector<double> thresholds;
  thresholds.push_back(y_min - cutoff);
  for (std::size_t i : by_y) {
    if (thresholds.size() == 1 || ys[i] != thresholds.back()) thresholds.push_back(ys[i]);
  }
  thresholds.push_back(y_max + cutoff);
  const std::size_t nt = thresholds.size();

  struct TestSlot {
    std::size_t left_end;    // groups [0, left_end) lie strictly left
    std::size_t right_begin; // groups [right_begin, m) lie strictly right
    bool tie;                // shares the covariate of group left_end
  };
  std::vector<TestSlot> slots(xs_new.size());
  for (std::size_t k = 0; k < xs_new.size(); ++k) {
    auto it = std::lower_bound(groups.covariates.begin(), groups.covariates.end(), xs_new[k]);
    std::size_t pos = static_cast<std::size_t>(it - groups.covariates.begin());
    bool tie = pos < m && groups.covariates[pos] == xs_new[k];
    slots[k] = {pos, tie ? pos + 1 : pos, tie};
  }

  struct Node {
    double sum;
    double weight;
    std::int64_t prev;
    double mean() const { return sum / weight; }
  };

  std::vector<PredictiveBand> out(xs_new.size());
  const std::size_t chunk = std::max<std::size_t>(1, std::size_t{4'000'000} / nt);
  const std::size_t num_chunks = (xs_new.size() + chunk - 1) / chunk;

  parallel_for(num_chunks, [&](std::size_t c) {
    const std::size_t k0 = c * chunk;
    const std::size_t k1 = std::min(xs_new.size(), k0 + chunk);
    const std::size_t nk = k1 - k0;
    std::vector<double> up(nk * nt), lo(nk * nt);
    std::vector<double> below(m, 0.0);
    std::vector<Node> lr_nodes, rl_nodes;
    lr_nodes.reserve(2 * m);
    rl_nodes.reserve(2 * m);
    std::vector<std::int64_t> lr_top(m + 1), rl_top(m + 1);
    std::size_t next_y = 0;

    for (std::size_t t = 0; t < nt; ++t) {
      while (next_y < n && ys[by_y[next_y]] <= thresholds[t]) {
        below[groups.group_of[by_y[next_y]]] += train.w()[by_y[next_y]];
        ++next_y;
      }
      if (t + 1 == nt) {
        for (std::size_t k = 0; k < nk; ++k) up[k * nt + t] = lo[k * nt + t] = 1.0;
        continue;
      }

      // Prefix stacks; a block may not have a smaller mean than the block to its right.
      lr_nodes.clear();
      std::int64_t top = -1;
      lr_top[0] = -1;
      for (std::size_t g = 0; g < m; ++g) {
        lr_nodes.push_back({below[g], groups.weights[g], top});
        top = static_cast<std::int64_t>(lr_nodes.size()) - 1;
        while (lr_nodes[top].prev >= 0 && lr_nodes[lr_nodes[top].prev].mean() < lr_nodes[top].mean()) {
          const Node& a = lr_nodes[lr_nodes[top].prev];
          Node merged{a.sum + lr_nodes[top].sum, a.weight + lr_nodes[top].weight, a.prev};
          lr_nodes.push_back(merged);
          top = static_cast<std::int64_t>(lr_nodes.size()) - 1;
        }
        lr_top[g + 1] = top;
      }
      // Suffix stacks, built from the right.
      rl_nodes.clear();
      top = -1;
      rl_top[m] = -1;
      for (std::size_t g = m; g-- > 0;) {
        rl_nodes.push_back({below[g], groups.weights[g], top});
        top = static_cast<std::int64_t>(rl_nodes.size()) - 1;
        while (rl_nodes[top].prev >= 0 && rl_nodes[top].mean() < rl_nodes[rl_nodes[top].prev].mean()) {
          const Node& b = rl_nodes[rl_nodes[top].prev];
          Node merged{b.sum + rl_nodes[top].sum, b.weight + rl_nodes[top].weight, b.prev};
          rl_nodes.push_back(merged);
          top = static_cast<std::int64_t>(rl_nodes.size()) - 1;
        }
        rl_top[g] = top;
      }

      for (std::size_t k = 0; k < nk; ++k) {
        const TestSlot& s = slots[k0 + k];
        for (int pass = 0; pass < 2; ++pass) {
          // pass 0: augmented outcome below every threshold (indicator 1), upper bound.
          // pass 1: augmented outcome above every threshold but the last (indicator 0).
          double sum = pass == 0 ? 1.0 : 0.0;
          double weight = 1.0;
          if (s.tie) {
            sum += below[s.left_end];
            weight += groups.weights[s.left_end];
          }
          std::int64_t l = lr_top[s.left_end];
          std::int64_t r = rl_top[s.right_begin];
          for (bool changed = true; changed;) {
            changed = false;
            if (l >= 0 && lr_nodes[l].mean() < sum / weight) {
              sum += lr_nodes[l].sum;
              weight += lr_nodes[l].weight;
              l = lr_nodes[l].prev;
              changed = true;
            }
            if (r >= 0 && rl_nodes[r].mean() > sum / weight) {
              sum += rl_nodes[r].sum;
              weight += rl_nodes[r].weight;
              r = rl_nodes[r].prev;
              changed = true;
            }
          }
          (pass == 0 ? up : lo)[k * nt + t] = sum / weight;
        }
      }
    }

    for (std::size_t k = 0; k < nk; ++k) {
      std::vector<double> ul(up.begin() + static_cast<std::ptrdiff_t>(k * nt),
                             up.begin() + static_cast<std::ptrdiff_t>((k + 1) * nt));
      std::vector<double> ll(lo.begin() + static_cast<std::ptrdiff_t>(k * nt),
                             lo.begin() + static_cast<std::ptrdiff_t>((k + 1) * nt));
      out[k0 + k] = PredictiveBand(StepFunction(0.0, thresholds, std::move(ll)),
                                   StepFunction(0.0, thresholds, std::move(ul)), {y_min, y_max});
    }
  }, threads);
  return out;
}

// Band, crisp CDF, thickness and traffic-light class at one test covariate.
inline BandPrediction cidr_predict(const WeightedSample& train, double x_new,
                                   double cutoff = kDefaultSupportCutoff,
                                   CrispRule rule = CrispRule::minimax) {
  return summarize_band(cidr_band(train, x_new, cutoff), rule, cutoff);
}

}  // namespace cps

#endif  // CPSYS_CONFORMAL_IDR_HPP_
