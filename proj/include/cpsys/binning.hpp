#ifndef CPSYS_BINNING_HPP_
#define CPSYS_BINNING_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpsys/band.hpp"
#include "cpsys/error.hpp"
#include "cpsys/isotonic.hpp"
#include "cpsys/random.hpp"
#include "cpsys/sample.hpp"
#include "cpsys/scoring.hpp"
#include "cpsys/step_cdf.hpp"

namespace cps {

enum class BinMethod { kmeans, isomean };

// A partition of the real covariate line into k bins, either by nearest
// k-means center or by interval boundaries.
class BinModel {
 public:
  static BinModel from_centers(std::vector<double> centers) {
    if (centers.empty()) throw UsageError("BinModel: at least one center required");
    check_strict(centers, "centers");
    BinModel m;
    m.method_ = BinMethod::kmeans;
    m.cuts_ = std::move(centers);
    return m;
  }

  static BinModel from_boundaries(std::vector<double> boundaries) {
    check_strict(boundaries, "boundaries");
    BinModel m;
    m.method_ = BinMethod::isomean;
    m.cuts_ = std::move(boundaries);
    return m;
  }

  BinMethod method() const { return method_; }
  std::size_t k() const { return method_ == BinMethod::kmeans ? cuts_.size() : cuts_.size() + 1; }
  // Sorted centers (kmeans) or sorted cut points (isomean).
  const std::vector<double>& centers() const { return cuts_; }
  const std::vector<double>& boundaries() const { return cuts_; }

  bool operator==(const BinModel&) const = default;

 private:
  static void check_strict(const std::vector<double>& v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) throw UsageError(std::string("BinModel: non-finite ") + what);
      if (i > 0 && !(v[i] > v[i - 1])) {
        throw UsageError(std::string("BinModel: ") + what + " must be strictly increasing");
      }
    }
  }

  BinMethod method_ = BinMethod::kmeans;
  std::vector<double> cuts_;
};

// Nearest center (ties to the smaller center) or interval lookup.
inline std::size_t assign_bin(const BinModel& model, double x) {
  const auto& c = model.centers();
  if (model.method() == BinMethod::isomean) {
    return static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), x) - c.begin());
  }
  auto it = std::lower_bound(c.begin(), c.end(), x);
  if (it == c.begin()) return 0;
  if (it == c.end()) return c.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - c.begin());
  return (x - c[hi - 1] <= c[hi] - x) ? hi - 1 : hi;
}

// Within-cluster sum of squared distances to the assigned centers.
inline double kmeans_objective(const BinModel& model, std::span<const double> xs) {
  double sse = 0.0;
  for (double x : xs) {
    const double d = x - model.centers()[assign_bin(model, x)];
    sse += d * d;
  }
  return sse;
}

namespace detail {

// Lloyd iterations on sorted data from sorted initial centers. Clusters are
// contiguous runs of the sorted data.
inline std::vector<double> lloyd_1d(std::span<const double> sorted, std::vector<double> centers,
                                    std::span<const double> prefix) {
  const std::size_t n = sorted.size();
  const std::size_t k = centers.size();
  std::vector<std::size_t> ends(k), prev_ends;
  for (int iter = 0; iter < 1000; ++iter) {
    // Cluster j takes points up to the midpoint with center j + 1 (inclusive,
    // ties go to the smaller center).
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const double mid = 0.5 * (centers[j] + centers[j + 1]);
      ends[j] = static_cast<std::size_t>(
          std::upper_bound(sorted.begin(), sorted.end(), mid) - sorted.begin());
    }
    ends[k - 1] = n;
    if (ends == prev_ends) break;
    prev_ends = ends;
    std::size_t start = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t end = std::max(ends[j], start);
      if (end > start) {
        centers[j] = (prefix[end] - prefix[start]) / static_cast<double>(end - start);
      }
      start = end;
    }
    std::sort(centers.begin(), centers.end());
  }
  return centers;
}

// Exact one-dimensional k-means by dynamic programming over the sorted
// distinct values (with multiplicities). Optimal split points are monotone, so
// each layer is filled by divide and conquer.
inline std::vector<double> kmeans_1d_exact(std::span<const double> distinct, std::span<const double> counts,
                                           std::size_t k) {
  const std::size_t d = distinct.size();
  std::vector<double> w(d + 1, 0.0), s(d + 1, 0.0), q(d + 1, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    w[i + 1] = w[i] + counts[i];
    s[i + 1] = s[i] + counts[i] * distinct[i];
    q[i + 1] = q[i] + counts[i] * distinct[i] * distinct[i];
  }
  // Cost of the cluster holding distinct values [a, b).
  auto cost = [&](std::size_t a, std::size_t b) {
    const double sw = w[b] - w[a], ss = s[b] - s[a];
    return std::max(0.0, (q[b] - q[a]) - ss * ss / sw);
  };
  const double inf = std::numeric_limits<double>::infinity();
  // best[j][i]: optimal cost of the first i values in j + 1 clusters.
  std::vector<std::vector<double>> best(k, std::vector<double>(d + 1, inf));
  std::vector<std::vector<std::size_t>> split(k, std::vector<std::size_t>(d + 1, 0));
  for (std::size_t i = 1; i <= d; ++i) best[0][i] = cost(0, i);
  for (std::size_t j = 1; j < k; ++j) {
    auto fill = [&](auto&& self, std::size_t lo, std::size_t hi, std::size_t opt_lo, std::size_t opt_hi) -> void {
      if (lo > hi) return;
      const std::size_t mid = lo + (hi - lo) / 2;
      double v = inf;
      std::size_t arg = std::max(opt_lo, j);
      for (std::size_t m = std::max(opt_lo, j); m <= std::min(opt_hi, mid - 1); ++m) {
        const double c = best[j - 1][m] + cost(m, mid);
        if (c < v) {
          v = c;
          arg = m;
        }
      }
      best[j][mid] = v;
      split[j][mid] = arg;
      if (mid > lo) self(self, lo, mid - 1, opt_lo, arg);
      self(self, mid + 1, hi, arg, opt_hi);
    };
    fill(fill, j + 1, d, j, d - 1);
  }
  std::vector<double> centers(k);
  std::size_t end = d;
  for (std::size_t j = k; j-- > 0;) {
    const std::size_t start = j == 0 ? 0 : split[j][end];
    centers[j] = (s[end] - s[start]) / (w[end] - w[start]);
    end = start;
  }
  return centers;
}

}  // namespace detail

// One-dimensional k-means: k-means++ seeding followed by Lloyd iterations,
// repeated `restarts` times from one seeded stream, plus the exact dynamic
// programming solution. The lowest objective wins (earliest restart on ties).
inline BinModel kmeans_1d(std::span<const double> xs, std::size_t k, std::size_t restarts = 10,
                          std::uint64_t seed = 1) {
  if (xs.empty()) throw UsageError("kmeans_1d: empty input");
  if (k == 0) throw UsageError("kmeans_1d: k must be positive");
  if (restarts == 0) throw UsageError("kmeans_1d: restarts must be positive");
  std::vector<double> sorted(xs.begin(), xs.end());
  for (double x : sorted) {
    if (!std::isfinite(x)) throw UsageError("kmeans_1d: non-finite covariate");
  }
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (k > distinct.size()) {
    throw UsageError("kmeans_1d: k = " + std::to_string(k) + " exceeds the " +
                     std::to_string(distinct.size()) + " distinct covariate values");
  }
  const std::size_t n = sorted.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];

  Rng rng(seed);
  std::optional<BinModel> best;
  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<double> dist2(n);
  for (std::size_t r = 0; r < restarts; ++r) {
    std::vector<double> centers;
    centers.push_back(sorted[rng.below(n)]);
    while (centers.size() < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double d = std::numeric_limits<double>::infinity();
        for (double c : centers) d = std::min(d, (sorted[i] - c) * (sorted[i] - c));
        dist2[i] = d;
        total += d;
      }
      double u = rng.uniform() * total;
      std::size_t pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (dist2[i] <= 0.0) continue;
        pick = i;
        u -= dist2[i];
        if (u < 0.0) break;
      }
      centers.push_back(sorted[pick]);
    }
    std::sort(centers.begin(), centers.end());
    centers = detail::lloyd_1d(sorted, std::move(centers), prefix);
    centers.erase(std::unique(centers.begin(), centers.end()), centers.end());
    if (centers.size() < k) continue;  // collapsed restart
    BinModel model = BinModel::from_centers(centers);
    const double sse = kmeans_objective(model, sorted);
    if (sse < best_sse) {
      best_sse = sse;
      best = std::move(model);
    }
  }
  std::vector<double> counts;
  for (double v : distinct) {
    counts.push_back(static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), v) -
                                         std::lower_bound(sorted.begin(), sorted.end(), v)));
  }
  BinModel exact = BinModel::from_centers(detail::kmeans_1d_exact(distinct, counts, k));
  if (!best || kmeans_objective(exact, sorted) < best_sse) best = std::move(exact);
  return *best;
}

// Bins from an increasing isotonic mean regression of outcome on covariate:
// the maximal flat pieces of the fit, separated at midpoints between the
// neighbouring pieces' extreme covariates.
inline BinModel isomean_bins(const WeightedSample& estimation) {
  if (estimation.size() == 0) throw UsageError("isomean_bins: empty input");
  CovariateGroups groups = group_by_covariate(estimation);
  const std::size_t m = groups.covariates.size();
  std::vector<double> sums(m, 0.0);
  for (std::size_t i = 0; i < estimation.size(); ++i) {
    sums[groups.group_of[i]] += estimation.w()[i] * estimation.y()[i];
  }
  std::vector<double> means(m), weights;
  for (std::size_t g = 0; g < m; ++g) {
    if (!(groups.weights[g] > 0.0)) throw UsageError("isomean_bins: zero-weight covariate group");
    means[g] = sums[g] / groups.weights[g];
  }
  std::vector<detail::PavaBlock> blocks;
  detail::pava_blocks(means, groups.weights, Monotone::increasing, blocks);
  std::vector<double> boundaries;
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    if (blocks[b].mean() == blocks[b + 1].mean()) continue;  // same level set
    const std::size_t last = blocks[b].end - 1;
    boundaries.push_back(0.5 * (groups.covariates[last] + groups.covariates[last + 1]));
  }
  return BinModel::from_boundaries(std::move(boundaries));
}

// Conformal binning band for a bin with outcomes y_1..y_b:
// lower(y) = #{y_j <= y} / (b + 1), upper(y) = (#{y_j <= y} + 1) / (b + 1).
inline PredictiveBand cb_band(std::span<const double> bin_outcomes) {
  if (bin_outcomes.empty()) throw DataError("cb_band: empty bin");
  std::vector<double> sorted(bin_outcomes.begin(), bin_outcomes.end());
  std::sort(sorted.begin(), sorted.end());
  const double denom = static_cast<double>(sorted.size() + 1);
  std::vector<double> jumps, lo, hi;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    jumps.push_back(sorted[i]);
    lo.push_back(static_cast<double>(i + 1) / denom);
    hi.push_back(static_cast<double>(i + 2) / denom);
  }
  return PredictiveBand(StepFunction(0.0, jumps, std::move(lo)),
                        StepFunction(1.0 / denom, jumps, std::move(hi)),
                        {sorted.front(), sorted.back()});
}

// Crisp conformal binning forecast: the empirical CDF of the bin's outcomes.
inline StepCDF cb_crisp(std::span<const double> bin_outcomes) {
  if (bin_outcomes.empty()) throw DataError("cb_crisp: empty bin");
  return StepCDF::empirical(bin_outcomes);
}

// A bin model together with the calibration outcomes falling in each bin.
struct ConformalBinning {
  BinModel model;
  std::vector<std::vector<double>> bin_outcomes;

  // Bin to predict from: the assigned bin, or the nearest populated one
  // (flagged) when the assigned bin is empty.
  struct Lookup {
    std::size_t assigned;
    std::size_t used;
    bool fallback;
  };

  Lookup lookup(double x) const {
    const std::size_t b = assign_bin(model, x);
    if (!bin_outcomes[b].empty()) return {b, b, false};
    for (std::size_t d = 1; d < bin_outcomes.size(); ++d) {
      if (b >= d && !bin_outcomes[b - d].empty()) return {b, b - d, true};
      if (b + d < bin_outcomes.size() && !bin_outcomes[b + d].empty()) return {b, b + d, true};
    }
    throw DataError("ConformalBinning: no populated bin");
  }
};

inline ConformalBinning fit_conformal_binning(BinModel model, const WeightedSample& calibration) {
  ConformalBinning cb{std::move(model), {}};
  cb.bin_outcomes.resize(cb.model.k());
  for (std::size_t i = 0; i < calibration.size(); ++i) {
    cb.bin_outcomes[assign_bin(cb.model, calibration.x()[i])].push_back(calibration.y()[i]);
  }
  return cb;
}

// The in-sample binning procedure: every point gets the weighted empirical
// CDF of the outcomes sharing its bin.
inline std::vector<StepCDF> binning_procedure(const BinModel& model, const WeightedSample& sample) {
  const std::size_t k = model.k();
  std::vector<std::vector<double>> ys(k), ws(k);
  std::vector<std::size_t> bin(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    bin[i] = assign_bin(model, sample.x()[i]);
    ys[bin[i]].push_back(sample.y()[i]);
    ws[bin[i]].push_back(sample.w()[i]);
  }
  std::vector<std::optional<StepCDF>> per_bin(k);
  std::vector<StepCDF> out;
  out.reserve(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto& cdf = per_bin[bin[i]];
    if (!cdf) cdf = StepCDF::empirical(ys[bin[i]], ws[bin[i]]);
    out.push_back(*cdf);
  }
  return out;
}

// Chooses k among `candidates` by mean CRPS of the crisp binning forecast
// under `folds`-fold cross-validation. Returns the smallest k on ties.
inline std::size_t select_k_cv(const WeightedSample& sample, std::span<const std::size_t> candidates,
                               std::size_t folds = 5, std::size_t restarts = 10,
                               std::uint64_t seed = 1) {
  if (candidates.empty()) throw UsageError("select_k_cv: no candidate k");
  if (folds < 2 || folds > sample.size()) throw UsageError("select_k_cv: invalid fold count");
  const std::size_t n = sample.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xCF));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  std::size_t best_k = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t k : candidates) {
    double total = 0.0;
    bool feasible = true;
    for (std::size_t f = 0; f < folds && feasible; ++f) {
      std::vector<std::size_t> fit_idx, hold_idx;
      for (std::size_t i = 0; i < n; ++i) (i % folds == f ? hold_idx : fit_idx).push_back(perm[i]);
      WeightedSample fit_part = sample.subset(fit_idx);
      std::vector<double> fit_x(fit_part.x().begin(), fit_part.x().end());
      std::vector<double> distinct = fit_x;
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      if (k > distinct.size()) {
        feasible = false;
        break;
      }
      ConformalBinning cb =
          fit_conformal_binning(kmeans_1d(fit_x, k, restarts, derive_seed(seed, f)), fit_part);
      for (std::size_t i : hold_idx) {
        const auto lk = cb.lookup(sample.x()[i]);
        total += crps(cb_crisp(cb.bin_outcomes[lk.used]), sample.y()[i]);
      }
    }
    if (!feasible) continue;
    const double score = total / static_cast<double>(n);
    if (score < best_score) {
      best_score = score;
      best_k = k;
    }
  }
  if (best_k == 0) throw UsageError("select_k_cv: every candidate k exceeds the distinct covariates");
  return best_k;
}

}  // namespace cps

#endif  // CPSYS_BINNING_HPP_
