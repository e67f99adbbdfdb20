#ifndef CPSYS_LSPM_HPP_
#define CPSYS_LSPM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpsys/band.hpp"
#include "cpsys/error.hpp"
#include "cpsys/sample.hpp"
#include "cpsys/step_cdf.hpp"

namespace cps {

struct LinearFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd fitted;
  // h_k = w_k x_k' (X'WX)^-1 x_k, in [0, 1).
  Eigen::VectorXd hat_diagonal;
  // d fitted_k / d y_last: column of the hat matrix belonging to the last row.
  Eigen::VectorXd cross_leverage;
};

// Weighted least squares. The design is used as given, so callers add an
// intercept column themselves (see with_intercept).
inline LinearFit wls_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& weights) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n || weights.size() != n) throw UsageError("wls_fit: dimension mismatch");
  if (p == 0) throw UsageError("wls_fit: empty design");
  if (n < p) throw NumericError("wls_fit: fewer rows than regression parameters");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw UsageError("wls_fit: weights must be positive and finite");
    }
  }
  if (!design.allFinite() || !y.allFinite()) throw UsageError("wls_fit: non-finite input");

  const Eigen::VectorXd sw = weights.cwiseSqrt();
  const Eigen::MatrixXd xw = sw.asDiagonal() * design;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
  if (qr.rank() < p) throw NumericError("wls_fit: design is rank deficient");

  const Eigen::MatrixXd gram = xw.transpose() * xw;
  const Eigen::MatrixXd inv = gram.ldlt().solve(Eigen::MatrixXd::Identity(p, p));

  LinearFit fit;
  fit.coefficients = qr.solve(sw.cwiseProduct(y));
  fit.fitted = design * fit.coefficients;
  const Eigen::MatrixXd xm = design * inv;
  fit.hat_diagonal = weights.cwiseProduct((xm.cwiseProduct(design)).rowwise().sum());
  fit.cross_leverage = xm * design.row(n - 1).transpose() * weights[n - 1];
  return fit;
}

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out(features.rows(), features.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(features.cols()) = features;
  return out;
}

inline Eigen::MatrixXd column_matrix(std::span<const double> xs) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = xs[i];
  return m;
}

namespace detail {

inline constexpr double kLeverageTol = 1e-10;
inline constexpr double kSlopeTol = 1e-12;

inline Eigen::MatrixXd augmented_design(const Eigen::MatrixXd& features,
                                        const Eigen::RowVectorXd& x_new) {
  if (x_new.size() != features.cols()) throw UsageError("LSPM: test feature dimension mismatch");
  Eigen::MatrixXd aug(features.rows() + 1, features.cols());
  aug.topRows(features.rows()) = features;
  aug.row(features.rows()) = x_new;
  return with_intercept(aug);
}

}  // namespace detail

// Critical values of the studentized least squares prediction machine.
//
// With the test outcome hypothesized as y, the augmented least-squares fit
// (intercept plus features) has residuals affine in y while the leverages do
// not depend on y. The test score (y - yhat) / sqrt(1 - h) therefore minus
// the score of training point i is alpha_i + beta_i y, and
// C_i = -alpha_i / beta_i is where the test score overtakes score i. When
// beta_i is not positive the gap never changes sign from -inf to +inf and C_i is
// -inf (test score always larger) or +inf (never larger), by the sign of the
// gap as y -> +inf. Returned sorted.
inline std::vector<double> lspm_critical_values(const Eigen::MatrixXd& features,
                                                std::span<const double> y,
                                                const Eigen::RowVectorXd& x_new) {
  const Eigen::Index n = features.rows();
  if (n == 0) throw UsageError("lspm_critical_values: empty training sample");
  if (static_cast<Eigen::Index>(y.size()) != n) {
    throw UsageError("lspm_critical_values: features and outcomes differ in length");
  }
  const Eigen::MatrixXd design = detail::augmented_design(features, x_new);
  Eigen::VectorXd y0(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) y0[i] = y[static_cast<std::size_t>(i)];
  y0[n] = 0.0;
  const LinearFit fit = wls_fit(design, y0, Eigen::VectorXd::Ones(n + 1));

  const double h_new = fit.hat_diagonal[n];
  if (!(1.0 - h_new > detail::kLeverageTol)) {
    throw NumericError("lspm_critical_values: test point has leverage one");
  }
  const double s_new = std::sqrt(1.0 - h_new);
  const double a_new = -fit.fitted[n] / s_new;

  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = fit.hat_diagonal[i];
    if (!(1.0 - hi > detail::kLeverageTol)) {
      throw NumericError("lspm_critical_values: training point " + std::to_string(i) +
                         " has leverage one");
    }
    const double s_i = std::sqrt(1.0 - hi);
    const double alpha = a_new - (y0[i] - fit.fitted[i]) / s_i;
    const double beta = s_new + fit.cross_leverage[i] / s_i;
    double c;
    // A constant gap of rounding size is a permanent tie; it takes the
    // alpha <= 0 branch, so the strict count never includes it.
    const double gap_tol = 1e-12 * (1.0 + std::abs(a_new) + std::abs((y0[i] - fit.fitted[i]) / s_i));
    if (beta > detail::kSlopeTol) {
      c = -alpha / beta;
    } else if (beta < -detail::kSlopeTol || alpha <= gap_tol) {
      c = std::numeric_limits<double>::infinity();
    } else {
      c = -std::numeric_limits<double>::infinity();
    }
    out[static_cast<std::size_t>(i)] = c;
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Scalar-covariate convenience overload.
inline std::vector<double> lspm_critical_values(const WeightedSample& train, double x_new) {
  Eigen::RowVectorXd xn(1);
  xn[0] = x_new;
  return lspm_critical_values(column_matrix(train.x()), train.y(), xn);
}

// Band of a conformity-measure system from its sorted critical values:
// lower(y) = #{C_i < y} / (n + 1) and upper(y) = (#{C_i <= y} + 1) / (n + 1).
//
// The lower bound is left-continuous at the critical values; it is stored in
// right-continuous form, so the strict count is lower(y, Side::left). The
// outcome range is the hull of the finite critical values.
inline PredictiveBand lspm_band(std::span<const double> critical_values, std::size_t n) {
  if (critical_values.size() != n) throw UsageError("lspm_band: expected n critical values");
  if (n == 0) throw UsageError("lspm_band: no critical values");
  if (!std::is_sorted(critical_values.begin(), critical_values.end())) {
    throw UsageError("lspm_band: critical values must be sorted");
  }
  const double denom = static_cast<double>(n + 1);
  std::size_t neg_inf = 0;
  std::vector<double> jumps, lo, hi;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = critical_values[i];
    if (std::isnan(c)) throw UsageError("lspm_band: NaN critical value");
    if (c == -std::numeric_limits<double>::infinity()) {
      ++neg_inf;
      continue;
    }
    if (std::isinf(c)) break;
    if (i + 1 < n && critical_values[i + 1] == c) continue;
    jumps.push_back(c);
    lo.push_back(static_cast<double>(i + 1) / denom);
    hi.push_back(static_cast<double>(i + 2) / denom);
  }
  OutcomeRange range{0.0, 0.0};
  if (!jumps.empty()) range = {jumps.front(), jumps.back()};
  return PredictiveBand(StepFunction(static_cast<double>(neg_inf) / denom, jumps, std::move(lo)),
                        StepFunction(static_cast<double>(neg_inf + 1) / denom, jumps,
                                     std::move(hi)),
                        range);
}

// A conformity measure: given the augmented features (test row last) and
// augmented outcomes, returns the score of every point.
using ConformityMeasure =
    std::function<std::vector<double>(const Eigen::MatrixXd&, std::span<const double>)>;

// Studentized least-squares residuals (y_k - yhat_k) / sqrt(1 - h_k) of a fit
// with intercept.
inline ConformityMeasure studentized_lspm_measure() {
  return [](const Eigen::MatrixXd& features, std::span<const double> y) {
    const Eigen::Index n = features.rows();
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];
    const LinearFit fit = wls_fit(with_intercept(features), yv, Eigen::VectorXd::Ones(n));
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double one_minus_h = 1.0 - fit.hat_diagonal[i];
      if (!(one_minus_h > detail::kLeverageTol)) throw NumericError("LSPM measure: leverage one");
      scores[static_cast<std::size_t>(i)] = (yv[i] - fit.fitted[i]) / std::sqrt(one_minus_h);
    }
    return scores;
  };
}

// Values of a conformity-measure band at grid points, by refitting per grid value.
struct NumericBand {
  std::vector<double> grid;
  std::vector<double> lower;  // #{A_i < A_test} / (n + 1)
  std::vector<double> upper;  // (#{A_i <= A_test} + 1) / (n + 1)
  // False if either bound decreases along the grid: the measure does not
  // induce scores increasing in the test outcome.
  bool monotone = true;
};

inline NumericBand cm_numeric_band(const ConformityMeasure& measure, const Eigen::MatrixXd& features,
                                   std::span<const double> y, const Eigen::RowVectorXd& x_new,
                                   std::span<const double> grid) {
  const Eigen::Index n = features.rows();
  if (n == 0) throw UsageError("cm_numeric_band: empty training sample");
  if (static_cast<Eigen::Index>(y.size()) != n) {
    throw UsageError("cm_numeric_band: features and outcomes differ in length");
  }
  if (x_new.size() != features.cols()) throw UsageError("cm_numeric_band: feature dimension mismatch");
  if (grid.empty()) throw UsageError("cm_numeric_band: empty grid");
  Eigen::MatrixXd aug(n + 1, features.cols());
  aug.topRows(n) = features;
  aug.row(n) = x_new;
  std::vector<double> ya(y.begin(), y.end());
  ya.push_back(0.0);

  NumericBand out;
  out.grid.assign(grid.begin(), grid.end());
  const double denom = static_cast<double>(n + 1);
  for (double g : grid) {
    ya.back() = g;
    const std::vector<double> scores = measure(aug, ya);
    if (scores.size() != ya.size()) throw UsageError("cm_numeric_band: measure returned wrong length");
    const double a_test = scores.back();
    // Scores equal up to rounding count as ties.
    const double tol = 1e-9 * (1.0 + std::abs(a_test));
    std::size_t less = 0, less_eq = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = scores[static_cast<std::size_t>(i)];
      if (a < a_test - tol) ++less;
      if (a <= a_test + tol) ++less_eq;
    }
    out.lower.push_back(static_cast<double>(less) / denom);
    out.upper.push_back(static_cast<double>(less_eq + 1) / denom);
  }
  for (std::size_t i = 1; i < out.grid.size(); ++i) {
    if (out.grid[i] < out.grid[i - 1]) throw UsageError("cm_numeric_band: grid must be sorted");
    if (out.lower[i] < out.lower[i - 1] || out.upper[i] < out.upper[i - 1]) out.monotone = false;
  }
  return out;
}

// Residual procedure: G[mu, x_k](y) = sum_j p_j 1{yhat_k + e_j <= y} with
// residuals e_j = y_j - yhat_j and normalized weights p_j.
inline std::vector<StepCDF> residual_procedure(const WeightedSample& sample,
                                               std::span<const double> fitted) {
  const std::size_t n = sample.size();
  if (fitted.size() != n) throw UsageError("residual_procedure: fitted values do not align with sample");
  std::vector<double> resid(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(fitted[j])) throw UsageError("residual_procedure: non-finite fitted value");
    resid[j] = sample.y()[j] - fitted[j];
  }
  std::vector<double> shifted(n);
  std::vector<StepCDF> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    // yhat_k + e_j written as y_k + (e_j - e_k), so the own residual lands on
    // y_k exactly instead of one rounding away from it.
    for (std::size_t j = 0; j < n; ++j) shifted[j] = sample.y()[k] + (resid[j] - resid[k]);
    out.push_back(StepCDF::empirical(shifted, sample.w()));
  }
  return out;
}

// Split conformity-measure system with the fixed measure A[x](y) = y - r(x):
// critical values C_i = r(x_new) + (y_i - r(x_i)) over the calibration set.
inline std::vector<double> split_residual_critical_values(std::span<const double> calib_y,
                                                          std::span<const double> calib_pred,
                                                          double pred_new) {
  if (calib_y.size() != calib_pred.size()) {
    throw UsageError("split_residual_critical_values: length mismatch");
  }
  std::vector<double> out(calib_y.size());
  for (std::size_t i = 0; i < calib_y.size(); ++i) out[i] = pred_new + (calib_y[i] - calib_pred[i]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace cps

#endif  // CPSYS_LSPM_HPP_
