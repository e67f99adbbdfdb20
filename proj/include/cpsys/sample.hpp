#ifndef CPSYS_SAMPLE_HPP_
#define CPSYS_SAMPLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cpsys/error.hpp"

namespace cps {

// A finite weighted measure on covariate/outcome pairs, sum_i w_i delta_(x_i, y_i).
class WeightedSample {
 public:
  WeightedSample() = default;

  WeightedSample(std::vector<double> x, std::vector<double> y, std::vector<double> w)
      : x_(std::move(x)), y_(std::move(y)), w_(std::move(w)) {
    if (x_.empty()) throw UsageError("WeightedSample: at least one point required");
    if (x_.size() != y_.size() || x_.size() != w_.size()) {
      throw UsageError("WeightedSample: column lengths differ");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if (!std::isfinite(x_[i]) || !std::isfinite(y_[i])) {
        throw UsageError("WeightedSample: non-finite value at point " + std::to_string(i));
      }
      if (!std::isfinite(w_[i]) || w_[i] < 0.0) {
        throw UsageError("WeightedSample: negative or non-finite weight at point " +
                         std::to_string(i));
      }
      total += w_[i];
    }
    if (!(total > 0.0)) throw UsageError("WeightedSample: total weight must be positive");
  }

  WeightedSample(std::vector<double> x, std::vector<double> y)
      : WeightedSample(x, y, std::vector<double>(x.size(), 1.0)) {}

  std::size_t size() const { return x_.size(); }
  std::span<const double> x() const { return x_; }
  std::span<const double> y() const { return y_; }
  std::span<const double> w() const { return w_; }

  double total_weight() const {
    double t = 0.0;
    for (double v : w_) t += v;
    return t;
  }
  double min_y() const { return *std::min_element(y_.begin(), y_.end()); }
  double max_y() const { return *std::max_element(y_.begin(), y_.end()); }

  bool unit_weights() const {
    return std::all_of(w_.begin(), w_.end(), [](double v) { return v == 1.0; });
  }

  // Copy with one extra point appended.
  WeightedSample with_point(double x, double y, double w = 1.0) const {
    WeightedSample out = *this;
    out.x_.push_back(x);
    out.y_.push_back(y);
    out.w_.push_back(w);
    if (!std::isfinite(x) || !std::isfinite(y) || !(w >= 0.0)) {
      throw UsageError("WeightedSample::with_point: invalid point");
    }
    return out;
  }

  // Subsample by index.
  WeightedSample subset(std::span<const std::size_t> idx) const {
    std::vector<double> x, y, w;
    x.reserve(idx.size());
    y.reserve(idx.size());
    w.reserve(idx.size());
    for (std::size_t i : idx) {
      x.push_back(x_.at(i));
      y.push_back(y_.at(i));
      w.push_back(w_.at(i));
    }
    return WeightedSample(std::move(x), std::move(y), std::move(w));
  }

  bool operator==(const WeightedSample&) const = default;

 private:
  std::vector<double> x_, y_, w_;
};

}  // namespace cps

#endif  // CPSYS_SAMPLE_HPP_
