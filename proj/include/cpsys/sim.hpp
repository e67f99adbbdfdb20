#ifndef CPSYS_SIM_HPP_
#define CPSYS_SIM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "cpsys/error.hpp"
#include "cpsys/random.hpp"
#include "cpsys/sample.hpp"

namespace cps::sim {

enum class Model { isotonic, less_isotonic };

inline std::string_view to_string(Model m) {
  return m == Model::isotonic ? "isotonic" : "less_isotonic";
}

inline Model parse_model(std::string_view s) {
  if (s == "isotonic") return Model::isotonic;
  if (s == "less_isotonic" || s == "less-isotonic") return Model::less_isotonic;
  throw UsageError("unknown simulation model '" + std::string(s) + "'");
}

struct SimConfig {
  Model model = Model::isotonic;
  std::size_t n_train = 2000;
  std::size_t n_test = 5000;
  std::uint64_t seed = 1;
};

inline constexpr double kCovariateMax = 10.0;

// Conditional law of the isotonic model: Gamma(shape = sqrt(x), scale = min(max(x, 1), 6)).
struct GammaParams {
  double shape;
  double scale;
};

inline GammaParams isotonic_params(double x) {
  return {std::sqrt(x), std::min(std::max(x, 1.0), 6.0)};
}

// Conditional law of the less isotonic model: Normal(2x + 5 sin x, (x/5)^2).
struct NormalParams {
  double mean;
  double sd;
};

inline NormalParams less_isotonic_params(double x) { return {2.0 * x + 5.0 * std::sin(x), x / 5.0}; }

// One outcome of the isotonic model at covariate x.
inline double draw_isotonic(Rng& rng, double x) {
  const GammaParams p = isotonic_params(x);
  return rng.gamma(p.shape, p.scale);
}

// One outcome of the less isotonic model at covariate x. A standard normal is
// always consumed so the stream does not depend on x; at x = 0 the outcome is
// the mean exactly.
inline double draw_less_isotonic(Rng& rng, double x) {
  const NormalParams p = less_isotonic_params(x);
  const double z = rng.normal();
  return p.sd == 0.0 ? p.mean : p.mean + p.sd * z;
}

// X ~ Unif(0, 10), Y | X from isotonic_params. Unit weights.
inline WeightedSample gen_isotonic(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("gen_isotonic: n must be at least 1");
  Rng rng(seed);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.uniform(0.0, kCovariateMax);
    y[i] = draw_isotonic(rng, x[i]);
  }
  return WeightedSample(std::move(x), std::move(y));
}

// X ~ Unif(0, 10), Y | X from less_isotonic_params. Unit weights.
inline WeightedSample gen_less_isotonic(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("gen_less_isotonic: n must be at least 1");
  Rng rng(seed);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.uniform(0.0, kCovariateMax);
    y[i] = draw_less_isotonic(rng, x[i]);
  }
  return WeightedSample(std::move(x), std::move(y));
}

inline WeightedSample generate(Model model, std::size_t n, std::uint64_t seed) {
  return model == Model::isotonic ? gen_isotonic(n, seed) : gen_less_isotonic(n, seed);
}

// CRPS of Gamma(shape, scale) at y by numerical quadrature of
// int_0^y F(z)^2 dz + int_y^inf (1 - F(z))^2 dz. Double-exponential rules
// cope with the z^shape behaviour of F at zero for small shapes.
inline double gamma_crps_quadrature(double shape, double scale, double y) {
  if (shape <= 0.0) return std::abs(y);  // point mass at zero
  using boost::math::gamma_p;
  using boost::math::gamma_q;
  constexpr double kTol = 1e-10;
  const double yy = std::max(y, 0.0);
  double total = 0.0;
  if (y < 0.0) total += -y;  // F = 0 on [y, 0), indicator 1
  // Below 1e-100 the first integral is under yy itself and is dropped.
  // Likewise P(shape, z / scale) is negligible below this point.
  const double head_end = scale * (shape - 40.0 * std::sqrt(shape));
  if (yy > 1e-100) {
    boost::math::quadrature::tanh_sinh<double> ts;
    total += ts.integrate([&](double z) {
      const double f = z <= std::max(head_end, 0.0) ? 0.0 : gamma_p(shape, z / scale);
      return f * f;
    }, 0.0, yy, kTol);
  }
  // Beyond this point Q(shape, z / scale) is below e^-700; boost may
  // overflow evaluating such tails.
  const double tail_end = scale * (shape + 40.0 * std::sqrt(shape) + 750.0);
  boost::math::quadrature::exp_sinh<double> es;
  total += es.integrate([&](double z) {
    if (z >= tail_end) return 0.0;
    const double q = z <= 0.0 ? 1.0 : gamma_q(shape, z / scale);
    return q * q;
  }, yy, std::numeric_limits<double>::infinity(), kTol);
  return total;
}

// Mean CRPS of the true conditional Gamma law over an isotonic-model test set.
inline double ideal_crps_isotonic(const WeightedSample& test) {
  double total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const GammaParams p = isotonic_params(test.x()[i]);
    total += gamma_crps_quadrature(p.shape, p.scale, test.y()[i]);
  }
  return total / static_cast<double>(test.size());
}

}  // namespace cps::sim

#endif  // CPSYS_SIM_HPP_
