// Conformal IDR band and crisp forecast at a few covariates of a simulated
// sample, next to the LSPM and conformal binning forecasts.

#include <cstdio>
#include <string>
#include <vector>

#include "cpsys/cpsys.hpp"

int main() {
  const cps::WeightedSample train = cps::sim::gen_isotonic(500, 7);
  const std::vector<double> xs = {0.5, 2.0, 5.0, 9.5, 12.0};

  const auto bands = cps::cidr_bands(train, xs);
  const cps::ConformalBinning cb =
      cps::fit_conformal_binning(cps::kmeans_1d(train.x(), 10, 10, 1), train);

  std::printf("%6s  %9s  %8s  %10s  %10s  %10s\n", "x", "thickness", "class", "cidr med", "cb med",
              "lspm med");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const cps::BandPrediction p = cps::summarize_band(bands[i], cps::CrispRule::minimax);
    const auto& bin = cb.bin_outcomes[cb.lookup(xs[i]).used];
    const auto cv = cps::lspm_critical_values(train, xs[i]);
    const cps::StepCDF lspm = cps::crisp_midpoint(cps::lspm_band(cv, cv.size()));
    auto median = [](const cps::StepCDF& f) {
      for (std::size_t k = 0; k < f.size(); ++k) {
        if (f.cum()[k] >= 0.5) return f.jumps()[k];
      }
      return f.jumps().back();
    };
    std::printf("%6.2f  %9.3f  %8s  %10.3f  %10.3f  %10.3f\n", xs[i], p.thickness,
                std::string(cps::to_string(p.epistemic)).c_str(), median(p.crisp),
                median(cps::cb_crisp(bin)), median(lspm));
  }
  return 0;
}
