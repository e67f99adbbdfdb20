#ifndef CPSYS_PIPELINE_HPP_
#define CPSYS_PIPELINE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpsys/band.hpp"
#include "cpsys/binning.hpp"
#include "cpsys/conformal_idr.hpp"
#include "cpsys/error.hpp"
#include "cpsys/eval.hpp"
#include "cpsys/io.hpp"
#include "cpsys/lspm.hpp"
#include "cpsys/parallel.hpp"
#include "cpsys/random.hpp"
#include "cpsys/sample.hpp"
#include "cpsys/sim.hpp"
#include "cpsys/version.hpp"

namespace cps::pipeline {

using io::json;

enum class Method { cidr, cb, lspm };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::cidr: return "cidr";
    case Method::cb: return "cb";
    case Method::lspm: return "lspm";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  if (s == "cidr") return Method::cidr;
  if (s == "cb") return Method::cb;
  if (s == "lspm") return Method::lspm;
  throw UsageError("unknown method '" + std::string(s) + "' (expected cidr, cb or lspm)");
}

// Stream tags for derive_seed; fixed so every entry point draws the same data.
inline constexpr std::uint64_t kTagPit = 100;
inline constexpr std::uint64_t kTagKmeans = 200;
inline constexpr std::uint64_t kTagKSelect = 201;

inline std::uint64_t train_seed(std::uint64_t seed, sim::Model m) {
  return derive_seed(seed, m == sim::Model::isotonic ? 0 : 2);
}
inline std::uint64_t test_seed(std::uint64_t seed, sim::Model m) {
  return derive_seed(seed, m == sim::Model::isotonic ? 1 : 3);
}

// One uniform per test row for randomized PITs, shared by all methods.
inline std::vector<double> pit_uniforms(std::uint64_t seed, std::size_t count) {
  Rng rng(derive_seed(seed, kTagPit));
  std::vector<double> v(count);
  for (double& u : v) u = rng.uniform();
  return v;
}

inline constexpr const char* kOutputDirEnv = "CPSYS_OUTPUT_DIR";

struct ExperimentConfig {
  std::vector<Method> methods = {Method::cidr, Method::cb, Method::lspm};
  std::vector<sim::Model> models = {sim::Model::isotonic, sim::Model::less_isotonic};
  std::vector<std::size_t> sizes = {100, 500, 1000, 2000};
  std::size_t n_test = 5000;
  std::uint64_t seed = 1;
  // External data instead of simulation, when both are set.
  std::string train_file;
  std::string test_file;
  // Split conformal: the first fraction of the training rows estimates the
  // summary / bins / regression, the rest calibrates. Unset means full conformal.
  std::optional<double> estimation_fraction;
  std::size_t k = 10;
  bool k_cv = false;
  std::vector<std::size_t> k_candidates = {2, 3, 4, 5, 6, 8, 10, 12, 15, 20};
  std::size_t cv_folds = 5;
  std::size_t kmeans_restarts = 10;
  double cutoff = kDefaultSupportCutoff;
  double band_level = 0.9;
  std::string output_dir;
  unsigned threads = 0;
  bool write_predictions = false;

  bool uses_files() const { return !train_file.empty() || !test_file.empty(); }

  std::string resolved_output_dir() const {
    if (!output_dir.empty()) return output_dir;
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return "cpsys_out";
  }

  void validate() const {
    if (methods.empty()) throw UsageError("config: at least one method is required");
    if (models.empty() && !uses_files()) throw UsageError("config: at least one model is required");
    if (sizes.empty() && !uses_files()) throw UsageError("config: at least one training size is required");
    for (std::size_t n : sizes) {
      if (n == 0) throw UsageError("config: training sizes must be at least 1");
    }
    if (n_test == 0) throw UsageError("config: n_test must be at least 1");
    if (estimation_fraction && !(*estimation_fraction > 0.0 && *estimation_fraction < 1.0)) {
      throw UsageError("config: estimation_fraction must lie in (0,1)");
    }
    if (k == 0) throw UsageError("config: k must be positive");
    if (k_cv && k_candidates.empty()) throw UsageError("config: k_candidates is empty");
    if (cv_folds < 2) throw UsageError("config: cv_folds must be at least 2");
    if (kmeans_restarts == 0) throw UsageError("config: kmeans_restarts must be positive");
    if (!(cutoff > 0.0) || !std::isfinite(cutoff)) throw UsageError("config: cutoff must be positive");
    if (!(band_level > 0.0 && band_level < 1.0)) throw UsageError("config: band_level must lie in (0,1)");
    if (uses_files()) {
      if (train_file.empty() || test_file.empty()) {
        throw UsageError("config: train_file and test_file must be given together");
      }
      for (const std::string& f : {train_file, test_file}) {
        if (!std::filesystem::exists(f)) throw UsageError("config: file '" + f + "' does not exist");
      }
    }
  }
};

inline json to_json(const ExperimentConfig& c) {
  json j;
  std::vector<std::string> methods, models;
  for (Method m : c.methods) methods.emplace_back(to_string(m));
  for (sim::Model m : c.models) models.emplace_back(sim::to_string(m));
  j["methods"] = methods;
  j["models"] = models;
  j["sizes"] = c.sizes;
  j["n_test"] = c.n_test;
  j["seed"] = c.seed;
  j["train_file"] = c.train_file;
  j["test_file"] = c.test_file;
  j["estimation_fraction"] = c.estimation_fraction ? json(*c.estimation_fraction) : json(nullptr);
  j["k"] = c.k;
  j["k_selection"] = c.k_cv ? "cv" : "fixed";
  j["k_candidates"] = c.k_candidates;
  j["cv_folds"] = c.cv_folds;
  j["kmeans_restarts"] = c.kmeans_restarts;
  j["cutoff"] = c.cutoff;
  j["band_level"] = c.band_level;
  return j;
}

// Applies the keys present in `j` on top of `c`. Unknown keys are rejected.
inline void apply_json(ExperimentConfig& c, const json& j) {
  if (!j.is_object()) throw UsageError("config: top level must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "methods") {
        c.methods.clear();
        for (const auto& m : v) c.methods.push_back(parse_method(m.get<std::string>()));
      } else if (key == "models") {
        c.models.clear();
        for (const auto& m : v) c.models.push_back(sim::parse_model(m.get<std::string>()));
      } else if (key == "sizes") {
        c.sizes = v.get<std::vector<std::size_t>>();
      } else if (key == "n_test") {
        c.n_test = v.get<std::size_t>();
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "train_file") {
        c.train_file = v.get<std::string>();
      } else if (key == "test_file") {
        c.test_file = v.get<std::string>();
      } else if (key == "estimation_fraction") {
        c.estimation_fraction = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "k") {
        c.k = v.get<std::size_t>();
      } else if (key == "k_selection") {
        const std::string s = v.get<std::string>();
        if (s != "fixed" && s != "cv") throw UsageError("config: k_selection must be 'fixed' or 'cv'");
        c.k_cv = s == "cv";
      } else if (key == "k_candidates") {
        c.k_candidates = v.get<std::vector<std::size_t>>();
      } else if (key == "cv_folds") {
        c.cv_folds = v.get<std::size_t>();
      } else if (key == "kmeans_restarts") {
        c.kmeans_restarts = v.get<std::size_t>();
      } else if (key == "cutoff") {
        c.cutoff = v.get<double>();
      } else if (key == "band_level") {
        c.band_level = v.get<double>();
      } else if (key == "output_dir") {
        c.output_dir = v.get<std::string>();
      } else if (key == "threads") {
        c.threads = v.get<unsigned>();
      } else if (key == "write_predictions") {
        c.write_predictions = v.get<bool>();
      } else {
        throw UsageError("config: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

struct Prediction {
  PredictiveBand band;
  StepCDF crisp;
  double thickness = 0.0;
  EpistemicClass epistemic = EpistemicClass::low;
  // Conformal binning only: the assigned bin was empty and the nearest
  // populated bin was used instead.
  bool flagged = false;
};

namespace detail {

struct LineModel {
  double intercept = 0.0;
  double slope = 0.0;
  double operator()(double x) const { return intercept + slope * x; }
};

inline LineModel fit_line(const WeightedSample& s) {
  const LinearFit f = wls_fit(with_intercept(column_matrix(s.x())),
                              Eigen::Map<const Eigen::VectorXd>(s.y().data(), static_cast<Eigen::Index>(s.size())),
                              Eigen::Map<const Eigen::VectorXd>(s.w().data(), static_cast<Eigen::Index>(s.size())));
  return {f.coefficients[0], f.coefficients[1]};
}

inline std::pair<WeightedSample, WeightedSample> split_sample(const WeightedSample& train, double fraction) {
  const auto n0 = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train.size())));
  if (n0 == 0 || n0 >= train.size()) {
    throw UsageError("split: estimation and calibration sets must both be nonempty");
  }
  std::vector<std::size_t> a(n0), b(train.size() - n0);
  for (std::size_t i = 0; i < n0; ++i) a[i] = i;
  for (std::size_t i = n0; i < train.size(); ++i) b[i - n0] = i;
  return {train.subset(a), train.subset(b)};
}

}  // namespace detail

// A method fitted to one training sample, ready to predict at test covariates.
class MethodPredictor {
 public:
  MethodPredictor(Method method, const WeightedSample& train, const ExperimentConfig& cfg)
      : method_(method), cutoff_(cfg.cutoff), threads_(cfg.threads) {
    const WeightedSample* calib = &train;
    std::optional<WeightedSample> est_part, cal_part;
    if (cfg.estimation_fraction) {
      auto parts = detail::split_sample(train, *cfg.estimation_fraction);
      est_part = std::move(parts.first);
      cal_part = std::move(parts.second);
      calib = &*cal_part;
    }
    switch (method) {
      case Method::cidr:
        if (est_part) {
          // Summary H = least-squares line fitted on the estimation set.
          summary_ = detail::fit_line(*est_part);
          std::vector<double> hx(calib->x().size());
          for (std::size_t i = 0; i < hx.size(); ++i) hx[i] = (*summary_)(calib->x()[i]);
          calib_ = WeightedSample(hx, {calib->y().begin(), calib->y().end()},
                                  {calib->w().begin(), calib->w().end()});
        } else {
          calib_ = train;
        }
        break;
      case Method::cb: {
        const WeightedSample& bin_source = est_part ? *est_part : train;
        std::vector<double> xs(bin_source.x().begin(), bin_source.x().end());
        k_used_ = cfg.k;
        if (cfg.k_cv) {
          k_used_ = select_k_cv(bin_source, cfg.k_candidates, cfg.cv_folds, cfg.kmeans_restarts,
                                derive_seed(cfg.seed, kTagKSelect));
        }
        binning_ = fit_conformal_binning(
            kmeans_1d(xs, k_used_, cfg.kmeans_restarts, derive_seed(cfg.seed, kTagKmeans)), *calib);
        break;
      }
      case Method::lspm:
        if (est_part) {
          summary_ = detail::fit_line(*est_part);
          calib_ = *calib;
          calib_pred_.resize(calib->size());
          for (std::size_t i = 0; i < calib->size(); ++i) calib_pred_[i] = (*summary_)(calib->x()[i]);
        } else {
          calib_ = train;
          // A constant covariate carries no slope; fall back to the
          // intercept-only machine instead of a rank-deficient design.
          const auto [lo, hi] = std::minmax_element(train.x().begin(), train.x().end());
          constant_x_ = *lo == *hi ? std::optional<double>(*lo) : std::nullopt;
          features_ = constant_x_ ? Eigen::MatrixXd(train.size(), 0) : column_matrix(train.x());
        }
        break;
    }
  }

  Method method() const { return method_; }
  // Bins actually used by conformal binning (after cross-validation, if any).
  std::size_t k_used() const { return k_used_; }
  const std::optional<ConformalBinning>& binning() const { return binning_; }

  std::vector<Prediction> predict(std::span<const double> xs) const {
    std::vector<Prediction> out(xs.size());
    switch (method_) {
      case Method::cidr: {
        std::vector<double> hx(xs.begin(), xs.end());
        if (summary_) {
          for (double& v : hx) v = (*summary_)(v);
        }
        std::vector<PredictiveBand> bands = cidr_bands(calib_, hx, cutoff_, threads_);
        parallel_for(xs.size(), [&](std::size_t i) {
          fill(out[i], std::move(bands[i]), CrispRule::minimax);
        }, threads_);
        break;
      }
      case Method::cb:
        for (std::size_t i = 0; i < xs.size(); ++i) {
          const auto lk = binning_->lookup(xs[i]);
          const auto& ys = binning_->bin_outcomes[lk.used];
          Prediction& p = out[i];
          p.band = cb_band(ys);
          p.crisp = cb_crisp(ys);
          p.thickness = band_thickness(p.band);
          p.epistemic = epistemic_class(p.thickness);
          p.flagged = lk.fallback;
        }
        break;
      case Method::lspm:
        parallel_for(xs.size(), [&](std::size_t i) {
          std::vector<double> cv;
          if (summary_) {
            cv = split_residual_critical_values(calib_.y(), calib_pred_, (*summary_)(xs[i]));
          } else {
            Eigen::RowVectorXd xn(features_.cols());
            if (constant_x_ && xs[i] != *constant_x_) {
              throw NumericError("lspm: training covariate is constant and the test covariate differs");
            }
            if (!constant_x_) xn[0] = xs[i];
            cv = lspm_critical_values(features_, calib_.y(), xn);
          }
          fill(out[i], lspm_band(cv, cv.size()), CrispRule::midpoint);
        }, threads_);
        break;
    }
    return out;
  }

 private:
  void fill(Prediction& p, PredictiveBand band, CrispRule rule) const {
    BandPrediction bp = summarize_band(std::move(band), rule, cutoff_);
    p.band = std::move(bp.band);
    p.crisp = std::move(bp.crisp);
    p.thickness = bp.thickness;
    p.epistemic = bp.epistemic;
  }

  Method method_;
  double cutoff_;
  unsigned threads_;
  WeightedSample calib_;
  std::optional<detail::LineModel> summary_;
  std::vector<double> calib_pred_;
  Eigen::MatrixXd features_;
  std::optional<double> constant_x_;
  std::optional<ConformalBinning> binning_;
  std::size_t k_used_ = 0;
};

inline constexpr std::size_t kPredictChunk = 512;

// Predicts every test covariate in input order, handing each prediction to
// `sink(row, prediction)` in row order. Memory stays bounded by one chunk.
inline void for_each_prediction(const MethodPredictor& predictor, std::span<const double> xs,
                                const std::function<void(std::size_t, const Prediction&)>& sink) {
  for (std::size_t begin = 0; begin < xs.size(); begin += kPredictChunk) {
    const std::size_t end = std::min(xs.size(), begin + kPredictChunk);
    const std::vector<Prediction> chunk = predictor.predict(xs.subspan(begin, end - begin));
    for (std::size_t i = 0; i < chunk.size(); ++i) sink(begin + i, chunk[i]);
  }
}

inline json record_json(std::size_t row, Method m, double x, const Prediction& p, double cutoff) {
  json j;
  j["row"] = row;
  j["method"] = to_string(m);
  j["x"] = x;
  j["band"] = io::to_json(p.band, cutoff);
  j["crisp"] = io::to_json(p.crisp);
  j["thickness"] = p.thickness;
  j["epistemic"] = cps::to_string(p.epistemic);
  j["flag"] = p.flagged ? json("empty_bin_fallback") : json(nullptr);
  return j;
}

struct MethodResult {
  EvalReport report;
  std::size_t k_used = 0;  // conformal binning only
};

struct RunResult {
  std::string label;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::optional<double> ideal_crps;
  std::vector<MethodResult> methods;
};

// Fits every configured method on `train`, predicts `test`, and evaluates.
// If `predictions` is given, one JSON line per record is appended to it.
inline RunResult run_methods(const WeightedSample& train, const WeightedSample& test,
                             const ExperimentConfig& cfg, std::ostream* predictions = nullptr) {
  RunResult r;
  r.n_train = train.size();
  r.n_test = test.size();
  const std::vector<double> uniforms = pit_uniforms(cfg.seed, test.size());
  const std::vector<double> thresholds = reliability_thresholds(test.y());
  const std::vector<double> grid = default_pp_grid();
  for (Method m : cfg.methods) {
    MethodPredictor predictor(m, train, cfg);
    EvalAccumulator acc(std::string(to_string(m)), thresholds);
    for_each_prediction(predictor, test.x(), [&](std::size_t row, const Prediction& p) {
      acc.add(p.crisp, test.y()[row], uniforms[row], p.thickness, p.flagged);
      if (predictions) *predictions << record_json(row, m, test.x()[row], p, cfg.cutoff).dump() << '\n';
    });
    r.methods.push_back({acc.finish(grid, cfg.band_level), predictor.k_used()});
  }
  return r;
}

// Writes one JSON line per (method, test row) to `out`, methods in config order.
inline void predict_to_stream(const WeightedSample& train, std::span<const double> test_x,
                              const ExperimentConfig& cfg, std::ostream& out) {
  for (Method m : cfg.methods) {
    MethodPredictor predictor(m, train, cfg);
    for_each_prediction(predictor, test_x, [&](std::size_t row, const Prediction& p) {
      out << record_json(row, m, test_x[row], p, cfg.cutoff).dump() << '\n';
    });
  }
}

// Evaluates prediction records (as written by predict_to_stream) against the
// outcomes of `test`. Every method must have exactly one record per test row.
inline RunResult evaluate_records(std::istream& in, const WeightedSample& test, std::uint64_t seed,
                                  double band_level = 0.9) {
  const std::vector<double> uniforms = pit_uniforms(seed, test.size());
  const std::vector<double> thresholds = reliability_thresholds(test.y());
  std::vector<std::string> order;
  std::vector<EvalAccumulator> accs;
  std::vector<std::vector<bool>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "prediction line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": " + e.what());
    }
    std::string method;
    std::size_t row = 0;
    bool flagged = false;
    try {
      method = j.at("method").get<std::string>();
      row = j.at("row").get<std::size_t>();
      flagged = !j.at("flag").is_null();
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (row >= test.size()) {
      throw DataError(where + ": record for row " + std::to_string(row) + " has no outcome row (test file has " +
                      std::to_string(test.size()) + " rows)");
    }
    const StepCDF crisp = io::step_cdf_from_json(j.at("crisp"));
    const PredictiveBand band = io::band_from_json(j.at("band"));
    auto it = std::find(order.begin(), order.end(), method);
    std::size_t k = static_cast<std::size_t>(it - order.begin());
    if (it == order.end()) {
      order.push_back(method);
      accs.emplace_back(method, thresholds);
      seen.emplace_back(test.size(), false);
    }
    if (seen[k][row]) throw DataError(where + ": duplicate record for method " + method + ", row " + std::to_string(row));
    seen[k][row] = true;
    accs[k].add(crisp, test.y()[row], uniforms[row], band_thickness(band), flagged);
  }
  if (order.empty()) throw DataError("no prediction records");
  RunResult r;
  r.n_test = test.size();
  const std::vector<double> grid = default_pp_grid();
  for (std::size_t k = 0; k < order.size(); ++k) {
    for (std::size_t row = 0; row < test.size(); ++row) {
      if (!seen[k][row]) {
        throw DataError("method " + order[k] + " has no record for test row " + std::to_string(row));
      }
    }
    r.methods.push_back({accs[k].finish(grid, band_level), 0});
  }
  return r;
}

inline json report_json(const EvalReport& r) {
  json j;
  j["method"] = r.method;
  j["count"] = r.count;
  j["mean_crps"] = r.mean_crps;
  j["pp_inside_fraction"] = r.pp_inside_fraction;
  j["mean_reliability_deviation"] = r.mean_reliability_deviation;
  json rel = json::array();
  for (const auto& t : r.reliability) {
    rel.push_back({{"level", t.level}, {"threshold", t.threshold}, {"max_deviation", t.max_deviation}});
  }
  j["reliability"] = rel;
  j["thickness"] = {{"mean", r.thickness.mean},
                    {"max", r.thickness.max},
                    {"histogram", r.thickness.histogram},
                    {"low", r.thickness.low},
                    {"medium", r.thickness.medium},
                    {"high", r.thickness.high}};
  j["flagged"] = r.flagged;
  return j;
}

// Writes report.json and the plot tables for one run into `dir`.
inline void write_reports(const std::string& dir, const RunResult& r, const json& extra) {
  std::filesystem::create_directories(dir);
  json rep = extra;
  rep["n_train"] = r.n_train;
  rep["n_test"] = r.n_test;
  rep["ideal_crps"] = r.ideal_crps ? json(*r.ideal_crps) : json(nullptr);
  json methods = json::array();
  std::ostringstream pp, rel, hist, crps_csv, pits;
  pp << "method,alpha,ecdf,band_lo,band_hi\n";
  rel << "method,level,threshold,forecast,frequency\n";
  hist << "method,bin_lo,bin_hi,count\n";
  crps_csv << "method,count,mean_crps\n";
  pits << "method,row,pit\n";
  for (const MethodResult& m : r.methods) {
    const EvalReport& e = m.report;
    json mj = report_json(e);
    if (m.k_used > 0) mj["k"] = m.k_used;
    methods.push_back(mj);
    for (const PpPoint& p : e.pp) {
      pp << e.method << ',' << io::format_double(p.alpha) << ',' << io::format_double(p.ecdf) << ','
         << io::format_double(p.band_lo) << ',' << io::format_double(p.band_hi) << '\n';
    }
    for (const auto& t : e.reliability) {
      for (const auto& pt : t.curve) {
        rel << e.method << ',' << io::format_double(t.level) << ',' << io::format_double(t.threshold) << ','
            << io::format_double(pt.forecast) << ',' << io::format_double(pt.frequency) << '\n';
      }
    }
    for (std::size_t b = 0; b < e.thickness.histogram.size(); ++b) {
      hist << e.method << ',' << io::format_double(b / 10.0) << ',' << io::format_double((b + 1) / 10.0) << ','
           << e.thickness.histogram[b] << '\n';
    }
    crps_csv << e.method << ',' << e.count << ',' << io::format_double(e.mean_crps) << '\n';
    for (std::size_t i = 0; i < e.pits.size(); ++i) {
      pits << e.method << ',' << i << ',' << io::format_double(e.pits[i]) << '\n';
    }
  }
  rep["methods"] = methods;
  io::write_json_file(dir + "/report.json", rep);
  io::write_text_file(dir + "/pp_curve.csv", pp.str());
  io::write_text_file(dir + "/reliability.csv", rel.str());
  io::write_text_file(dir + "/thickness_hist.csv", hist.str());
  io::write_text_file(dir + "/crps_summary.csv", crps_csv.str());
  io::write_text_file(dir + "/pits.csv", pits.str());
}

inline json sample_metadata(std::string_view model, std::size_t n, std::uint64_t seed) {
  return {{"model", model}, {"n", n}, {"seed", seed}, {"generator", Rng::kAlgorithm},
          {"version", std::string(kName) + " " + std::string(kVersion)}};
}

// Simulated train/test pair for one model and training size.
inline std::pair<WeightedSample, WeightedSample> simulate_pair(sim::Model model, std::size_t n_train,
                                                               std::size_t n_test, std::uint64_t seed) {
  return {sim::generate(model, n_train, train_seed(seed, model)),
          sim::generate(model, n_test, test_seed(seed, model))};
}

// One simulated (model, n) run.
inline RunResult run_simulated(sim::Model model, std::size_t n_train, const ExperimentConfig& cfg,
                               std::ostream* predictions = nullptr) {
  auto [train, test] = simulate_pair(model, n_train, cfg.n_test, cfg.seed);
  RunResult r = run_methods(train, test, cfg, predictions);
  r.label = std::string(sim::to_string(model)) + "_n" + std::to_string(n_train);
  if (model == sim::Model::isotonic) r.ideal_crps = sim::ideal_crps_isotonic(test);
  return r;
}

inline void append_comparison(std::ostringstream& os, const std::string& source, const RunResult& r) {
  for (const MethodResult& m : r.methods) {
    const EvalReport& e = m.report;
    os << source << ',' << r.n_train << ',' << e.method << ',' << io::format_double(e.mean_crps) << ','
       << io::format_double(e.pp_inside_fraction) << ',' << io::format_double(e.mean_reliability_deviation)
       << ',' << io::format_double(e.thickness.mean) << ',' << io::format_double(e.thickness.max) << ','
       << e.thickness.low << ',' << e.thickness.medium << ',' << e.thickness.high << ',' << e.flagged << ','
       << (r.ideal_crps ? io::format_double(*r.ideal_crps) : std::string()) << '\n';
  }
}

// Runs the whole study: every model and training size (or the configured
// data files), one bundle directory per run plus comparison.csv.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string out = cfg.resolved_output_dir();
  std::filesystem::create_directories(out);
  std::ostringstream cmp;
  cmp << "source,n_train,method,mean_crps,pp_inside_fraction,mean_reliability_deviation,"
         "mean_thickness,max_thickness,low,medium,high,flagged,ideal_crps\n";
  const json base = {{"config", to_json(cfg)},
                     {"generator", Rng::kAlgorithm},
                     {"code_version", std::string(kName) + " " + std::string(kVersion)}};
  std::vector<RunResult> results;
  auto run_one = [&](const std::string& label, auto&& compute, const json& extra) {
    const std::string dir = out + "/" + label;
    std::filesystem::create_directories(dir);
    std::optional<std::ofstream> pred;
    if (cfg.write_predictions) {
      pred.emplace(dir + "/predictions.jsonl", std::ios::binary);
      if (!*pred) throw UsageError("cannot write '" + dir + "/predictions.jsonl'");
    }
    RunResult r = compute(pred ? &*pred : nullptr);
    r.label = label;
    json info = base;
    info.update(extra);
    io::write_json_file(dir + "/config.json", info);
    write_reports(dir, r, extra);
    append_comparison(cmp, extra.value("source", label), r);
    results.push_back(std::move(r));
  };
  if (cfg.uses_files()) {
    const WeightedSample train = io::read_sample_csv(cfg.train_file);
    const WeightedSample test = io::read_sample_csv(cfg.test_file);
    run_one("data", [&](std::ostream* p) { return run_methods(train, test, cfg, p); },
            {{"source", "data"}, {"train_file", cfg.train_file}, {"test_file", cfg.test_file}});
  } else {
    for (sim::Model model : cfg.models) {
      for (std::size_t n : cfg.sizes) {
        const std::string label = std::string(sim::to_string(model)) + "_n" + std::to_string(n);
        run_one(label, [&](std::ostream* p) { return run_simulated(model, n, cfg, p); },
                {{"source", sim::to_string(model)},
                 {"train_seed", train_seed(cfg.seed, model)},
                 {"test_seed", test_seed(cfg.seed, model)},
                 {"pit_seed", derive_seed(cfg.seed, kTagPit)}});
      }
    }
  }
  io::write_text_file(out + "/comparison.csv", cmp.str());
  return results;
}

}  // namespace cps::pipeline

#endif  // CPSYS_PIPELINE_HPP_
