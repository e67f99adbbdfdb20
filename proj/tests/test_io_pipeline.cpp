#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "cpsys/cpsys.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;
namespace io = cps::io;
namespace pl = cps::pipeline;
using cps::WeightedSample;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cpsys_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

WeightedSample read_csv_text(const std::string& text) {
  std::istringstream in(text);
  return io::read_sample_csv(in);
}

std::string error_of(const std::string& text) {
  try {
    read_csv_text(text);
  } catch (const cps::DataError& e) {
    return e.what();
  }
  return "";
}

TEST(FormatDouble, RoundTrips) {
  cps::Rng rng(71);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-30.0, 30.0));
    EXPECT_EQ(std::strtod(io::format_double(v).c_str(), nullptr), v);
  }
}

TEST(Csv, ReadsColumnsInAnyOrder) {
  const WeightedSample s = read_csv_text("\xEF\xBB\xBFid,y,\"x\",weight\r\na,1.5,2,0.5\r\n\"b,c\",-3e-1,4,2\r\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.x()[0], 2.0);
  EXPECT_EQ(s.y()[1], -0.3);
  EXPECT_EQ(s.w()[0], 0.5);
}

TEST(Csv, WeightIsOptional) {
  const WeightedSample s = read_csv_text("x,y\n1,2\n3,4\n");
  EXPECT_TRUE(s.unit_weights());
}

TEST(Csv, ErrorsNameRowAndColumn) {
  EXPECT_NE(error_of("x,z\n1,2\n").find("'y'"), std::string::npos);
  const std::string bad = error_of("x,y\n1,2\n1,abc\n");
  EXPECT_NE(bad.find("row 2"), std::string::npos) << bad;
  EXPECT_NE(bad.find("'y'"), std::string::npos) << bad;
  EXPECT_NE(error_of("x,y\n1,2,3\n").find("row 1"), std::string::npos);
  EXPECT_NE(error_of("x,y,weight\n1,2,-1\n").find("weight"), std::string::npos);
  EXPECT_NE(error_of("x,y\n").find("no data"), std::string::npos);
  EXPECT_NE(error_of("x,y\n1,inf\n").find("finite"), std::string::npos);
  EXPECT_NE(error_of("x,y\n\"1,2\n").find("quote"), std::string::npos);
  EXPECT_THROW(io::read_sample_csv("/nonexistent/file.csv"), cps::DataError);
}

TEST(Csv, WriteReadRoundTripIsExact) {
  cps::Rng rng(72);
  std::vector<double> x(200), y(200), w(200);
  for (std::size_t i = 0; i < 200; ++i) {
    x[i] = rng.normal() * 1e3;
    y[i] = rng.normal() / 7.0;
    w[i] = rng.uniform(0.1, 3.0);
  }
  const WeightedSample s(x, y, w);
  std::ostringstream os;
  io::write_sample_csv(os, s);
  const WeightedSample r = read_csv_text(os.str());
  EXPECT_TRUE(std::equal(s.x().begin(), s.x().end(), r.x().begin()));
  EXPECT_TRUE(std::equal(s.y().begin(), s.y().end(), r.y().begin()));
  EXPECT_TRUE(std::equal(s.w().begin(), s.w().end(), r.w().begin()));
}

TEST(Json, StepCdfAndBandRoundTrip) {
  cps::Rng rng(73);
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(rng.uniform(0.0, 10.0));
    y.push_back(x.back() / 3.0 + rng.normal());
  }
  const cps::BandPrediction p = cps::cidr_predict(WeightedSample(x, y), 4.2);
  const auto cdf = io::step_cdf_from_json(io::json::parse(io::to_json(p.crisp).dump()));
  EXPECT_EQ(cdf.jumps(), p.crisp.jumps());
  EXPECT_EQ(cdf.cum(), p.crisp.cum());
  const auto band = io::band_from_json(io::json::parse(io::to_json(p.band).dump()));
  EXPECT_EQ(band.lower(), p.band.lower());
  EXPECT_EQ(band.upper(), p.band.upper());
  EXPECT_EQ(band.outcome_range(), p.band.outcome_range());
  EXPECT_THROW(io::step_cdf_from_json(io::json::parse(R"({"jumps":[1,0],"cum":[0.5,1]})")), cps::DataError);
  EXPECT_THROW(io::band_from_json(io::json::parse(R"({"lower":{}})")), cps::DataError);
}

TEST(Config, JsonApplyAndValidate) {
  pl::ExperimentConfig c;
  pl::apply_json(c, io::json::parse(R"({"methods":["cb"],"k":4,"seed":9,"estimation_fraction":0.5})"));
  EXPECT_EQ(c.methods.size(), 1u);
  EXPECT_EQ(c.methods[0], pl::Method::cb);
  EXPECT_EQ(c.k, 4u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(pl::apply_json(c, io::json::parse(R"({"colour":1})")), cps::UsageError);
  EXPECT_THROW(pl::apply_json(c, io::json::parse(R"({"k":"ten"})")), cps::UsageError);
  EXPECT_THROW(pl::apply_json(c, io::json::parse(R"({"methods":["forest"]})")), cps::UsageError);
  c.estimation_fraction = 1.5;
  EXPECT_THROW(c.validate(), cps::UsageError);
  pl::ExperimentConfig d;
  d.methods.clear();
  EXPECT_THROW(d.validate(), cps::UsageError);
  pl::ExperimentConfig e;
  e.train_file = "/nonexistent.csv";
  e.test_file = "/nonexistent.csv";
  EXPECT_THROW(e.validate(), cps::UsageError);
  // Round trip through JSON.
  pl::ExperimentConfig f;
  pl::apply_json(f, pl::to_json(c));
  EXPECT_EQ(pl::to_json(f), pl::to_json(c));
}

TEST(Config, OutputDirectoryPrecedence) {
  pl::ExperimentConfig c;
  ::unsetenv(pl::kOutputDirEnv);
  EXPECT_EQ(c.resolved_output_dir(), "cpsys_out");
  ::setenv(pl::kOutputDirEnv, "/tmp/from_env", 1);
  EXPECT_EQ(c.resolved_output_dir(), "/tmp/from_env");
  c.output_dir = "/tmp/from_flag";
  EXPECT_EQ(c.resolved_output_dir(), "/tmp/from_flag");
  ::unsetenv(pl::kOutputDirEnv);
}

struct Fixture {
  WeightedSample train, test;
  Fixture() {
    auto [a, b] = pl::simulate_pair(cps::sim::Model::isotonic, 120, 40, 5);
    train = std::move(a);
    test = std::move(b);
  }
};

// The predictor only routes through the library: compare with direct calls.
TEST(Predictor, CidrMatchesDirectCalls) {
  const Fixture f;
  pl::ExperimentConfig cfg;
  const auto preds = pl::MethodPredictor(pl::Method::cidr, f.train, cfg).predict(f.test.x());
  for (std::size_t i = 0; i < f.test.size(); ++i) {
    const cps::BandPrediction direct = cps::cidr_predict(f.train, f.test.x()[i]);
    EXPECT_EQ(preds[i].crisp.jumps(), direct.crisp.jumps());
    for (std::size_t k = 0; k < direct.crisp.size(); ++k) {
      EXPECT_NEAR(preds[i].crisp.cum()[k], direct.crisp.cum()[k], 1e-12);
    }
    EXPECT_NEAR(preds[i].thickness, direct.thickness, 1e-12);
  }
}

TEST(Predictor, LspmMatchesDirectCalls) {
  const Fixture f;
  pl::ExperimentConfig cfg;
  const auto preds = pl::MethodPredictor(pl::Method::lspm, f.train, cfg).predict(f.test.x());
  for (std::size_t i = 0; i < f.test.size(); ++i) {
    const auto cv = cps::lspm_critical_values(f.train, f.test.x()[i]);
    const cps::StepCDF crisp = cps::crisp_midpoint(cps::lspm_band(cv, cv.size()));
    EXPECT_EQ(preds[i].crisp.jumps(), crisp.jumps());
    EXPECT_EQ(preds[i].crisp.cum(), crisp.cum());
    EXPECT_NEAR(preds[i].thickness, 1.0 / 121.0, 1e-15);
  }
}

TEST(Predictor, CbMatchesDirectCalls) {
  const Fixture f;
  pl::ExperimentConfig cfg;
  cfg.k = 4;
  const pl::MethodPredictor pred(pl::Method::cb, f.train, cfg);
  const auto preds = pred.predict(f.test.x());
  const cps::BinModel m =
      cps::kmeans_1d(f.train.x(), 4, cfg.kmeans_restarts, cps::derive_seed(cfg.seed, pl::kTagKmeans));
  const cps::ConformalBinning cb = cps::fit_conformal_binning(m, f.train);
  for (std::size_t i = 0; i < f.test.size(); ++i) {
    const auto& ys = cb.bin_outcomes[cb.lookup(f.test.x()[i]).used];
    EXPECT_EQ(preds[i].crisp.cum(), cps::cb_crisp(ys).cum());
    EXPECT_NEAR(preds[i].thickness, 1.0 / static_cast<double>(ys.size() + 1), 1e-15);
    EXPECT_FALSE(preds[i].flagged);
  }
  EXPECT_EQ(pred.k_used(), 4u);
}

TEST(Predictor, CbTooManyBinsIsUsageError) {
  pl::ExperimentConfig cfg;
  cfg.k = 5;
  const WeightedSample s({1.0, 1.0, 2.0, 3.0}, {1.0, 2.0, 3.0, 4.0});
  EXPECT_THROW(pl::MethodPredictor(pl::Method::cb, s, cfg), cps::UsageError);
}

TEST(Predictor, LspmConstantCovariateIsInterceptOnly) {
  pl::ExperimentConfig cfg;
  const WeightedSample s({2.0, 2.0, 2.0}, {5.0, 1.0, 3.0});
  const std::vector<double> x_new = {2.0};
  const auto p = pl::MethodPredictor(pl::Method::lspm, s, cfg).predict(x_new);
  // Critical values are the outcomes 1, 3, 5.
  EXPECT_NEAR(p[0].band.upper(1.0), 0.5, 1e-12);
  EXPECT_NEAR(p[0].band.lower(3.0, cps::Side::left), 0.25, 1e-12);
  EXPECT_EQ(p[0].band.outcome_range().lo, 1.0);
  EXPECT_NEAR(p[0].band.outcome_range().hi, 5.0, 1e-12);
  const std::vector<double> other = {3.0};
  EXPECT_THROW(pl::MethodPredictor(pl::Method::lspm, s, cfg).predict(other), cps::NumericError);
}

TEST(Predictor, SplitModeCrispWithinBand) {
  const Fixture f;
  pl::ExperimentConfig cfg;
  cfg.estimation_fraction = 0.5;
  cfg.k = 3;
  for (pl::Method m : {pl::Method::cidr, pl::Method::cb, pl::Method::lspm}) {
    const auto preds = pl::MethodPredictor(m, f.train, cfg).predict(f.test.x());
    for (const auto& p : preds) {
      for (double z : p.crisp.jumps()) {
        EXPECT_GE(p.crisp(z), p.band.lower(z) - 1e-12);
        EXPECT_LE(p.crisp(z), p.band.upper(z) + 1e-12);
      }
    }
  }
  // Split LSPM has n_cal = 60 critical values.
  const auto lp = pl::MethodPredictor(pl::Method::lspm, f.train, cfg).predict(f.test.x());
  EXPECT_NEAR(lp[0].thickness, 1.0 / 61.0, 1e-15);
  cfg.estimation_fraction = 0.001;
  EXPECT_THROW(pl::MethodPredictor(pl::Method::cidr, f.train, cfg), cps::UsageError);
}

TEST(Pipeline, EvaluateRecordsReproducesRunMethods) {
  const Fixture f;
  pl::ExperimentConfig cfg;
  cfg.k = 3;
  std::ostringstream preds;
  const pl::RunResult direct = pl::run_methods(f.train, f.test, cfg, &preds);
  std::istringstream in(preds.str());
  const pl::RunResult evaluated = pl::evaluate_records(in, f.test, cfg.seed, cfg.band_level);
  ASSERT_EQ(direct.methods.size(), evaluated.methods.size());
  for (std::size_t m = 0; m < direct.methods.size(); ++m) {
    const auto& a = direct.methods[m].report;
    const auto& b = evaluated.methods[m].report;
    EXPECT_EQ(a.method, b.method);
    EXPECT_EQ(a.mean_crps, b.mean_crps);
    EXPECT_EQ(a.pits, b.pits);
    EXPECT_EQ(a.mean_reliability_deviation, b.mean_reliability_deviation);
    EXPECT_NEAR(a.thickness.mean, b.thickness.mean, 1e-12);
  }
}

TEST(Pipeline, EvaluateRecordsRejectsMisalignment) {
  const Fixture f;
  pl::ExperimentConfig cfg;
  cfg.methods = {pl::Method::lspm};
  std::ostringstream preds;
  pl::predict_to_stream(f.train, f.test.x(), cfg, preds);
  std::vector<std::string> lines;
  std::istringstream all(preds.str());
  for (std::string l; std::getline(all, l);) lines.push_back(l);

  auto evaluate = [&](const std::string& text) {
    std::istringstream in(text);
    try {
      pl::evaluate_records(in, f.test, 1);
    } catch (const cps::DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  std::string missing;
  for (std::size_t i = 1; i < lines.size(); ++i) missing += lines[i] + "\n";
  EXPECT_NE(evaluate(missing).find("row 0"), std::string::npos);
  EXPECT_NE(evaluate(preds.str() + lines[3] + "\n").find("duplicate"), std::string::npos);
  const WeightedSample shorter = f.test.subset(std::vector<std::size_t>{0, 1, 2});
  std::istringstream in(preds.str());
  EXPECT_THROW(pl::evaluate_records(in, shorter, 1), cps::DataError);
  EXPECT_NE(evaluate("not json\n").find("line 1"), std::string::npos);
  EXPECT_NE(evaluate("").find("no prediction"), std::string::npos);
}

TEST(Pipeline, ExperimentBundlesAreByteIdentical) {
  const fs::path a = scratch_dir("exp_a"), b = scratch_dir("exp_b");
  pl::ExperimentConfig cfg;
  cfg.sizes = {30, 60};
  cfg.n_test = 50;
  cfg.k = 3;
  cfg.write_predictions = true;
  cfg.output_dir = a.string();
  const auto ra = pl::run_experiment(cfg);
  cfg.output_dir = b.string();
  pl::run_experiment(cfg);
  EXPECT_EQ(ra.size(), 4u);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(entry.path(), a);
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
  }
  // comparison.csv plus 4 bundles of config, report, five tables, predictions.
  EXPECT_EQ(files, 1u + 4u * 8u);
  const std::string cmp = slurp(a / "comparison.csv");
  EXPECT_EQ(std::count(cmp.begin(), cmp.end(), '\n'), 1 + 4 * 3);
  const auto report = io::read_json_file((a / "isotonic_n30" / "report.json").string());
  EXPECT_EQ(report.at("methods").size(), 3u);
  EXPECT_TRUE(report.at("ideal_crps").is_number());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, DataModeUsesFiles) {
  const fs::path d = scratch_dir("data");
  const Fixture f;
  io::write_sample_csv((d / "train.csv").string(), f.train);
  io::write_sample_csv((d / "test.csv").string(), f.test);
  pl::ExperimentConfig cfg;
  cfg.train_file = (d / "train.csv").string();
  cfg.test_file = (d / "test.csv").string();
  cfg.output_dir = (d / "out").string();
  cfg.k = 3;
  const auto r = pl::run_experiment(cfg);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].label, "data");
  EXPECT_TRUE(fs::exists(d / "out" / "data" / "pp_curve.csv"));
  EXPECT_EQ(r[0].methods[0].report.mean_crps, pl::run_methods(f.train, f.test, cfg).methods[0].report.mean_crps);
  fs::remove_all(d);
}

}  // namespace
