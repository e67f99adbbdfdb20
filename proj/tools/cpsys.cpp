// Command-line driver: simulate, fit-predict, evaluate, experiment.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpsys/cpsys.hpp"

namespace {

using cps::pipeline::ExperimentConfig;
namespace io = cps::io;
namespace pl = cps::pipeline;

// Flags mirroring ExperimentConfig. A JSON config file is applied first and
// any flag given on the command line overrides it.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> methods;
  std::vector<std::string> models;
  std::vector<std::size_t> sizes;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
  double estimation_fraction = 0.0;
  std::size_t k = 0;
  bool k_cv = false;
  std::vector<std::size_t> k_candidates;
  std::size_t cv_folds = 0;
  std::size_t kmeans_restarts = 0;
  double cutoff = 0.0;
  double band_level = 0.0;
  unsigned threads = 0;
  bool write_predictions = false;

  std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> setters;

  template <class T>
  void add(CLI::App* app, const std::string& name, T& target, const std::string& help,
           std::function<void(ExperimentConfig&)> set) {
    setters.emplace_back(app->add_option(name, target, help), std::move(set));
  }

  void attach(CLI::App* app, bool experiment) {
    app->add_option("--config", config_file, "JSON config file (flags override it)")->check(CLI::ExistingFile);
    add(app, "--methods", methods, "Methods: cidr, cb, lspm", [this](ExperimentConfig& c) {
      c.methods.clear();
      for (const auto& m : methods) c.methods.push_back(pl::parse_method(m));
    });
    app->get_option("--methods")->delimiter(',');
    add(app, "--seed", seed, "Base seed", [this](ExperimentConfig& c) { c.seed = seed; });
    add(app, "--estimation-fraction", estimation_fraction,
        "Split conformal: fraction of training rows used for estimation",
        [this](ExperimentConfig& c) { c.estimation_fraction = estimation_fraction; });
    add(app, "--k", k, "Number of bins for conformal binning", [this](ExperimentConfig& c) { c.k = k; });
    setters.emplace_back(app->add_flag("--k-cv", k_cv, "Select k by cross-validated CRPS"),
                         [this](ExperimentConfig& c) { c.k_cv = k_cv; });
    add(app, "--k-candidates", k_candidates, "Candidate k values for --k-cv",
        [this](ExperimentConfig& c) { c.k_candidates = k_candidates; });
    app->get_option("--k-candidates")->delimiter(',');
    add(app, "--cv-folds", cv_folds, "Folds for --k-cv", [this](ExperimentConfig& c) { c.cv_folds = cv_folds; });
    add(app, "--kmeans-restarts", kmeans_restarts, "k-means restarts",
        [this](ExperimentConfig& c) { c.kmeans_restarts = kmeans_restarts; });
    add(app, "--cutoff", cutoff, "Support cutoff C", [this](ExperimentConfig& c) { c.cutoff = cutoff; });
    add(app, "--threads", threads, "Worker threads (0 = all cores)",
        [this](ExperimentConfig& c) { c.threads = threads; });
    if (experiment) {
      add(app, "--models", models, "Simulation models: isotonic, less_isotonic", [this](ExperimentConfig& c) {
        c.models.clear();
        for (const auto& m : models) c.models.push_back(cps::sim::parse_model(m));
      });
      app->get_option("--models")->delimiter(',');
      add(app, "--sizes", sizes, "Training sizes", [this](ExperimentConfig& c) { c.sizes = sizes; });
      app->get_option("--sizes")->delimiter(',');
      add(app, "--n-test", n_test, "Test set size", [this](ExperimentConfig& c) { c.n_test = n_test; });
      add(app, "--band-level", band_level, "Consistency band level",
          [this](ExperimentConfig& c) { c.band_level = band_level; });
      setters.emplace_back(app->add_flag("--write-predictions", write_predictions, "Write predictions.jsonl per run"),
                           [this](ExperimentConfig& c) { c.write_predictions = write_predictions; });
    }
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!config_file.empty()) pl::apply_json(c, io::read_json_file(config_file));
    for (const auto& [opt, set] : setters) {
      if (opt->count() > 0) set(c);
    }
    return c;
  }
};

int run_simulate(const std::string& model_name, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                 const std::string& out_dir) {
  if (n_train == 0 || n_test == 0) throw cps::UsageError("simulate: sample sizes must be at least 1");
  const cps::sim::Model model = cps::sim::parse_model(model_name);
  std::filesystem::create_directories(out_dir);
  const auto [train, test] = pl::simulate_pair(model, n_train, n_test, seed);
  const std::string stem = out_dir + "/" + std::string(cps::sim::to_string(model));
  io::write_sample_csv(stem + "_train.csv", train);
  io::write_sample_csv(stem + "_test.csv", test);
  io::write_json_file(stem + "_train.meta.json",
                      pl::sample_metadata(cps::sim::to_string(model), n_train, pl::train_seed(seed, model)));
  io::write_json_file(stem + "_test.meta.json",
                      pl::sample_metadata(cps::sim::to_string(model), n_test, pl::test_seed(seed, model)));
  std::cout << "wrote " << stem << "_train.csv and " << stem << "_test.csv\n";
  return cps::kExitOk;
}

int run_fit_predict(const ConfigFlags& flags, const std::string& train_path, const std::string& test_path,
                    const std::string& out_path) {
  ExperimentConfig cfg = flags.resolve();
  cfg.train_file = train_path;
  cfg.test_file = test_path;
  cfg.validate();
  const cps::WeightedSample train = io::read_sample_csv(train_path);
  const cps::WeightedSample test = io::read_sample_csv(test_path);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw cps::UsageError("cannot write '" + out_path + "'");
  pl::predict_to_stream(train, test.x(), cfg, out);
  if (!out) throw cps::UsageError("write failed for '" + out_path + "'");
  return cps::kExitOk;
}

int run_evaluate(const std::string& pred_path, const std::string& test_path, std::uint64_t seed,
                 double band_level, const std::string& out_dir) {
  const cps::WeightedSample test = io::read_sample_csv(test_path);
  std::ifstream in(pred_path);
  if (!in) throw cps::DataError("cannot open '" + pred_path + "'");
  pl::RunResult r = pl::evaluate_records(in, test, seed, band_level);
  pl::write_reports(out_dir, r,
                    {{"predictions", pred_path}, {"test_file", test_path}, {"pit_seed", cps::derive_seed(seed, pl::kTagPit)}});
  for (const auto& m : r.methods) {
    std::cout << m.report.method << ": mean CRPS " << io::format_double(m.report.mean_crps) << '\n';
  }
  return cps::kExitOk;
}

int run_experiment(const ConfigFlags& flags, const std::string& out_dir, const std::string& train_path,
                   const std::string& test_path) {
  ExperimentConfig cfg = flags.resolve();
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (!train_path.empty()) cfg.train_file = train_path;
  if (!test_path.empty()) cfg.test_file = test_path;
  const auto results = pl::run_experiment(cfg);
  for (const auto& r : results) {
    for (const auto& m : r.methods) {
      std::cout << r.label << ' ' << m.report.method << " mean CRPS " << io::format_double(m.report.mean_crps)
                << '\n';
    }
  }
  std::cout << "bundles written to " << cfg.resolved_output_dir() << '\n';
  return cps::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal predictive systems: conformal IDR, conformal binning and LSPM"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cps::kName) + " " + std::string(cps::kVersion));

  std::string model = "isotonic", out_dir, train_path, test_path, pred_path, out_path;
  std::size_t n_train = 2000, n_test = 5000;
  std::uint64_t seed = 1;
  double band_level = 0.9;

  auto* sim_cmd = app.add_subcommand("simulate", "Generate simulated training and test samples");
  sim_cmd->add_option("--model", model, "isotonic or less_isotonic");
  sim_cmd->add_option("--n-train", n_train, "Training sample size");
  sim_cmd->add_option("--n-test", n_test, "Test sample size");
  sim_cmd->add_option("--seed", seed, "Base seed");
  sim_cmd->add_option("--out", out_dir, "Output directory")->required();

  ConfigFlags fp_flags;
  auto* fp_cmd = app.add_subcommand("fit-predict", "Fit methods on a training CSV and predict a test CSV");
  fp_cmd->add_option("--train", train_path, "Training CSV (x,y[,weight])")->required()->check(CLI::ExistingFile);
  fp_cmd->add_option("--test", test_path, "Test CSV (x,y[,weight])")->required()->check(CLI::ExistingFile);
  fp_cmd->add_option("--out", out_path, "Output JSON-lines file")->required();
  fp_flags.attach(fp_cmd, false);

  auto* ev_cmd = app.add_subcommand("evaluate", "Score prediction records against test outcomes");
  ev_cmd->add_option("--predictions", pred_path, "JSON-lines records from fit-predict")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--test", test_path, "Test CSV")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--seed", seed, "Seed of the PIT randomization");
  ev_cmd->add_option("--band-level", band_level, "Consistency band level");
  ev_cmd->add_option("--out", out_dir, "Report directory")->required();

  ConfigFlags ex_flags;
  std::string ex_out, ex_train, ex_test;
  auto* ex_cmd = app.add_subcommand("experiment", "Run the simulation study and write report bundles");
  ex_cmd->add_option("--out", ex_out, std::string("Output directory (default: $") + pl::kOutputDirEnv + ")");
  ex_cmd->add_option("--train", ex_train, "Training CSV instead of simulation");
  ex_cmd->add_option("--test", ex_test, "Test CSV instead of simulation");
  ex_flags.attach(ex_cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cps::kExitUsage;
  }

  try {
    if (*sim_cmd) return run_simulate(model, n_train, n_test, seed, out_dir);
    if (*fp_cmd) return run_fit_predict(fp_flags, train_path, test_path, out_path);
    if (*ev_cmd) return run_evaluate(pred_path, test_path, seed, band_level, out_dir);
    if (*ex_cmd) return run_experiment(ex_flags, ex_out, ex_train, ex_test);
  } catch (const cps::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cps::kExitUsage;
  } catch (const cps::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return cps::kExitData;
  } catch (const cps::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return cps::kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cps::kExitUsage;
  }
  return cps::kExitUsage;
}
