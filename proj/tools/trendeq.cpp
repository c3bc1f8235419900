// trendeq: equalize irregular eGFR series and classify their trends.
//
//   trendeq generate  --out data/ --seed 7
//   trendeq equalize  --series data/series.csv --method gpr-in-range --out eq/
//   trendeq evaluate  --series data/series.csv --labels data/labels.csv --out run/
//   trendeq evaluate  --out run/            (synthetic cohort from --seed)

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

using namespace trendeq;
using trendeq::cli::RunConfig;

struct Flags {
  std::string config_path;
  std::optional<std::string> out;
  std::vector<std::string> variants;
  std::string classifier = "both";
  bool no_scaling = false;
  bool separable = false;
  std::optional<int> n_patients;
  std::optional<double> noise_sd;
  std::optional<double> stable_fraction;
  std::optional<double> mean_measurements;
  std::optional<double> linear_fraction;
  std::optional<double> span_mean;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("trendeq");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("TRENDEQ_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off")
      spdlog::warn("TRENDEQ_LOG: unknown level '{}', keeping info", env);
    else
      spdlog::set_level(level);
  }
}

void add_common(CLI::App* sub, RunConfig& rc, Flags& f) {
  sub->add_option("--config", f.config_path, "Run from a saved run_config.json (other flags except --out ignored)")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--seed", rc.seed, "Seed for every random stream");
  sub->add_option("--threads", rc.threads, "Worker threads for GP fitting")->check(CLI::Range(1u, 256u));
  sub->add_option("--restarts", rc.fit.restarts, "GP optimizer restarts")->check(CLI::Range(1, 100));
}

void add_inputs(CLI::App* sub, RunConfig& rc, bool labels) {
  sub->add_option("--series", rc.series_path, "Series CSV (default: synthetic cohort)")->check(CLI::ExistingFile);
  if (labels) sub->add_option("--labels", rc.labels_path, "Expert label CSV")->check(CLI::ExistingFile);
}

void add_generator(CLI::App* sub, Flags& f) {
  sub->add_flag("--separable", f.separable, "Noise-free cohort with a clean class boundary");
  sub->add_option("--n-patients", f.n_patients, "Cohort size")->check(CLI::Range(10, 1000000));
  sub->add_option("--noise-sd", f.noise_sd, "Measurement noise sd")->check(CLI::NonNegativeNumber);
  sub->add_option("--stable-fraction", f.stable_fraction, "Share of stable patients")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--mean-measurements", f.mean_measurements, "Mean measurements per patient");
  sub->add_option("--linear-fraction", f.linear_fraction, "Share of unstable patients with a linear decline")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--span-mean", f.span_mean, "Mean observation window, years")->check(CLI::PositiveNumber);
}

void add_classifier(CLI::App* sub, RunConfig& rc, Flags& f) {
  sub->add_option("--variants", f.variants, "Comma-separated featurizations (default: all six)")->delimiter(',');
  sub->add_option("--classifier", f.classifier, "knn, svm or both")
      ->check(CLI::IsMember({"knn", "svm", "both"}));
  sub->add_option("--svm-c", rc.svm.c, "SVM box constraint")->check(CLI::PositiveNumber);
  sub->add_option("--svm-sigma", rc.svm.sigma, "RBF kernel width")->check(CLI::PositiveNumber);
  sub->add_option("--knn-k", rc.knn.k, "Neighbours (odd)")->check(CLI::PositiveNumber);
  sub->add_flag("--no-scaling", f.no_scaling, "Disable z-score standardization");
}

void finish(RunConfig& rc, const Flags& f, const std::string& command) {
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    rc = cli::from_json(cli::json::parse(in));
    rc.command = command;
    if (f.out) rc.out_dir = *f.out;
    return;
  }
  rc.command = command;
  if (f.out) rc.out_dir = *f.out;

  if (f.separable) rc.cohort = synth::separable_config();
  if (f.n_patients) rc.cohort.n_patients = *f.n_patients;
  if (f.noise_sd) rc.cohort.noise_sd = *f.noise_sd;
  if (f.stable_fraction) rc.cohort.stable_fraction = *f.stable_fraction;
  if (f.mean_measurements) rc.cohort.mean_measurements = *f.mean_measurements;
  if (f.linear_fraction) rc.cohort.linear_fraction = *f.linear_fraction;
  if (f.span_mean) rc.cohort.span_mean = *f.span_mean;
  rc.propagate_seed();
  rc.cohort.validate();

  if (!f.variants.empty()) {
    rc.variants.clear();
    for (const auto& name : f.variants) {
      const auto v = parse_variant(name);
      if (!v) throw ConfigError("unknown variant '" + name + "'");
      rc.variants.push_back(*v);
    }
  }
  rc.classifier = f.classifier == "knn"   ? cli::ClassifierChoice::knn
                  : f.classifier == "svm" ? cli::ClassifierChoice::svm
                                          : cli::ClassifierChoice::both;
  if (rc.knn.k % 2 == 0) throw ConfigError("--knn-k must be odd");
  rc.knn.scaling = rc.svm.scaling = !f.no_scaling;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Equalize irregular eGFR series with GP regression and classify their trends"};
  app.require_subcommand(1);
  RunConfig rc;
  rc.threads = std::max(1u, std::thread::hardware_concurrency());
  Flags f;

  auto* gen = app.add_subcommand("generate", "Write a synthetic cohort (series, labels, latent trends)");
  add_common(gen, rc, f);
  add_generator(gen, f);

  auto* eq = app.add_subcommand("equalize", "Resample every series onto a 50-point grid");
  add_common(eq, rc, f);
  add_inputs(eq, rc, false);
  add_generator(eq, f);
  eq->add_option("--method", rc.method, "gpr-in-range, gpr-fixed or linear")
      ->check(CLI::IsMember({"gpr-in-range", "gpr-fixed", "linear"}));

  auto* cls = app.add_subcommand("classify", "Train on labelled patients and predict every patient");
  add_common(cls, rc, f);
  add_inputs(cls, rc, true);
  add_generator(cls, f);
  add_classifier(cls, rc, f);

  auto* ev = app.add_subcommand("evaluate", "Five-fold evaluation of the variant x classifier matrix");
  add_common(ev, rc, f);
  add_inputs(ev, rc, true);
  add_generator(ev, f);
  add_classifier(ev, rc, f);
  ev->add_flag("--stratified", rc.stratified, "Stratify folds by class");
  ev->add_flag("--pairwise", rc.pairwise, "Pairwise expert agreement instead of majority-of-four");

  auto* agr = app.add_subcommand("agreement", "Score each expert against the others");
  add_common(agr, rc, f);
  agr->add_option("--labels", rc.labels_path, "Expert label CSV")->required()->check(CLI::ExistingFile);
  agr->add_flag("--pairwise", rc.pairwise, "Pairwise agreement instead of majority-of-four");

  auto* plot = app.add_subcommand("plot-data", "Posterior bands and derived statistics as CSV");
  add_common(plot, rc, f);
  add_inputs(plot, rc, true);
  add_generator(plot, f);
  plot->add_option("--ids", rc.ids, "Comma-separated patient ids (default: all)")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    finish(rc, f, app.get_subcommands().front()->get_name());
    const int status = cli::run(rc);
    auto saved = cli::to_json(rc);
    saved.erase("out");
    saved.erase("threads");
    std::ofstream cfg(std::filesystem::path(rc.out_dir) / "run_config.json");
    cfg << saved.dump(2) << '\n';
    return status;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
