#pragma once

// Everything a CLI run depends on, serializable to JSON. The config hash is
// taken over the canonical JSON with output-only settings (--out, --threads)
// left out, so the same inputs give the same hash wherever they are written.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "trendeq/classify.hpp"
#include "trendeq/eval.hpp"
#include "trendeq/features.hpp"
#include "trendeq/gpr.hpp"
#include "trendeq/rng.hpp"
#include "trendeq/synth.hpp"

namespace trendeq::cli {

using nlohmann::json;

enum class ClassifierChoice { knn, svm, both };

struct RunConfig {
  std::string command;
  std::string series_path;  ///< empty: use the synthetic cohort
  std::string labels_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::string method = "gpr-in-range";
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  ClassifierChoice classifier = ClassifierChoice::both;
  classify::KnnOptions knn;
  classify::SvmOptions svm;
  bool stratified = false;
  bool pairwise = false;
  std::vector<std::string> ids;  ///< plot-data subset; empty means every patient
  unsigned threads = 1;
  gpr::FitConfig fit;
  synth::CohortConfig cohort;

  /// Pushes the single seed into every component that draws random numbers.
  void propagate_seed() {
    fit.seed = seed;
    cohort.seed = seed;
  }

  std::vector<eval::Classifier> classifiers() const {
    switch (classifier) {
      case ClassifierChoice::knn: return {eval::Classifier::knn};
      case ClassifierChoice::svm: return {eval::Classifier::svm};
      case ClassifierChoice::both: break;
    }
    return {eval::Classifier::knn, eval::Classifier::svm};
  }
};

inline std::string to_string(ClassifierChoice c) {
  switch (c) {
    case ClassifierChoice::knn: return "knn";
    case ClassifierChoice::svm: return "svm";
    case ClassifierChoice::both: break;
  }
  return "both";
}

inline json fit_to_json(const gpr::FitConfig& f) {
  return {{"length_scale_median", f.length_scale_median},
          {"length_scale_log_sd", f.length_scale_log_sd},
          {"signal_variance_floor", f.signal_variance_floor},
          {"signal_variance_log_sd", f.signal_variance_log_sd},
          {"noise_variance_median", f.noise_variance_median},
          {"noise_variance_log_sd", f.noise_variance_log_sd},
          {"restarts", f.restarts},
          {"max_iterations", f.max_iterations},
          {"gradient_tolerance", f.gradient_tolerance},
          {"jitter", f.jitter},
          {"max_jitter", f.max_jitter},
          {"seed", f.seed}};
}

inline json cohort_to_json(const synth::CohortConfig& c) {
  json j{{"n_patients", c.n_patients},
         {"stable_fraction", c.stable_fraction},
         {"mean_measurements", c.mean_measurements},
         {"min_measurements", c.min_measurements},
         {"start_age_mean", c.start_age_mean},
         {"start_age_sd", c.start_age_sd},
         {"start_age_min", c.start_age_min},
         {"start_age_max", c.start_age_max},
         {"unstable_start_age_shift", c.unstable_start_age_shift},
         {"span_mean", c.span_mean},
         {"span_min", c.span_min},
         {"span_max", c.span_max},
         {"level_min", c.level_min},
         {"level_max", c.level_max},
         {"level_age_slope", c.level_age_slope},
         {"unstable_level_shift", c.unstable_level_shift},
         {"noise_sd", c.noise_sd},
         {"linear_fraction", c.linear_fraction},
         {"slope_min", c.slope_min},
         {"slope_max", c.slope_max},
         {"step_min", c.step_min},
         {"step_max", c.step_max},
         {"step_margin", c.step_margin},
         {"egfr_min", c.egfr_min},
         {"egfr_max", c.egfr_max},
         {"flip_probability", c.flip_probability},
         {"seed", c.seed}};
  j["linear_drop"] = c.linear_drop ? json(*c.linear_drop) : json(nullptr);
  return j;
}

inline json to_json(const RunConfig& rc) {
  json variants = json::array();
  for (auto v : rc.variants) variants.push_back(std::string(to_string(v)));
  json j{{"command", rc.command},
         {"series", rc.series_path},
         {"labels", rc.labels_path},
         {"out", rc.out_dir},
         {"seed", rc.seed},
         {"method", rc.method},
         {"variants", variants},
         {"classifier", to_string(rc.classifier)},
         {"knn", {{"k", rc.knn.k}, {"scaling", rc.knn.scaling}}},
         {"svm",
          {{"c", rc.svm.c},
           {"sigma", rc.svm.sigma},
           {"tolerance", rc.svm.tolerance},
           {"scaling", rc.svm.scaling},
           {"iteration_factor", rc.svm.iteration_factor}}},
         {"stratified", rc.stratified},
         {"pairwise", rc.pairwise},
         {"ids", rc.ids},
         {"threads", rc.threads},
         {"fit", fit_to_json(rc.fit)}};
  if (rc.series_path.empty()) j["cohort"] = cohort_to_json(rc.cohort);
  return j;
}

inline gpr::FitConfig fit_from_json(const json& j) {
  gpr::FitConfig f;
  f.length_scale_median = j.at("length_scale_median").get<double>();
  f.length_scale_log_sd = j.at("length_scale_log_sd").get<double>();
  f.signal_variance_floor = j.at("signal_variance_floor").get<double>();
  f.signal_variance_log_sd = j.at("signal_variance_log_sd").get<double>();
  f.noise_variance_median = j.at("noise_variance_median").get<double>();
  f.noise_variance_log_sd = j.at("noise_variance_log_sd").get<double>();
  f.restarts = j.at("restarts").get<int>();
  f.max_iterations = j.at("max_iterations").get<int>();
  f.gradient_tolerance = j.at("gradient_tolerance").get<double>();
  f.jitter = j.at("jitter").get<double>();
  f.max_jitter = j.at("max_jitter").get<double>();
  f.seed = j.at("seed").get<std::uint64_t>();
  return f;
}

inline synth::CohortConfig cohort_from_json(const json& j) {
  synth::CohortConfig c;
  c.n_patients = j.at("n_patients").get<int>();
  c.stable_fraction = j.at("stable_fraction").get<double>();
  c.mean_measurements = j.at("mean_measurements").get<double>();
  c.min_measurements = j.at("min_measurements").get<int>();
  c.start_age_mean = j.at("start_age_mean").get<double>();
  c.start_age_sd = j.at("start_age_sd").get<double>();
  c.start_age_min = j.at("start_age_min").get<double>();
  c.start_age_max = j.at("start_age_max").get<double>();
  c.unstable_start_age_shift = j.at("unstable_start_age_shift").get<double>();
  c.span_mean = j.at("span_mean").get<double>();
  c.span_min = j.at("span_min").get<double>();
  c.span_max = j.at("span_max").get<double>();
  c.level_min = j.at("level_min").get<double>();
  c.level_max = j.at("level_max").get<double>();
  c.level_age_slope = j.at("level_age_slope").get<double>();
  c.unstable_level_shift = j.at("unstable_level_shift").get<double>();
  c.noise_sd = j.at("noise_sd").get<double>();
  c.linear_fraction = j.at("linear_fraction").get<double>();
  c.slope_min = j.at("slope_min").get<double>();
  c.slope_max = j.at("slope_max").get<double>();
  c.step_min = j.at("step_min").get<double>();
  c.step_max = j.at("step_max").get<double>();
  c.step_margin = j.at("step_margin").get<double>();
  c.egfr_min = j.at("egfr_min").get<double>();
  c.egfr_max = j.at("egfr_max").get<double>();
  c.flip_probability = j.at("flip_probability").get<std::array<double, kExperts>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (const auto& d = j.at("linear_drop"); !d.is_null()) c.linear_drop = d.get<double>();
  return c;
}

inline RunConfig from_json(const json& j) {
  RunConfig rc;
  rc.command = j.at("command").get<std::string>();
  rc.series_path = j.at("series").get<std::string>();
  rc.labels_path = j.at("labels").get<std::string>();
  rc.out_dir = j.value("out", rc.out_dir);
  rc.seed = j.at("seed").get<std::uint64_t>();
  rc.method = j.at("method").get<std::string>();
  rc.variants.clear();
  for (const auto& v : j.at("variants")) {
    const auto parsed = parse_variant(v.get<std::string>());
    if (!parsed) throw ConfigError("unknown variant '" + v.get<std::string>() + "'");
    rc.variants.push_back(*parsed);
  }
  const auto cls = j.at("classifier").get<std::string>();
  if (cls == "knn") rc.classifier = ClassifierChoice::knn;
  else if (cls == "svm") rc.classifier = ClassifierChoice::svm;
  else if (cls == "both") rc.classifier = ClassifierChoice::both;
  else throw ConfigError("unknown classifier '" + cls + "'");
  rc.knn.k = j.at("knn").at("k").get<int>();
  rc.knn.scaling = j.at("knn").at("scaling").get<bool>();
  const auto& s = j.at("svm");
  rc.svm.c = s.at("c").get<double>();
  rc.svm.sigma = s.at("sigma").get<double>();
  rc.svm.tolerance = s.at("tolerance").get<double>();
  rc.svm.scaling = s.at("scaling").get<bool>();
  rc.svm.iteration_factor = s.at("iteration_factor").get<std::size_t>();
  rc.stratified = j.at("stratified").get<bool>();
  rc.pairwise = j.at("pairwise").get<bool>();
  rc.ids = j.at("ids").get<std::vector<std::string>>();
  rc.threads = j.value("threads", rc.threads);
  rc.fit = fit_from_json(j.at("fit"));
  if (j.contains("cohort")) rc.cohort = cohort_from_json(j.at("cohort"));
  return rc;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// FNV-1a of a file's bytes, so edited inputs change the config hash.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex(fnv1a(ss.str()));
}

/// The hashed form: everything except where and how fast outputs are made,
/// plus digests of the input files.
inline json canonical_json(const RunConfig& rc) {
  json j = to_json(rc);
  j.erase("out");
  j.erase("threads");
  if (!rc.series_path.empty()) j["series_digest"] = file_digest(rc.series_path);
  if (!rc.labels_path.empty()) j["labels_digest"] = file_digest(rc.labels_path);
  return j;
}

inline std::uint64_t config_hash(const RunConfig& rc) { return fnv1a(canonical_json(rc).dump()); }

}  // namespace trendeq::cli
