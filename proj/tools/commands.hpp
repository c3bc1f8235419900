#pragma once

// Subcommand bodies. Each takes a finished RunConfig, writes its artifacts
// under `out_dir` and returns the process exit status. Every artifact starts
// with a `# config_hash=...,seed=...` comment line; the readers skip it.

#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "run_config.hpp"
#include "trendeq/eval.hpp"
#include "trendeq/features.hpp"
#include "trendeq/gpr.hpp"
#include "trendeq/grid.hpp"
#include "trendeq/interp.hpp"
#include "trendeq/synth.hpp"
#include "trendeq/timeseries.hpp"

namespace trendeq::cli {

namespace fs = std::filesystem;

namespace detail {

inline std::string stamp(const RunConfig& rc) {
  return "# config_hash=" + hex(config_hash(rc)) + ",seed=" + std::to_string(rc.seed) + "\n";
}

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path) {
    if (path.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
      if (ec) throw Error("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot write '" + path.string() + "'");
  }

  std::ostream& stream() { return out_; }

  void close() {
    out_.close();
    if (!out_) throw Error("write failed for '" + path_.string() + "'");
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

inline void write_file(const fs::path& path, const std::string& content) {
  Writer w(path);
  w.stream() << content;
  w.close();
}

/// Keeps file names portable whatever the patient id contains.
inline std::string file_stem(std::string_view id) {
  std::string s(id);
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s;
}

struct Inputs {
  std::vector<PatientSeries> series;
  std::optional<LabelMap> labels;
};

/// Reads --series/--labels, or generates the synthetic cohort when no series
/// file is given.
inline Inputs load_inputs(const RunConfig& rc) {
  Inputs in;
  if (rc.series_path.empty()) {
    auto cohort = synth::generate_cohort(rc.cohort);
    spdlog::info("using synthetic cohort: {} patients, seed {}", cohort.series.size(), rc.cohort.seed);
    in.series = std::move(cohort.series);
    in.labels = std::move(cohort.labels);
  } else {
    in.series = load_series(rc.series_path);
    spdlog::info("read {} patients from {}", in.series.size(), rc.series_path);
  }
  if (!rc.labels_path.empty()) in.labels = load_labels(rc.labels_path);
  return in;
}

inline Variant method_variant(const std::string& method) {
  if (method == "gpr-in-range") return Variant::gpr_in_range;
  if (method == "gpr-fixed") return Variant::gpr_30_90;
  if (method == "linear") return Variant::interp;
  throw ConfigError("unknown method '" + method + "'");
}

/// Resampled trend for one series under `regime`, or the failure reason.
inline std::variant<Resampled, std::string> resample_one(const PatientSeries& s, Regime regime,
                                                          eval::GprCache& cache, const gpr::FitConfig& fit) {
  try {
    if (regime == Regime::linear_in_range) return interp::linear_resample(s);
    if (regime == Regime::in_range && s.size() < 2) return std::string(DegenerateRange().what());
    const auto& outcome = cache.get(s, fit);
    if (const auto* err = std::get_if<std::string>(&outcome)) return *err;
    const auto& model = std::get<gpr::GprModel>(outcome);
    return regime == Regime::fixed_30_90 ? gpr::resample_fixed_range(model) : gpr::resample_in_range(model, s);
  } catch (const Error& e) {
    return std::string(e.what());
  }
}

inline void write_exclusions(const fs::path& path, const RunConfig& rc,
                             const std::vector<eval::Exclusion>& excl) {
  Writer w(path);
  w.stream() << stamp(rc) << "patient_id,reason\n";
  for (const auto& e : excl) w.stream() << e.id << ',' << e.reason << '\n';
  w.close();
}

}  // namespace detail

inline int cmd_generate(const RunConfig& rc) {
  const auto cohort = synth::generate_cohort(rc.cohort);
  const fs::path out(rc.out_dir);
  const auto header = detail::stamp(rc);
  std::vector<std::string> order;
  std::size_t stable = 0, measurements = 0;
  for (std::size_t i = 0; i < cohort.series.size(); ++i) {
    order.push_back(cohort.series[i].id);
    measurements += cohort.series[i].size();
    if (cohort.truth[i] == TrendAnnotation::stable) ++stable;
  }

  std::ostringstream series, labels, truth;
  series << header;
  write_series(series, cohort.series);
  labels << header;
  write_labels(labels, cohort.labels, order);
  truth << header << "patient_id,trend\n";
  for (std::size_t i = 0; i < order.size(); ++i) truth << order[i] << ',' << to_string(cohort.truth[i]) << '\n';

  detail::write_file(out / "series.csv", series.str());
  detail::write_file(out / "labels.csv", labels.str());
  detail::write_file(out / "truth.csv", truth.str());
  spdlog::info("generated {} patients ({} stable, {} unstable), {} measurements", order.size(), stable,
               order.size() - stable, measurements);
  return 0;
}

inline int cmd_equalize(const RunConfig& rc) {
  const auto variant = detail::method_variant(rc.method);
  const auto regime = *required_regime(variant);
  const auto in = detail::load_inputs(rc);
  const fs::path out(rc.out_dir);

  eval::GprCache cache;
  if (regime != Regime::linear_in_range) cache.fill(in.series, rc.fit, rc.threads);

  std::vector<FeatureVector> rows;
  std::vector<eval::Exclusion> excl;
  for (const auto& s : in.series) {
    auto r = detail::resample_one(s, regime, cache, rc.fit);
    if (auto* err = std::get_if<std::string>(&r)) {
      spdlog::warn("{}: excluded ({})", s.id, *err);
      excl.push_back({s.id, *err});
      continue;
    }
    const auto& res = std::get<Resampled>(r);
    rows.push_back(assemble(s.id, variant, nullptr, &res));
    std::ostringstream plot;
    plot << detail::stamp(rc);
    write_plot_data(plot, res, s);
    detail::write_file(out / "plot" / (detail::file_stem(s.id) + ".csv"), plot.str());
  }

  std::ostringstream matrix;
  matrix << detail::stamp(rc);
  write_feature_matrix(matrix, rows);
  detail::write_file(out / "features.csv", matrix.str());
  detail::write_exclusions(out / "exclusions.csv", rc, excl);

  spdlog::info("equalized {} of {} patients with {}", rows.size(), in.series.size(), rc.method);
  if (rows.empty()) {
    spdlog::error("every patient failed");
    return 1;
  }
  return 0;
}

/// Trains on every labelled patient and predicts every patient in the input.
/// Predictions for labelled patients are therefore resubstitution estimates.
inline int cmd_classify(const RunConfig& rc) {
  const auto in = detail::load_inputs(rc);
  if (!in.labels) throw ConfigError("classify needs --labels");
  const fs::path out(rc.out_dir);

  eval::GprCache cache;
  std::ostringstream preds, models;
  preds << detail::stamp(rc) << "patient_id,variant,classifier,prediction,truth\n";
  models << detail::stamp(rc);
  std::vector<eval::Exclusion> excl;
  std::size_t predicted = 0;

  for (auto v : rc.variants) {
    if (required_regime(v) == Regime::fixed_30_90 || required_regime(v) == Regime::in_range)
      cache.fill(in.series, rc.fit, rc.threads);
    std::vector<std::optional<FeatureVector>> feats;
    classify::LabeledData train;
    for (const auto& s : in.series) {
      auto r = eval::build_features(s, v, cache, rc.fit);
      if (auto* err = std::get_if<std::string>(&r)) {
        excl.push_back({s.id, std::string(to_string(v)) + ": " + *err});
        feats.emplace_back();
        continue;
      }
      feats.emplace_back(std::move(std::get<FeatureVector>(r)));
      if (auto it = in.labels->find(s.id); it != in.labels->end()) {
        train.ids.push_back(s.id);
        train.rows.push_back(feats.back()->values);
        train.labels.push_back(consensus(it->second));
      }
    }

    for (auto c : rc.classifiers()) {
      std::optional<classify::KnnModel> knn;
      std::optional<classify::SvmModel> svm;
      if (c == eval::Classifier::knn) {
        knn = classify::knn_train(train, rc.knn);
        models << "[" << to_string(v) << " knn]\n" << classify::dump(*knn) << '\n';
      } else {
        svm = classify::svm_train(train, rc.svm);
        models << "[" << to_string(v) << " svm]\n" << classify::dump(*svm) << '\n';
      }
      for (std::size_t i = 0; i < in.series.size(); ++i) {
        if (!feats[i]) continue;
        const auto p = knn ? classify::knn_predict(*knn, feats[i]->values) : classify::svm_predict(*svm, feats[i]->values);
        const auto it = in.labels->find(in.series[i].id);
        preds << in.series[i].id << ',' << to_string(v) << ',' << eval::to_string(c) << ',' << to_string(p) << ','
              << (it == in.labels->end() ? std::string_view{} : to_string(consensus(it->second))) << '\n';
        ++predicted;
      }
    }
  }

  detail::write_file(out / "predictions.csv", preds.str());
  detail::write_file(out / "models.txt", models.str());
  detail::write_exclusions(out / "exclusions.csv", rc, excl);
  spdlog::info("wrote {} predictions", predicted);
  return predicted == 0 ? 1 : 0;
}

inline int cmd_agreement(const RunConfig& rc) {
  if (rc.labels_path.empty()) throw ConfigError("agreement needs --labels");
  const auto labels = load_labels(rc.labels_path);
  const auto rep = eval::expert_agreement(labels, rc.pairwise ? eval::AgreementMode::pairwise
                                                              : eval::AgreementMode::majority);
  std::ostringstream os;
  os << detail::stamp(rc);
  eval::write_agreement_csv(os, rep);
  detail::write_file(fs::path(rc.out_dir) / "agreement.csv", os.str());
  spdlog::info("expert agreement mean F = {}", rep.mean_f);
  return 0;
}

/// Runs the selected variant x classifier matrix under five-fold cross
/// validation, plus expert agreement on the same labels.
inline int cmd_evaluate(const RunConfig& rc) {
  auto in = detail::load_inputs(rc);
  if (!in.labels) throw ConfigError("evaluate needs --labels (or no --series, for the synthetic cohort)");
  const fs::path out(rc.out_dir);
  const auto hash = hex(config_hash(rc));

  eval::ExperimentOptions opts{rc.knn, rc.svm, rc.fit, rc.threads};
  eval::Cohort cohort(std::move(in.series), *in.labels, opts);
  const auto ids = cohort.ids();
  const auto plan = rc.stratified ? eval::kfold_split_stratified(ids, cohort.truths(), rc.seed)
                                  : eval::kfold_split(ids, rc.seed);

  std::ostringstream log;
  log << json{{"event", "config"}, {"config_hash", hash}, {"seed", rc.seed}, {"config", canonical_json(rc)}}.dump()
      << '\n';
  for (const auto& id : cohort.unlabeled())
    log << json{{"event", "unlabeled"}, {"patient_id", id}}.dump() << '\n';

  std::vector<eval::ExperimentReport> reports;
  for (auto v : rc.variants) {
    for (const auto& e : cohort.exclusions(v))
      log << json{{"event", "exclusion"}, {"variant", to_string(v)}, {"patient_id", e.id}, {"reason", e.reason}}.dump()
          << '\n';
    for (auto c : rc.classifiers()) {
      auto rep = eval::run_experiment(cohort, v, c, plan);
      for (int f = 0; f < eval::kFolds; ++f) {
        const auto& fr = rep.per_fold[static_cast<std::size_t>(f)];
        log << json{{"event", "fold"},         {"variant", to_string(v)},     {"classifier", eval::to_string(c)},
                    {"fold", f + 1},           {"n_train", fr.n_train},       {"tp", fr.counts.tp},
                    {"fp", fr.counts.fp},      {"tn", fr.counts.tn},          {"fn", fr.counts.fn},
                    {"precision", fr.scores.precision}, {"recall", fr.scores.recall}, {"f", fr.scores.f}}
                   .dump()
            << '\n';
      }
      spdlog::info("{:<18} {}  mean F = {:.4f}", to_string(v), eval::to_string(c), rep.mean_f);
      reports.push_back(std::move(rep));
    }
  }

  const auto agreement = eval::expert_agreement(*in.labels, rc.pairwise ? eval::AgreementMode::pairwise
                                                                        : eval::AgreementMode::majority);
  log << json{{"event", "agreement"}, {"mean_f", agreement.mean_f}}.dump() << '\n';

  std::ostringstream report, agree;
  report << detail::stamp(rc);
  eval::write_report_csv(report, reports);
  agree << detail::stamp(rc);
  eval::write_agreement_csv(agree, agreement);
  detail::write_file(out / "report.csv", report.str());
  detail::write_file(out / "agreement.csv", agree.str());
  detail::write_file(out / "log.jsonl", log.str());
  return 0;
}

/// Band data for every regime a patient supports, plus the derived-statistics
/// scatter table.
inline int cmd_plot_data(const RunConfig& rc) {
  auto in = detail::load_inputs(rc);
  if (!rc.ids.empty()) {
    const std::set<std::string> keep(rc.ids.begin(), rc.ids.end());
    std::erase_if(in.series, [&](const PatientSeries& s) { return !keep.contains(s.id); });
    if (in.series.empty()) throw ConfigError("none of the requested --ids are in the input");
  }
  const fs::path out(rc.out_dir);
  eval::GprCache cache;
  cache.fill(in.series, rc.fit, rc.threads);

  std::ostringstream stats;
  stats << detail::stamp(rc) << "patient_id,delta_a,delta_g,mu_a,mu_g,label\n";
  std::vector<eval::Exclusion> excl;
  for (const auto& s : in.series) {
    const auto d = derive_stats(s);
    std::string_view label;
    if (in.labels)
      if (auto it = in.labels->find(s.id); it != in.labels->end()) label = to_string(consensus(it->second));
    stats << s.id << ',' << text::format_double(d.delta_a) << ',' << text::format_double(d.delta_g) << ','
          << text::format_double(d.mu_a) << ',' << text::format_double(d.mu_g) << ',' << label << '\n';

    for (auto regime : {Regime::fixed_30_90, Regime::in_range, Regime::linear_in_range}) {
      auto r = detail::resample_one(s, regime, cache, rc.fit);
      if (auto* err = std::get_if<std::string>(&r)) {
        excl.push_back({s.id, std::string(to_string(regime)) + ": " + *err});
        continue;
      }
      std::ostringstream plot;
      plot << detail::stamp(rc);
      write_plot_data(plot, std::get<Resampled>(r), s);
      detail::write_file(out / "plot" / (detail::file_stem(s.id) + "_" + std::string(to_string(regime)) + ".csv"),
                         plot.str());
    }
  }
  detail::write_file(out / "stats.csv", stats.str());
  detail::write_exclusions(out / "exclusions.csv", rc, excl);
  spdlog::info("plot data for {} patients", in.series.size());
  return 0;
}

inline int run(const RunConfig& rc) {
  if (rc.command == "generate") return cmd_generate(rc);
  if (rc.command == "equalize") return cmd_equalize(rc);
  if (rc.command == "classify") return cmd_classify(rc);
  if (rc.command == "evaluate") return cmd_evaluate(rc);
  if (rc.command == "agreement") return cmd_agreement(rc);
  if (rc.command == "plot-data") return cmd_plot_data(rc);
  throw ConfigError("unknown command '" + rc.command + "'");
}

}  // namespace trendeq::cli
