#pragma once

// Cross-validation harness, precision/recall/F metrics, expert agreement
// scoring, and the featurization x classifier experiment matrix.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "trendeq/classify.hpp"
#include "trendeq/error.hpp"
#include "trendeq/features.hpp"
#include "trendeq/gpr.hpp"
#include "trendeq/interp.hpp"
#include "trendeq/rng.hpp"
#include "trendeq/text.hpp"
#include "trendeq/timeseries.hpp"

namespace trendeq::eval {

inline constexpr int kFolds = 5;

// ---------------------------------------------------------------------------
// Metrics

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Stable is the positive class.
inline ConfusionCounts confusion(std::span<const BinaryLabel> preds, std::span<const BinaryLabel> truths) {
  if (preds.size() != truths.size()) throw Error("confusion: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == BinaryLabel::stable, t = truths[i] == BinaryLabel::stable;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

/// Zero denominators give 0 (precision with tp + fp = 0, recall with
/// tp + fn = 0, F with p + r = 0).
inline Scores f_score(const ConfusionCounts& c) {
  Scores s;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) s.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) s.recall = tp / static_cast<double>(c.tp + c.fn);
  if (s.precision + s.recall > 0.0) s.f = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  std::uint64_t seed = 0;
  std::map<std::string, int> assignments;

  std::vector<std::vector<std::string>> folds() const {
    std::vector<std::vector<std::string>> out(kFolds);
    for (const auto& [id, f] : assignments) out[static_cast<std::size_t>(f)].push_back(id);
    return out;
  }

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

namespace detail {

inline std::vector<std::string> sorted_unique(std::span<const std::string> ids) {
  std::vector<std::string> v(ids.begin(), ids.end());
  std::sort(v.begin(), v.end());
  if (std::adjacent_find(v.begin(), v.end()) != v.end()) throw Error("kfold_split: duplicate id");
  return v;
}

}  // namespace detail

/// Seeded shuffle, then round-robin into five folds. The plan depends only on
/// the set of ids, not their order.
inline FoldPlan kfold_split(std::span<const std::string> ids, std::uint64_t seed) {
  if (ids.size() < static_cast<std::size_t>(kFolds)) throw Error("kfold_split: too few patients");
  auto v = detail::sorted_unique(ids);
  Rng rng(substream(seed, "folds"));
  std::shuffle(v.begin(), v.end(), rng);
  FoldPlan plan{seed, {}};
  for (std::size_t i = 0; i < v.size(); ++i) plan.assignments[v[i]] = static_cast<int>(i % kFolds);
  return plan;
}

/// Stratified variant: each class is shuffled separately and dealt
/// round-robin, continuing the rotation across classes.
inline FoldPlan kfold_split_stratified(std::span<const std::string> ids,
                                       const std::map<std::string, BinaryLabel>& truths,
                                       std::uint64_t seed) {
  if (ids.size() < static_cast<std::size_t>(kFolds)) throw Error("kfold_split: too few patients");
  auto v = detail::sorted_unique(ids);
  std::vector<std::string> pos, neg;
  for (auto& id : v) (truths.at(id) == BinaryLabel::stable ? pos : neg).push_back(id);
  Rng rng(substream(seed, "folds"));
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  FoldPlan plan{seed, {}};
  std::size_t i = 0;
  for (const auto* group : {&pos, &neg})
    for (const auto& id : *group) plan.assignments[id] = static_cast<int>(i++ % kFolds);
  return plan;
}

// ---------------------------------------------------------------------------
// Features for a cohort

inline std::uint64_t fit_config_hash(const gpr::FitConfig& c) {
  std::string s;
  for (double v : {c.length_scale_median, c.length_scale_log_sd, c.signal_variance_floor,
                   c.signal_variance_log_sd, c.noise_variance_median, c.noise_variance_log_sd,
                   c.gradient_tolerance, c.jitter, c.max_jitter})
    s += text::format_double(v) + ';';
  s += std::to_string(c.restarts) + ';' + std::to_string(c.max_iterations) + ';' + std::to_string(c.seed);
  return fnv1a(s);
}

/// Fitted model, or the reason the fit failed.
using FitOutcome = std::variant<gpr::GprModel, std::string>;

/// GPR fits keyed by (patient id, fit-config hash). Thread-safe.
class GprCache {
 public:
  const FitOutcome& get(const PatientSeries& s, const gpr::FitConfig& cfg) {
    const Key key{s.id, fit_config_hash(cfg)};
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    FitOutcome outcome = compute(s, cfg);
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(key, std::move(outcome)).first->second;
  }

  /// Fits every series not yet cached, using up to `threads` workers.
  void fill(std::span<const PatientSeries> series, const gpr::FitConfig& cfg, unsigned threads) {
    threads = std::max(1u, threads);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < series.size();) get(series[i], cfg);
    };
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }

 private:
  using Key = std::pair<std::string, std::uint64_t>;

  static FitOutcome compute(const PatientSeries& s, const gpr::FitConfig& cfg) {
    try {
      return gpr::fit(s, cfg);
    } catch (const Error& e) {
      return std::string(e.what());
    }
  }

  mutable std::mutex mutex_;
  std::map<Key, FitOutcome> cache_;
};

struct Exclusion {
  std::string id;
  std::string reason;
};

/// Feature vector for one patient, or why it cannot be built.
inline std::variant<FeatureVector, std::string> build_features(const PatientSeries& s, Variant v,
                                                               GprCache& cache,
                                                               const gpr::FitConfig& cfg) {
  std::optional<DerivedStats> stats;
  if (uses_stats(v)) stats = derive_stats(s);
  std::optional<Resampled> resampled;
  try {
    switch (v) {
      case Variant::stats4: break;
      case Variant::gpr_30_90:
      case Variant::gpr_in_range:
      case Variant::stats_plus_gpr: {
        if (v != Variant::gpr_30_90 && s.size() < 2) return std::string("degenerate range");
        const auto& fit = cache.get(s, cfg);
        if (const auto* err = std::get_if<std::string>(&fit)) return *err;
        const auto& model = std::get<gpr::GprModel>(fit);
        resampled = v == Variant::gpr_30_90 ? gpr::resample_fixed_range(model)
                                            : gpr::resample_in_range(model, s);
        break;
      }
      case Variant::interp:
      case Variant::stats_plus_interp: resampled = interp::linear_resample(s); break;
    }
    return assemble(s.id, v, stats, resampled);
  } catch (const Error& e) {
    return std::string(e.what());
  }
}

// ---------------------------------------------------------------------------
// Experiments

enum class Classifier { knn, svm };

inline std::string_view to_string(Classifier c) noexcept { return c == Classifier::knn ? "knn" : "svm"; }

struct ExperimentOptions {
  classify::KnnOptions knn;
  classify::SvmOptions svm;
  gpr::FitConfig fit;
  unsigned threads = 1;
};

struct FoldResult {
  ConfusionCounts counts;
  Scores scores;
  std::size_t n_train = 0;
};

struct ExperimentReport {
  Variant variant = Variant::stats4;
  Classifier classifier = Classifier::knn;
  std::array<FoldResult, kFolds> per_fold{};
  double mean_f = 0.0;
  std::vector<Exclusion> exclusions;
};

struct AuditEvent {
  Variant variant;
  Classifier classifier;
  int fold;
  std::string_view stage;
  std::span<const std::string> ids;
};

using AuditFn = std::function<void(const AuditEvent&)>;

/// A labelled cohort: series, consensus truths, and cached features.
class Cohort {
 public:
  Cohort(std::vector<PatientSeries> series, const LabelMap& labels, ExperimentOptions opts = {})
      : opts_(std::move(opts)) {
    for (auto& s : series) {
      auto it = labels.find(s.id);
      if (it == labels.end()) {
        unlabeled_.push_back(s.id);
        continue;
      }
      truths_[s.id] = consensus(it->second);
      series_.push_back(std::move(s));
    }
  }

  std::span<const PatientSeries> series() const noexcept { return series_; }
  const std::map<std::string, BinaryLabel>& truths() const noexcept { return truths_; }
  const std::vector<std::string>& unlabeled() const noexcept { return unlabeled_; }
  const ExperimentOptions& options() const noexcept { return opts_; }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& s : series_) out.push_back(s.id);
    return out;
  }

  /// One entry per series (in series order); empty where excluded.
  const std::vector<std::optional<FeatureVector>>& features(Variant v) {
    auto it = features_.find(v);
    if (it != features_.end()) return it->second;
    if (required_regime(v) == Regime::fixed_30_90 || required_regime(v) == Regime::in_range)
      cache_.fill(series_, opts_.fit, opts_.threads);
    std::vector<std::optional<FeatureVector>> out(series_.size());
    auto& excl = exclusions_[v];
    for (std::size_t i = 0; i < series_.size(); ++i) {
      auto r = build_features(series_[i], v, cache_, opts_.fit);
      if (auto* fv = std::get_if<FeatureVector>(&r)) out[i] = std::move(*fv);
      else excl.push_back({series_[i].id, std::get<std::string>(r)});
    }
    return features_.emplace(v, std::move(out)).first->second;
  }

  const std::vector<Exclusion>& exclusions(Variant v) {
    features(v);
    return exclusions_[v];
  }

  GprCache& gpr_cache() noexcept { return cache_; }

 private:
  ExperimentOptions opts_;
  std::vector<PatientSeries> series_;
  std::map<std::string, BinaryLabel> truths_;
  std::vector<std::string> unlabeled_;
  GprCache cache_;
  std::map<Variant, std::vector<std::optional<FeatureVector>>> features_;
  std::map<Variant, std::vector<Exclusion>> exclusions_;
};

/// Five-fold evaluation of one (variant, classifier) cell on a shared plan.
/// Training sees only patients outside the held-out fold.
inline ExperimentReport run_experiment(Cohort& cohort, Variant variant, Classifier classifier,
                                       const FoldPlan& plan, const AuditFn& audit = {}) {
  const auto& feats = cohort.features(variant);
  const auto series = cohort.series();
  ExperimentReport rep;
  rep.variant = variant;
  rep.classifier = classifier;
  rep.exclusions = cohort.exclusions(variant);

  for (int fold = 0; fold < kFolds; ++fold) {
    classify::LabeledData train;
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (!feats[i]) continue;
      const auto it = plan.assignments.find(series[i].id);
      if (it == plan.assignments.end()) continue;
      if (it->second == fold) {
        test.push_back(i);
      } else {
        train.ids.push_back(series[i].id);
        train.rows.push_back(feats[i]->values);
        train.labels.push_back(cohort.truths().at(series[i].id));
      }
    }

    classify::TrainingObserver observer;
    if (audit)
      observer = [&](std::string_view stage, std::span<const std::string> ids) {
        audit(AuditEvent{variant, classifier, fold, stage, ids});
      };

    std::vector<BinaryLabel> preds, truths;
    const auto& opts = cohort.options();
    if (classifier == Classifier::knn) {
      const auto model = classify::knn_train(train, opts.knn, &observer);
      for (auto i : test) preds.push_back(classify::knn_predict(model, feats[i]->values));
    } else {
      const auto model = classify::svm_train(train, opts.svm, &observer);
      for (auto i : test) preds.push_back(classify::svm_predict(model, feats[i]->values));
    }
    for (auto i : test) truths.push_back(cohort.truths().at(series[i].id));

    auto& fr = rep.per_fold[static_cast<std::size_t>(fold)];
    fr.counts = confusion(preds, truths);
    fr.scores = f_score(fr.counts);
    fr.n_train = train.size();
  }
  double sum = 0.0;
  for (const auto& fr : rep.per_fold) sum += fr.scores.f;
  rep.mean_f = sum / kFolds;
  return rep;
}

/// Convenience form: builds the cohort and an unstratified plan from `seed`.
inline ExperimentReport run_experiment(std::vector<PatientSeries> series, const LabelMap& labels,
                                       Variant variant, Classifier classifier, std::uint64_t seed,
                                       ExperimentOptions opts = {}) {
  Cohort cohort(std::move(series), labels, std::move(opts));
  const auto ids = cohort.ids();
  return run_experiment(cohort, variant, classifier, kfold_split(ids, seed));
}

// ---------------------------------------------------------------------------
// Expert agreement

enum class AgreementMode { majority, pairwise };

struct ExpertScore {
  ConfusionCounts counts;  ///< summed over comparisons
  double f = 0.0;
  std::size_t ties = 0;    ///< 2-2 splits excluded (majority mode)
};

struct AgreementReport {
  std::array<ExpertScore, kExperts> experts{};
  double mean_f = 0.0;
};

/// Scores each expert against the remaining four. Majority mode: the truth
/// is the majority of the other four binarized votes, ties excluded.
/// Pairwise mode: mean F against each other expert taken as truth.
inline AgreementReport expert_agreement(const LabelMap& labels,
                                        AgreementMode mode = AgreementMode::majority) {
  AgreementReport rep;
  for (std::size_t e = 0; e < kExperts; ++e) {
    auto& es = rep.experts[e];
    if (mode == AgreementMode::majority) {
      std::vector<BinaryLabel> preds, truths;
      for (const auto& [id, ls] : labels) {
        int stable = 0;
        for (std::size_t o = 0; o < kExperts; ++o)
          if (o != e) stable += to_int(binarize(ls.annotations[o]));
        if (stable == 2) {
          ++es.ties;
          continue;
        }
        preds.push_back(binarize(ls.annotations[e]));
        truths.push_back(stable > 2 ? BinaryLabel::stable : BinaryLabel::unstable);
      }
      es.counts = confusion(preds, truths);
      es.f = f_score(es.counts).f;
    } else {
      double sum = 0.0;
      for (std::size_t o = 0; o < kExperts; ++o) {
        if (o == e) continue;
        std::vector<BinaryLabel> preds, truths;
        for (const auto& [id, ls] : labels) {
          preds.push_back(binarize(ls.annotations[e]));
          truths.push_back(binarize(ls.annotations[o]));
        }
        const auto c = confusion(preds, truths);
        es.counts.tp += c.tp;
        es.counts.fp += c.fp;
        es.counts.tn += c.tn;
        es.counts.fn += c.fn;
        sum += f_score(c).f;
      }
      es.f = sum / static_cast<double>(kExperts - 1);
    }
    rep.mean_f += es.f;
  }
  rep.mean_f /= static_cast<double>(kExperts);
  return rep;
}

// ---------------------------------------------------------------------------
// Report files

inline std::string column_name(const ExperimentReport& r) {
  return std::string(to_string(r.variant)) + "_" + std::string(to_string(r.classifier));
}

/// Rows Fold-1..Fold-5 and Average, one F-score column per report.
inline void write_report_csv(std::ostream& out, std::span<const ExperimentReport> reports) {
  out << "row";
  for (const auto& r : reports) out << ',' << column_name(r);
  out << '\n';
  for (int f = 0; f < kFolds; ++f) {
    out << "Fold-" << (f + 1);
    for (const auto& r : reports) out << ',' << text::format_double(r.per_fold[static_cast<std::size_t>(f)].scores.f);
    out << '\n';
  }
  out << "Average";
  for (const auto& r : reports) out << ',' << text::format_double(r.mean_f);
  out << '\n';
}

inline void write_agreement_csv(std::ostream& out, const AgreementReport& rep) {
  out << "row,E1,E2,E3,E4,E5,Mean\n";
  out << "F-score";
  for (const auto& e : rep.experts) out << ',' << text::format_double(e.f);
  out << ',' << text::format_double(rep.mean_f) << '\n';
  out << "ties";
  for (const auto& e : rep.experts) out << ',' << e.ties;
  out << ",\n";
}

}  // namespace trendeq::eval
