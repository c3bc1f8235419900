#pragma once

// Synthetic eGFR cohorts with stable, linear-decline and step-change trends
// and five simulated expert annotators. Every distribution below is a
// calibration knob; the defaults approximate a 488-patient clinical cohort
// (~22 measurements per patient, mostly aged 60-90, eGFR mostly 25-95).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trendeq/error.hpp"
#include "trendeq/rng.hpp"
#include "trendeq/timeseries.hpp"

namespace trendeq::synth {

struct CohortConfig {
  int n_patients = 488;
  double stable_fraction = 0.533;

  double mean_measurements = 10873.0 / 488.0;  ///< min_measurements + geometric excess
  int min_measurements = 2;

  double start_age_mean = 65.0;
  double start_age_sd = 8.0;
  double start_age_min = 30.0;
  double start_age_max = 88.0;
  double unstable_start_age_shift = 10.0;  ///< added to the start-age mean of unstable patients
  double span_mean = 4.0;  ///< exponential, years
  double span_min = 1.0;
  double span_max = 20.0;

  double level_min = 35.0;
  double level_max = 95.0;
  double level_age_slope = -0.3;  ///< level shift per year of start age above start_age_mean
  double unstable_level_shift = 10.0;  ///< added to the starting level of unstable patients
  double noise_sd = 8.0;

  double linear_fraction = 0.3;  ///< share of unstable patients with a linear decline
  double slope_min = -10.0;       ///< eGFR per year
  double slope_max = -4.0;
  std::optional<double> linear_drop;  ///< when set, linear patients decline by exactly this much
  double step_min = 20.0;
  double step_max = 40.0;
  double step_margin = 0.1;  ///< changepoint avoids this fraction at each end of the window

  double egfr_min = 5.0;
  double egfr_max = 130.0;

  /// Probability that an expert flips the stable/unstable call (E1 is the
  /// weaker annotator).
  std::array<double, kExperts> flip_probability{0.08, 0.02, 0.02, 0.02, 0.02};

  std::uint64_t seed = 0;

  void validate() const {
    auto frac = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (n_patients < 10) throw ConfigError("cohort: n_patients must be >= 10");
    if (!frac(stable_fraction) || !frac(linear_fraction) || !frac(step_margin) || step_margin >= 0.5)
      throw ConfigError("cohort: fractions must lie in [0, 1]");
    for (double p : flip_probability)
      if (!frac(p)) throw ConfigError("cohort: flip probabilities must lie in [0, 1]");
    if (min_measurements < 1 || mean_measurements < min_measurements)
      throw ConfigError("cohort: need 1 <= min_measurements <= mean_measurements");
    if (!(start_age_min < start_age_max) || !(span_min <= span_max) || span_min <= 0.0 || span_mean <= 0.0)
      throw ConfigError("cohort: invalid age window parameters");
    if (start_age_min <= 0.0 || start_age_max + span_max >= 120.0)
      throw ConfigError("cohort: ages must stay inside (0, 120)");
    if (level_min > level_max || slope_min > slope_max || step_min > step_max || noise_sd < 0.0)
      throw ConfigError("cohort: invalid trend parameters");
    if (!(egfr_min > 0.0) || egfr_min > egfr_max) throw ConfigError("cohort: invalid eGFR clamp");
  }
};

/// Noise-free cohort with a clean class boundary: stable patients flat at 80,
/// unstable patients declining by exactly 30 over their window.
inline CohortConfig separable_config(std::uint64_t seed = 0) {
  CohortConfig c;
  c.level_min = c.level_max = 80.0;
  c.level_age_slope = 0.0;
  c.unstable_level_shift = 0.0;
  c.unstable_start_age_shift = 0.0;
  c.noise_sd = 0.0;
  c.linear_fraction = 1.0;
  c.linear_drop = 30.0;
  c.flip_probability.fill(0.0);
  c.seed = seed;
  return c;
}

struct Cohort {
  std::vector<PatientSeries> series;
  LabelMap labels;
  std::vector<TrendAnnotation> truth;  ///< latent trend per series
};

inline std::string patient_id(int index, int n) {
  const auto width = std::max<std::size_t>(4, std::to_string(n).size());
  auto digits = std::to_string(index + 1);
  return "P" + std::string(width - digits.size(), '0') + digits;
}

namespace detail {

inline PatientSeries generate_patient(const CohortConfig& c, TrendAnnotation trend, std::string id,
                                      Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double shift = trend == TrendAnnotation::stable ? 0.0 : c.unstable_start_age_shift;
  const double start = std::clamp(c.start_age_mean + shift + c.start_age_sd * normal(rng),
                                  c.start_age_min, c.start_age_max);
  const double span = std::clamp(std::exponential_distribution<double>(1.0 / c.span_mean)(rng),
                                 c.span_min, c.span_max);
  const double excess_mean = c.mean_measurements - c.min_measurements;
  const int count = c.min_measurements +
                    (excess_mean > 0.0 ? std::geometric_distribution<int>(1.0 / (1.0 + excess_mean))(rng) : 0);

  std::vector<double> ages(static_cast<std::size_t>(count));
  for (auto& a : ages) a = uniform(start, start + span);
  std::sort(ages.begin(), ages.end());

  const double level = uniform(c.level_min, c.level_max) + c.level_age_slope * (start - c.start_age_mean) +
                       (trend == TrendAnnotation::stable ? 0.0 : c.unstable_level_shift);
  double slope = 0.0, drop = 0.0, changepoint = start + span;
  if (trend == TrendAnnotation::linear) {
    slope = c.linear_drop ? -*c.linear_drop / span : uniform(c.slope_min, c.slope_max);
  } else if (trend == TrendAnnotation::step) {
    drop = uniform(c.step_min, c.step_max);
    changepoint = start + span * uniform(c.step_margin, 1.0 - c.step_margin);
  }

  std::vector<Observation> obs;
  obs.reserve(ages.size());
  for (double a : ages) {
    double g = level + slope * (a - start) - (a >= changepoint ? drop : 0.0);
    if (c.noise_sd > 0.0) g += c.noise_sd * normal(rng);
    obs.push_back({a, std::clamp(g, c.egfr_min, c.egfr_max)});
  }
  return make_series(std::move(id), std::move(obs));
}

inline LabelSet annotate(const CohortConfig& c, TrendAnnotation trend, std::string id, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabelSet ls{std::move(id), {}};
  for (std::size_t e = 0; e < kExperts; ++e) {
    TrendAnnotation a = trend;
    if (unit(rng) < c.flip_probability[e]) {
      if (trend == TrendAnnotation::stable)
        a = unit(rng) < 0.5 ? TrendAnnotation::linear : TrendAnnotation::step;
      else
        a = TrendAnnotation::stable;
    }
    ls.annotations[e] = a;
  }
  return ls;
}

}  // namespace detail

/// Pure function of the config: the same seed yields a bit-identical cohort.
/// Exactly round(n * stable_fraction) patients have a stable latent trend.
inline Cohort generate_cohort(const CohortConfig& c) {
  c.validate();
  const auto n = static_cast<std::size_t>(c.n_patients);
  const auto n_stable = static_cast<std::size_t>(std::llround(c.n_patients * c.stable_fraction));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng class_rng(substream(c.seed, "classes"));
  std::shuffle(order.begin(), order.end(), class_rng);
  std::vector<TrendAnnotation> truth(n, TrendAnnotation::linear);
  for (std::size_t i = 0; i < n_stable; ++i) truth[order[i]] = TrendAnnotation::stable;

  Cohort out;
  out.series.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(substream(c.seed, static_cast<std::uint64_t>(i)));
    if (truth[i] != TrendAnnotation::stable) {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      truth[i] = unit(rng) < c.linear_fraction ? TrendAnnotation::linear : TrendAnnotation::step;
    }
    auto id = patient_id(static_cast<int>(i), c.n_patients);
    out.series.push_back(detail::generate_patient(c, truth[i], id, rng));
    out.labels.emplace(id, detail::annotate(c, truth[i], id, rng));
  }
  out.truth = std::move(truth);
  return out;
}

}  // namespace trendeq::synth
