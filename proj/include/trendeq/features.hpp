#pragma once

// Derived statistics and the six featurization variants.
//
// Layouts (fixed):
//   stats4              [delta_a, delta_g, mu_a, mu_g]
//   gpr_30_90           50 posterior means on the 30..90 grid
//   gpr_in_range        50 posterior means on the observed-range grid
//   stats_plus_gpr      stats4 followed by gpr_in_range
//   interp              50 linearly interpolated values
//   stats_plus_interp   stats4 followed by interp
//
// Posterior variances never enter a feature vector.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trendeq/error.hpp"
#include "trendeq/grid.hpp"
#include "trendeq/text.hpp"
#include "trendeq/timeseries.hpp"

namespace trendeq {

struct DerivedStats {
  double delta_a = 0.0;  ///< observed age span, years
  double delta_g = 0.0;  ///< eGFR range
  double mu_a = 0.0;     ///< mean measurement age
  double mu_g = 0.0;     ///< mean eGFR
};

inline DerivedStats derive_stats(const PatientSeries& s) {
  double lo = s.observations.front().egfr, hi = lo, sa = 0.0, sg = 0.0;
  for (const auto& o : s.observations) {
    lo = std::min(lo, o.egfr);
    hi = std::max(hi, o.egfr);
    sa += o.age;
    sg += o.egfr;
  }
  const auto n = static_cast<double>(s.size());
  return {s.max_age() - s.min_age(), hi - lo, sa / n, sg / n};
}

enum class Variant { stats4, gpr_30_90, gpr_in_range, stats_plus_gpr, interp, stats_plus_interp };

/// Column order of the experiment report.
inline constexpr std::array<Variant, 6> kAllVariants{Variant::gpr_30_90,    Variant::stats4,
                                                     Variant::gpr_in_range, Variant::stats_plus_gpr,
                                                     Variant::interp,       Variant::stats_plus_interp};

inline std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::stats4: return "stats4";
    case Variant::gpr_30_90: return "gpr_30_90";
    case Variant::gpr_in_range: return "gpr_in_range";
    case Variant::stats_plus_gpr: return "stats_plus_gpr";
    case Variant::interp: return "interp";
    case Variant::stats_plus_interp: return "stats_plus_interp";
  }
  return "stats4";
}

/// Accepts canonical tags and the CLI spellings (`gpr-fixed`, `stats`,
/// `stats-gpr`, ...); '-' and '_' are interchangeable.
inline std::optional<Variant> parse_variant(std::string_view name) {
  std::string s = text::lower(text::trim(name));
  std::replace(s.begin(), s.end(), '-', '_');
  for (auto v : kAllVariants)
    if (s == to_string(v)) return v;
  if (s == "stats") return Variant::stats4;
  if (s == "gpr_fixed") return Variant::gpr_30_90;
  if (s == "gpr") return Variant::gpr_in_range;
  if (s == "stats_gpr") return Variant::stats_plus_gpr;
  if (s == "linear") return Variant::interp;
  if (s == "stats_interp") return Variant::stats_plus_interp;
  return std::nullopt;
}

inline constexpr bool uses_stats(Variant v) noexcept {
  return v == Variant::stats4 || v == Variant::stats_plus_gpr || v == Variant::stats_plus_interp;
}

/// Regime of the resampled input a variant needs, if any.
inline constexpr std::optional<Regime> required_regime(Variant v) noexcept {
  switch (v) {
    case Variant::stats4: return std::nullopt;
    case Variant::gpr_30_90: return Regime::fixed_30_90;
    case Variant::gpr_in_range:
    case Variant::stats_plus_gpr: return Regime::in_range;
    case Variant::interp:
    case Variant::stats_plus_interp: return Regime::linear_in_range;
  }
  return std::nullopt;
}

inline constexpr std::size_t feature_length(Variant v) noexcept {
  return (uses_stats(v) ? 4 : 0) + (required_regime(v) ? kGridSize : 0);
}

struct FeatureVector {
  std::string id;
  Variant variant = Variant::stats4;
  std::vector<double> values;
};

inline FeatureVector assemble(std::string id, Variant variant, const DerivedStats* stats,
                              const Resampled* resampled) {
  FeatureVector fv{std::move(id), variant, {}};
  fv.values.reserve(feature_length(variant));
  if (uses_stats(variant)) {
    if (stats == nullptr) throw Error("assemble: " + std::string(to_string(variant)) + " needs derived statistics");
    fv.values.insert(fv.values.end(), {stats->delta_a, stats->delta_g, stats->mu_a, stats->mu_g});
  }
  if (const auto regime = required_regime(variant)) {
    if (resampled == nullptr)
      throw Error("assemble: " + std::string(to_string(variant)) + " needs a resampled trend");
    if (resampled->regime != *regime)
      throw Error("assemble: regime mismatch, " + std::string(to_string(variant)) + " needs " +
                  std::string(to_string(*regime)) + " but got " +
                  std::string(to_string(resampled->regime)));
    if (resampled->values.size() != kGridSize) throw Error("assemble: resampled trend must have 50 values");
    fv.values.insert(fv.values.end(), resampled->values.begin(), resampled->values.end());
  }
  for (double v : fv.values)
    if (!std::isfinite(v)) throw Error("assemble: non-finite feature for '" + fv.id + "'");
  return fv;
}

inline FeatureVector assemble(std::string id, Variant variant, const std::optional<DerivedStats>& stats,
                              const std::optional<Resampled>& resampled) {
  return assemble(std::move(id), variant, stats ? &*stats : nullptr, resampled ? &*resampled : nullptr);
}

/// `patient_id,variant,f0,f1,...`; all rows must share one variant.
inline void write_feature_matrix(std::ostream& out, std::span<const FeatureVector> rows) {
  const std::size_t width = rows.empty() ? 0 : rows.front().values.size();
  out << "patient_id,variant";
  for (std::size_t i = 0; i < width; ++i) out << ",f" << i;
  out << '\n';
  for (const auto& r : rows) {
    out << r.id << ',' << to_string(r.variant);
    for (double v : r.values) out << ',' << text::format_double(v);
    out << '\n';
  }
}

/// Pearson correlation; 0 when either side has no variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

}  // namespace trendeq
