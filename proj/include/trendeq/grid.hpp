#pragma once

// Fixed-size resampled trends and their plot-data CSV form.

#include <cmath>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "trendeq/text.hpp"
#include "trendeq/timeseries.hpp"

namespace trendeq {

inline constexpr std::size_t kGridSize = 50;
inline constexpr double kFixedRangeStart = 30.0;
inline constexpr double kFixedRangeEnd = 90.0;

enum class Regime { fixed_30_90, in_range, linear_in_range };

inline std::string_view to_string(Regime r) noexcept {
  switch (r) {
    case Regime::fixed_30_90: return "fixed_30_90";
    case Regime::in_range: return "in_range";
    case Regime::linear_in_range: return "linear_in_range";
  }
  return "in_range";
}

struct Resampled {
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> variances;
  Regime regime = Regime::in_range;
};

/// `n` evenly spaced points over the closed interval [lo, hi]; the last point
/// is exactly `hi`.
inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n = kGridSize) {
  if (n < 2 || !(hi > lo)) throw std::invalid_argument("uniform_grid: need n >= 2 and hi > lo");
  std::vector<double> g(n);
  const double span = hi - lo;
  const double last = static_cast<double>(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) g[i] = lo + span * (static_cast<double>(i) / last);
  g[n - 1] = hi;
  return g;
}

/// Grid over the series' own observed age span. Throws DegenerateRange for a
/// single-age series.
inline std::vector<double> in_range_grid(const PatientSeries& s) {
  if (s.size() < 2) throw DegenerateRange();
  return uniform_grid(s.min_age(), s.max_age());
}

/// Plot data: `age,mean,lower95,upper95` rows for the grid, followed by the
/// raw observations under `obs_age,obs_egfr`.
inline void write_plot_data(std::ostream& out, const Resampled& r, const PatientSeries& s) {
  out << "age,mean,lower95,upper95\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    const double half = 1.96 * std::sqrt(r.variances[i]);
    out << text::format_double(r.grid[i]) << ',' << text::format_double(r.values[i]) << ','
        << text::format_double(r.values[i] - half) << ',' << text::format_double(r.values[i] + half)
        << '\n';
  }
  out << "obs_age,obs_egfr\n";
  for (const auto& o : s.observations)
    out << text::format_double(o.age) << ',' << text::format_double(o.egfr) << '\n';
}

}  // namespace trendeq
