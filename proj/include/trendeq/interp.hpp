#pragma once

#include <algorithm>
#include <vector>

#include "trendeq/grid.hpp"
#include "trendeq/timeseries.hpp"

namespace trendeq::interp {

/// Piecewise-linear interpolant of the observations at `x`, which must lie in
/// [min age, max age].
inline double interpolate(const PatientSeries& s, double x) {
  const auto& obs = s.observations;
  auto hi = std::lower_bound(obs.begin(), obs.end(), x,
                             [](const Observation& o, double v) { return o.age < v; });
  if (hi == obs.end()) return obs.back().egfr;
  if (hi->age == x || hi == obs.begin()) return hi->egfr;
  const auto lo = hi - 1;
  const double w = (x - lo->age) / (hi->age - lo->age);
  return lo->egfr + w * (hi->egfr - lo->egfr);
}

/// Linear-interpolation baseline on the same grid as the GPR in-range regime.
/// Variances are zero; nothing is extrapolated.
inline Resampled linear_resample(const PatientSeries& s) {
  Resampled r;
  r.regime = Regime::linear_in_range;
  r.grid = in_range_grid(s);
  r.values.reserve(r.grid.size());
  for (double x : r.grid) r.values.push_back(interpolate(s, x));
  r.variances.assign(r.grid.size(), 0.0);
  return r;
}

}  // namespace trendeq::interp
