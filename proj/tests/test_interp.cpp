#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "trendeq/gpr.hpp"
#include "trendeq/interp.hpp"

using namespace trendeq;

namespace {

PatientSeries series_from(const std::vector<double>& xs, const std::vector<double>& ys) {
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < xs.size(); ++i) obs.push_back({xs[i], ys[i]});
  return make_series("p", obs);
}

}  // namespace

TEST(Interpolate, StraightSegment) {
  const auto s = series_from({60, 70}, {80, 60});
  EXPECT_EQ(interp::interpolate(s, 60), 80.0);
  EXPECT_EQ(interp::interpolate(s, 65), 70.0);
  EXPECT_EQ(interp::interpolate(s, 70), 60.0);
}

TEST(Interpolate, MidpointOfFirstSegment) {
  const auto s = series_from({60, 65, 70}, {80, 90, 60});
  EXPECT_DOUBLE_EQ(interp::interpolate(s, 62.5), 85.0);
}

TEST(LinearResample, PassesThroughKnots) {
  const auto s = series_from({60, 65, 70}, {80, 90, 60});
  const auto r = interp::linear_resample(s);
  ASSERT_EQ(r.values.size(), 50u);
  EXPECT_EQ(r.grid.front(), 60.0);
  EXPECT_EQ(r.grid.back(), 70.0);
  EXPECT_EQ(r.values.front(), 80.0);
  EXPECT_EQ(r.values.back(), 60.0);
  EXPECT_EQ(r.regime, Regime::linear_in_range);
  for (double v : r.variances) EXPECT_EQ(v, 0.0);
}

TEST(LinearResample, DegenerateRange) {
  try {
    interp::linear_resample(series_from({60}, {70}));
    FAIL();
  } catch (const DegenerateRange& e) {
    EXPECT_STREQ(e.what(), "degenerate range");
  }
}

TEST(LinearResample, StaysWithinBracketingObservations) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> g(10, 120);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 20;
    const auto xs = oracle::random_ages(rng, n, 40, 90);
    std::vector<double> ys(n);
    for (auto& y : ys) y = g(rng);
    const auto s = series_from(xs, ys);
    const auto r = interp::linear_resample(s);
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
      const double x = r.grid[i];
      std::size_t k = 0;
      while (k + 1 < n - 1 && xs[k + 1] <= x) ++k;
      const double lo = std::min(ys[k], ys[k + 1]), hi = std::max(ys[k], ys[k + 1]);
      EXPECT_GE(r.values[i], lo - 1e-12);
      EXPECT_LE(r.values[i], hi + 1e-12);
    }
  }
}

TEST(LinearResample, ReproducesAffineSeries) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> coef(-5, 5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 10;
    const auto xs = oracle::random_ages(rng, n, 40, 90);
    const double a = 60 + coef(rng), b = coef(rng);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(200.0 + a + b * (x - 60));
    const auto r = interp::linear_resample(series_from(xs, ys));
    for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(r.values[i], 200.0 + a + b * (r.grid[i] - 60), 1e-12 * 300);
  }
}

TEST(LinearResample, SameGridAsGprInRange) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto xs = oracle::random_ages(rng, 2 + rng() % 10, 40, 90);
    std::vector<double> ys(xs.size(), 50.0);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += static_cast<double>(i);
    const auto s = series_from(xs, ys);
    const auto lin = interp::linear_resample(s);
    const auto gp = gpr::resample_in_range(gpr::fit(s, gpr::FitConfig{}), s);
    EXPECT_EQ(lin.grid, gp.grid);
  }
}
