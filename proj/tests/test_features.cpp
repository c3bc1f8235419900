#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "trendeq/features.hpp"
#include "trendeq/gpr.hpp"
#include "trendeq/interp.hpp"

using namespace trendeq;

namespace {

PatientSeries series_from(const std::vector<double>& xs, const std::vector<double>& ys, std::string id = "p") {
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < xs.size(); ++i) obs.push_back({xs[i], ys[i]});
  return make_series(std::move(id), obs);
}

Resampled fake(Regime regime, double base = 0.0) {
  Resampled r;
  r.regime = regime;
  r.grid = uniform_grid(60, 70);
  for (std::size_t i = 0; i < kGridSize; ++i) {
    r.values.push_back(base + static_cast<double>(i));
    r.variances.push_back(1000.0 + static_cast<double>(i));
  }
  return r;
}

}  // namespace

TEST(DeriveStats, TwoPoints) {
  const auto d = derive_stats(series_from({60, 70}, {80, 60}));
  EXPECT_EQ(d.delta_a, 10.0);
  EXPECT_EQ(d.delta_g, 20.0);
  EXPECT_EQ(d.mu_a, 65.0);
  EXPECT_EQ(d.mu_g, 70.0);
}

TEST(DeriveStats, SingleObservation) {
  const auto d = derive_stats(series_from({62}, {75}));
  EXPECT_EQ(d.delta_a, 0.0);
  EXPECT_EQ(d.delta_g, 0.0);
  EXPECT_EQ(d.mu_a, 62.0);
  EXPECT_EQ(d.mu_g, 75.0);
}

TEST(DeriveStats, MatchesRecomputation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> g(10, 120);
  for (int t = 0; t < 200; ++t) {
    const auto xs = oracle::random_ages(rng, 7, 30, 95);
    std::vector<double> ys(7);
    for (auto& y : ys) y = g(rng);
    const auto d = derive_stats(series_from(xs, ys));
    double sa = 0, sg = 0, glo = ys[0], ghi = ys[0];
    for (int i = 0; i < 7; ++i) {
      sa += xs[static_cast<std::size_t>(i)];
      sg += ys[static_cast<std::size_t>(i)];
      glo = std::min(glo, ys[static_cast<std::size_t>(i)]);
      ghi = std::max(ghi, ys[static_cast<std::size_t>(i)]);
    }
    EXPECT_EQ(d.delta_a, xs.back() - xs.front());
    EXPECT_EQ(d.delta_g, ghi - glo);
    EXPECT_EQ(d.mu_a, sa / 7);
    EXPECT_EQ(d.mu_g, sg / 7);
    EXPECT_GE(d.mu_a, xs.front());
    EXPECT_LE(d.mu_a, xs.back());
    EXPECT_GE(d.mu_g, glo);
    EXPECT_LE(d.mu_g, ghi);
  }
}

TEST(Assemble, StatsOnly) {
  const DerivedStats d = derive_stats(series_from({60, 70}, {80, 60}));
  const auto fv = assemble("p", Variant::stats4, &d, nullptr);
  EXPECT_EQ(fv.values, (std::vector<double>{10, 20, 65, 70}));
}

TEST(Assemble, StatsFirstThenValues) {
  const DerivedStats d{1, 2, 3, 4};
  const auto r = fake(Regime::in_range, 100);
  const auto fv = assemble("p", Variant::stats_plus_gpr, &d, &r);
  ASSERT_EQ(fv.values.size(), 54u);
  EXPECT_EQ(fv.values[0], 1);
  EXPECT_EQ(fv.values[3], 4);
  EXPECT_EQ(fv.values[4], 100);
  EXPECT_EQ(fv.values[53], 149);

  const auto only = assemble("p", Variant::gpr_in_range, nullptr, &r);
  EXPECT_EQ(only.values, r.values);
}

TEST(Assemble, LengthsAndNoVariances) {
  const DerivedStats d{1, 2, 3, 4};
  for (auto v : kAllVariants) {
    std::optional<Resampled> r;
    if (auto reg = required_regime(v)) r = fake(*reg);
    const auto fv = assemble("p", v, std::optional<DerivedStats>(d), r);
    EXPECT_EQ(fv.values.size(), feature_length(v));
    for (double x : fv.values) EXPECT_LT(x, 1000.0) << "variance leaked into " << to_string(v);
    const auto again = assemble("p", v, std::optional<DerivedStats>(d), r);
    EXPECT_EQ(again.values, fv.values);
  }
  EXPECT_EQ(feature_length(Variant::stats4), 4u);
  EXPECT_EQ(feature_length(Variant::gpr_30_90), 50u);
  EXPECT_EQ(feature_length(Variant::gpr_in_range), 50u);
  EXPECT_EQ(feature_length(Variant::stats_plus_gpr), 54u);
  EXPECT_EQ(feature_length(Variant::interp), 50u);
  EXPECT_EQ(feature_length(Variant::stats_plus_interp), 54u);
}

TEST(Assemble, Errors) {
  const DerivedStats d{1, 2, 3, 4};
  const auto lin = fake(Regime::linear_in_range);
  EXPECT_THROW(assemble("p", Variant::stats4, nullptr, nullptr), Error);
  EXPECT_THROW(assemble("p", Variant::gpr_in_range, &d, nullptr), Error);
  EXPECT_THROW(assemble("p", Variant::stats_plus_gpr, nullptr, &lin), Error);
  try {
    assemble("p", Variant::gpr_in_range, nullptr, &lin);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("regime mismatch"), std::string::npos);
  }
  auto bad = fake(Regime::in_range);
  bad.values[3] = std::nan("");
  EXPECT_THROW(assemble("p", Variant::gpr_in_range, nullptr, &bad), Error);
}

TEST(Variant, ParsesNamesAndAliases) {
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(parse_variant("gpr-in-range"), Variant::gpr_in_range);
  EXPECT_EQ(parse_variant("gpr-fixed"), Variant::gpr_30_90);
  EXPECT_EQ(parse_variant("stats"), Variant::stats4);
  EXPECT_EQ(parse_variant("stats-gpr"), Variant::stats_plus_gpr);
  EXPECT_EQ(parse_variant("linear"), Variant::interp);
  EXPECT_EQ(parse_variant("STATS_PLUS_INTERP"), Variant::stats_plus_interp);
  EXPECT_FALSE(parse_variant("spline"));
}

TEST(FeatureMatrix, CsvLayout) {
  const auto s = series_from({60, 65, 70}, {80, 90, 60}, "a");
  const auto r = interp::linear_resample(s);
  const std::vector<FeatureVector> rows{assemble("a", Variant::interp, nullptr, &r)};
  std::ostringstream out;
  write_feature_matrix(out, rows);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(header.rfind("patient_id,variant,f0,f1,", 0), 0u);
  EXPECT_NE(header.find(",f49"), std::string::npos);
  EXPECT_EQ(header.find(",f50"), std::string::npos);
  EXPECT_EQ(line.rfind("a,interp,80,", 0), 0u);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 51);
}

TEST(Pearson, Basics) {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1}, k{5, 5, 5, 5};
  EXPECT_NEAR(pearson(a, b), 1.0, 1e-15);
  EXPECT_NEAR(pearson(a, c), -1.0, 1e-15);
  EXPECT_EQ(pearson(a, k), 0.0);
}
