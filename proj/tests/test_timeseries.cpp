#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "trendeq/timeseries.hpp"

using namespace trendeq;

namespace {

std::vector<PatientSeries> parse(const std::string& body) {
  std::istringstream in("patient_id,age_years,egfr\n" + body);
  return read_series(in);
}

LabelMap parse_labels(const std::string& body) {
  std::istringstream in("patient_id,e1,e2,e3,e4,e5\n" + body);
  return read_labels(in);
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

LabelSet labels(std::string id, std::array<TrendAnnotation, kExperts> a) { return {std::move(id), a}; }

constexpr auto S = TrendAnnotation::stable;
constexpr auto L = TrendAnnotation::linear;
constexpr auto P = TrendAnnotation::step;

}  // namespace

TEST(LoadSeries, SortsByAge) {
  const auto s = parse("p1,70,60\np1,60,80\n");
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(s[0].size(), 2u);
  EXPECT_EQ(s[0].observations[0], (Observation{60, 80}));
  EXPECT_EQ(s[0].observations[1], (Observation{70, 60}));
}

TEST(LoadSeries, DuplicateAgesMergeByMean) {
  const auto s = parse("p1,60,80\np1,60,90\n");
  ASSERT_EQ(s[0].size(), 1u);
  EXPECT_EQ(s[0].observations[0], (Observation{60, 85}));
}

TEST(LoadSeries, NegativeEgfrNamesRow) {
  const auto msg = error_of([] { parse("p1,60,-5\n"); });
  EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("egfr out of range"), std::string::npos) << msg;
}

TEST(LoadSeries, RejectsMalformedInput) {
  EXPECT_NE(error_of([] { parse("p1,60,80\np1,abc,80\n"); }).find("row 2"), std::string::npos);
  EXPECT_NE(error_of([] { parse("p1,60\n"); }).find("row 1"), std::string::npos);
  EXPECT_NE(error_of([] { parse("p1,130,80\n"); }).find("age out of range"), std::string::npos);
  EXPECT_NE(error_of([] { parse("p1,nan,80\n"); }).find("age out of range"), std::string::npos);
  EXPECT_NE(error_of([] { parse("p1,60,inf\n"); }).find("egfr out of range"), std::string::npos);
  EXPECT_NE(error_of([] { std::istringstream in(""); read_series(in); }).find("empty file"), std::string::npos);
  EXPECT_NE(error_of([] { parse(""); }).find("no data rows"), std::string::npos);
}

TEST(LoadSeries, SkipsCommentsAndKeepsFirstAppearanceOrder) {
  std::istringstream in("# config_hash=1\npatient_id,age_years,egfr\nb,61,50\na,60,40\nb,62,55\n");
  const auto s = read_series(in);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].id, "b");
  EXPECT_EQ(s[1].id, "a");
  EXPECT_EQ(s[0].size(), 2u);
}

TEST(LoadSeries, RoundTripIsIdentical) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> age(20, 100), g(5, 130);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PatientSeries> series;
    for (int p = 0; p < 4; ++p) {
      std::vector<Observation> obs;
      const int n = 1 + static_cast<int>(rng() % 12);
      for (int i = 0; i < n; ++i) obs.push_back({age(rng), g(rng)});
      if (n > 2) obs.push_back({obs[0].age, g(rng)});  // a duplicate age
      series.push_back(make_series("id" + std::to_string(p), obs));
    }
    std::ostringstream out;
    write_series(out, series);
    std::istringstream in(out.str());
    const auto back = read_series(in);
    ASSERT_EQ(back, series);

    for (const auto& s : back) {
      for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s.observations[i - 1].age, s.observations[i].age);
      for (const auto& o : s.observations) EXPECT_TRUE(validate(o).empty());
    }
  }
}

TEST(LoadSeries, MergeIsOrderIndependent) {
  const auto a = make_series("x", {{60, 80}, {60, 90}, {61, 70}, {60, 71}});
  const auto b = make_series("x", {{61, 70}, {60, 71}, {60, 90}, {60, 80}});
  EXPECT_EQ(a, b);
}

TEST(LoadLabels, ParsesFiveExperts) {
  const auto m = parse_labels("p1,stable,stable,linear,stable,stable\n");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.at("p1").annotations[2], TrendAnnotation::linear);
  EXPECT_EQ(m.at("p1").annotations[0], TrendAnnotation::stable);
}

TEST(LoadLabels, AcceptsAnyCase) {
  const auto m = parse_labels("p1,STABLE,Step,linear,stable,StAbLe\n");
  EXPECT_EQ(m.at("p1").annotations[1], TrendAnnotation::step);
  std::ostringstream out;
  write_labels(out, m);
  EXPECT_EQ(out.str(), "patient_id,e1,e2,e3,e4,e5\np1,stable,step,linear,stable,stable\n");
}

TEST(LoadLabels, Errors) {
  EXPECT_NE(error_of([] { parse_labels("p1,stable,stable\n"); }).find("expected 5 expert columns"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_labels("p1,stable,stable,flat,stable,stable\n"); }).find("unknown annotation token"),
            std::string::npos);
  const auto dup = error_of([] {
    parse_labels("p1,stable,stable,stable,stable,stable\np1,step,step,step,step,step\n");
  });
  EXPECT_NE(dup.find("duplicate id"), std::string::npos);
  EXPECT_NE(dup.find("row 2"), std::string::npos);
}

TEST(Binarize, CollapsesUnstableKinds) {
  EXPECT_EQ(binarize(S), BinaryLabel::stable);
  EXPECT_EQ(to_int(binarize(S)), 1);
  EXPECT_EQ(binarize(L), BinaryLabel::unstable);
  EXPECT_EQ(binarize(P), BinaryLabel::unstable);
  EXPECT_EQ(to_int(binarize(P)), 0);
}

TEST(Consensus, Majority) {
  EXPECT_EQ(consensus(labels("a", {S, S, S, S, S})), BinaryLabel::stable);
  EXPECT_EQ(consensus(labels("a", {L, P, S, S, L})), BinaryLabel::unstable);
  EXPECT_EQ(consensus(labels("a", {S, S, S, L, P})), BinaryLabel::stable);
}

TEST(Consensus, PermutationInvariantAndBinaryOnly) {
  const std::array<TrendAnnotation, 3> kinds{S, L, P};
  for (int code = 0; code < 243; ++code) {
    std::array<TrendAnnotation, kExperts> a{};
    int c = code;
    for (auto& x : a) x = kinds[static_cast<std::size_t>(c % 3)], c /= 3;
    const auto ref = consensus(labels("a", a));

    auto perm = a;
    std::sort(perm.begin(), perm.end());
    do {
      ASSERT_EQ(consensus(labels("a", perm)), ref);
    } while (std::next_permutation(perm.begin(), perm.end()));

    // Replacing every vote by its binarized representative changes nothing.
    auto bin = a;
    for (auto& x : bin) x = binarize(x) == BinaryLabel::stable ? S : L;
    EXPECT_EQ(consensus(labels("a", bin)), ref);
  }
}
