#pragma once

// Per-patient irregular eGFR series, expert trend annotations, and the
// CSV formats they are exchanged in.
//
// Series CSV:  patient_id,age_years,egfr
// Labels CSV:  patient_id,e1,e2,e3,e4,e5   (tokens stable|linear|step)
//
// Readers skip blank lines and lines starting with '#', so writers can
// prefix provenance comments without breaking the format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trendeq/error.hpp"
#include "trendeq/text.hpp"

namespace trendeq {

struct Observation {
  double age = 0.0;   ///< years
  double egfr = 0.0;  ///< mL/min/1.73m^2

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Returns an empty string when the observation is valid, else the reason.
inline std::string_view validate(const Observation& o) {
  if (!std::isfinite(o.age) || o.age <= 0.0 || o.age >= 120.0) return "age out of range";
  if (!std::isfinite(o.egfr) || o.egfr <= 0.0) return "egfr out of range";
  return {};
}

/// One patient's observations, sorted by strictly increasing age.
struct PatientSeries {
  std::string id;
  std::vector<Observation> observations;

  std::size_t size() const noexcept { return observations.size(); }

  std::vector<double> ages() const {
    std::vector<double> out;
    out.reserve(observations.size());
    for (const auto& o : observations) out.push_back(o.age);
    return out;
  }

  std::vector<double> values() const {
    std::vector<double> out;
    out.reserve(observations.size());
    for (const auto& o : observations) out.push_back(o.egfr);
    return out;
  }

  double min_age() const { return observations.front().age; }
  double max_age() const { return observations.back().age; }

  friend bool operator==(const PatientSeries&, const PatientSeries&) = default;
};

/// Sorts by age and merges duplicate ages by the mean eGFR.
/// Throws Error on an empty list or an invalid observation.
inline PatientSeries make_series(std::string id, std::vector<Observation> obs) {
  if (obs.empty()) throw Error("series '" + id + "' has no observations");
  for (const auto& o : obs) {
    if (auto why = validate(o); !why.empty()) throw Error("series '" + id + "': " + std::string(why));
  }
  // Sorting ties by egfr makes the merged mean independent of input order.
  std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
    return a.age < b.age || (a.age == b.age && a.egfr < b.egfr);
  });
  PatientSeries s{std::move(id), {}};
  for (std::size_t i = 0; i < obs.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < obs.size() && obs[j].age == obs[i].age) sum += obs[j++].egfr;
    s.observations.push_back({obs[i].age, sum / static_cast<double>(j - i)});
    i = j;
  }
  return s;
}

inline std::vector<PatientSeries> read_series(std::istream& in) {
  std::string line;
  bool have_header = false;
  std::size_t row = 0;
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Observation>> rows;

  while (std::getline(in, line)) {
    if (text::is_ignorable(line)) continue;
    if (!have_header) {
      const auto cols = text::split(line);
      if (cols.size() != 3 || cols[0] != "patient_id" || cols[1] != "age_years" || cols[2] != "egfr")
        throw ParseError(0, "expected header 'patient_id,age_years,egfr'");
      have_header = true;
      continue;
    }
    ++row;
    const auto cols = text::split(line);
    if (cols.size() != 3) throw ParseError(row, "expected 3 columns");
    if (cols[0].empty()) throw ParseError(row, "empty patient_id");
    const auto age = text::parse_double(cols[1]);
    const auto egfr = text::parse_double(cols[2]);
    if (!age) throw ParseError(row, "malformed age_years");
    if (!egfr) throw ParseError(row, "malformed egfr");
    const Observation o{*age, *egfr};
    if (auto why = validate(o); !why.empty()) throw ParseError(row, std::string(why));

    std::string id(cols[0]);
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(o);
  }
  if (!have_header) throw ParseError(0, "empty file");
  if (row == 0) throw ParseError(0, "no data rows");

  std::vector<PatientSeries> out;
  out.reserve(order.size());
  for (auto& id : order) out.push_back(make_series(id, std::move(rows[id])));
  return out;
}

/// One series per distinct id, in order of first appearance in the file.
inline std::vector<PatientSeries> load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open series file '" + path + "'");
  return read_series(in);
}

inline void write_series(std::ostream& out, std::span<const PatientSeries> series) {
  out << "patient_id,age_years,egfr\n";
  for (const auto& s : series)
    for (const auto& o : s.observations)
      out << s.id << ',' << text::format_double(o.age) << ',' << text::format_double(o.egfr) << '\n';
}

// ---------------------------------------------------------------------------
// Labels

enum class TrendAnnotation { stable, linear, step };

/// Positive class is stable (y = 1).
enum class BinaryLabel { unstable = 0, stable = 1 };

inline constexpr int to_int(BinaryLabel b) noexcept { return b == BinaryLabel::stable ? 1 : 0; }

inline std::string_view to_string(TrendAnnotation a) noexcept {
  switch (a) {
    case TrendAnnotation::stable: return "stable";
    case TrendAnnotation::linear: return "linear";
    case TrendAnnotation::step: return "step";
  }
  return "stable";
}

inline std::string_view to_string(BinaryLabel b) noexcept {
  return b == BinaryLabel::stable ? "stable" : "unstable";
}

inline std::optional<TrendAnnotation> parse_annotation(std::string_view token) {
  const auto t = text::lower(text::trim(token));
  if (t == "stable") return TrendAnnotation::stable;
  if (t == "linear") return TrendAnnotation::linear;
  if (t == "step") return TrendAnnotation::step;
  return std::nullopt;
}

inline constexpr std::size_t kExperts = 5;

struct LabelSet {
  std::string id;
  std::array<TrendAnnotation, kExperts> annotations{};  ///< E1..E5

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

using LabelMap = std::map<std::string, LabelSet>;

inline constexpr BinaryLabel binarize(TrendAnnotation a) noexcept {
  return a == TrendAnnotation::stable ? BinaryLabel::stable : BinaryLabel::unstable;
}

/// Majority of the five binarized votes; five voters cannot tie.
inline BinaryLabel consensus(const LabelSet& ls) noexcept {
  int stable = 0;
  for (auto a : ls.annotations) stable += to_int(binarize(a));
  return 2 * stable > static_cast<int>(kExperts) ? BinaryLabel::stable : BinaryLabel::unstable;
}

inline LabelMap read_labels(std::istream& in) {
  std::string line;
  bool have_header = false;
  std::size_t row = 0;
  LabelMap out;
  while (std::getline(in, line)) {
    if (text::is_ignorable(line)) continue;
    const auto cols = text::split(line);
    if (!have_header) {
      const std::array<std::string_view, 6> expected{"patient_id", "e1", "e2", "e3", "e4", "e5"};
      if (cols.size() != expected.size() || !std::equal(cols.begin(), cols.end(), expected.begin()))
        throw ParseError(0, "expected header 'patient_id,e1,e2,e3,e4,e5'");
      have_header = true;
      continue;
    }
    ++row;
    if (cols.size() != kExperts + 1) throw ParseError(row, "expected 5 expert columns");
    LabelSet ls{std::string(cols[0]), {}};
    if (ls.id.empty()) throw ParseError(row, "empty patient_id");
    for (std::size_t e = 0; e < kExperts; ++e) {
      const auto a = parse_annotation(cols[e + 1]);
      if (!a) throw ParseError(row, "unknown annotation token '" + std::string(cols[e + 1]) + "'");
      ls.annotations[e] = *a;
    }
    if (out.contains(ls.id)) throw ParseError(row, "duplicate id '" + ls.id + "'");
    auto id = ls.id;
    out.emplace(std::move(id), std::move(ls));
  }
  if (!have_header) throw ParseError(0, "empty file");
  return out;
}

inline LabelMap load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open labels file '" + path + "'");
  return read_labels(in);
}

/// Rows follow `order` when given, otherwise the map's id order.
inline void write_labels(std::ostream& out, const LabelMap& labels,
                         std::span<const std::string> order = {}) {
  out << "patient_id,e1,e2,e3,e4,e5\n";
  auto emit = [&](const LabelSet& ls) {
    out << ls.id;
    for (auto a : ls.annotations) out << ',' << to_string(a);
    out << '\n';
  };
  if (order.empty()) {
    for (const auto& [id, ls] : labels) emit(ls);
  } else {
    for (const auto& id : order) emit(labels.at(id));
  }
}

}  // namespace trendeq
