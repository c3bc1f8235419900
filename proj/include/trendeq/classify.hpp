#pragma once

// Binary trend classifiers: K-NN (Euclidean, odd K) and a soft-margin RBF
// SVM trained by sequential minimal optimization. Stable is the positive
// class (y = +1).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "trendeq/error.hpp"
#include "trendeq/text.hpp"
#include "trendeq/timeseries.hpp"

namespace trendeq::classify {

using Row = std::vector<double>;

struct LabeledData {
  std::vector<std::string> ids;
  std::vector<Row> rows;
  std::vector<BinaryLabel> labels;

  std::size_t size() const noexcept { return rows.size(); }
};

/// Called with the ids of every patient a training step sees. Stages are
/// "standardize" (scaler fit) and "train" (model fit).
using TrainingObserver = std::function<void(std::string_view stage, std::span<const std::string> ids)>;

/// Per-dimension z-score fitted on training rows. Zero-variance dimensions
/// keep unit scale.
class Scaler {
 public:
  Scaler() = default;

  static Scaler fit(std::span<const Row> rows) {
    Scaler s;
    if (rows.empty()) return s;
    const std::size_t d = rows.front().size();
    s.mean_.assign(d, 0.0);
    s.sd_.assign(d, 0.0);
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) s.mean_[j] += r[j];
    for (auto& m : s.mean_) m /= static_cast<double>(rows.size());
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) s.sd_[j] += (r[j] - s.mean_[j]) * (r[j] - s.mean_[j]);
    for (auto& v : s.sd_) {
      v = std::sqrt(v / static_cast<double>(rows.size()));
      if (!(v > 0.0)) v = 1.0;
    }
    return s;
  }

  bool identity() const noexcept { return mean_.empty(); }

  Row apply(std::span<const double> x) const {
    Row out(x.begin(), x.end());
    if (identity()) return out;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = (out[j] - mean_[j]) / sd_[j];
    return out;
  }

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& sd() const noexcept { return sd_; }

 private:
  std::vector<double> mean_;
  std::vector<double> sd_;
};

namespace detail {

inline std::size_t check_data(const LabeledData& data) {
  if (data.rows.empty()) throw Error("classifier: no training data");
  if (data.labels.size() != data.rows.size() || (!data.ids.empty() && data.ids.size() != data.rows.size()))
    throw Error("classifier: rows, labels and ids differ in length");
  const std::size_t d = data.rows.front().size();
  for (const auto& r : data.rows)
    if (r.size() != d) throw Error("classifier: inconsistent feature dimensionality");
  return d;
}

inline Scaler fit_scaler(const LabeledData& data, bool scaling, const TrainingObserver* observer) {
  if (!scaling) return {};
  if (observer != nullptr && *observer) (*observer)("standardize", data.ids);
  return Scaler::fit(data.rows);
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// K-NN

struct KnnOptions {
  int k = 3;
  bool scaling = true;
};

struct KnnModel {
  int k = 3;
  Scaler scaler;
  std::vector<Row> points;  ///< scaled training vectors
  std::vector<BinaryLabel> labels;
};

inline KnnModel knn_train(const LabeledData& data, const KnnOptions& opts = {},
                          const TrainingObserver* observer = nullptr) {
  detail::check_data(data);
  if (opts.k < 1 || opts.k % 2 == 0) throw Error("knn: k must be a positive odd integer");
  if (data.size() < static_cast<std::size_t>(opts.k)) throw Error("knn: fewer than k training points");
  KnnModel m;
  m.k = opts.k;
  m.scaler = detail::fit_scaler(data, opts.scaling, observer);
  if (observer != nullptr && *observer) (*observer)("train", data.ids);
  m.points.reserve(data.size());
  for (const auto& r : data.rows) m.points.push_back(m.scaler.apply(r));
  m.labels = data.labels;
  return m;
}

/// Majority label of the k nearest training points; equal distances are
/// ordered by training index.
inline BinaryLabel knn_predict(const KnnModel& m, std::span<const double> x) {
  if (m.points.empty() || x.size() != m.points.front().size()) throw Error("knn: dimension mismatch");
  const auto k = static_cast<std::size_t>(m.k);
  if (m.points.size() < k) throw Error("knn: fewer than k training points");
  const Row q = m.scaler.apply(x);

  std::vector<std::pair<double, std::size_t>> d(m.points.size());
  for (std::size_t i = 0; i < m.points.size(); ++i) d[i] = {detail::squared_distance(q, m.points[i]), i};
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());

  std::size_t stable = 0;
  for (std::size_t i = 0; i < k; ++i) stable += m.labels[d[i].second] == BinaryLabel::stable ? 1 : 0;
  return 2 * stable > k ? BinaryLabel::stable : BinaryLabel::unstable;
}

// ---------------------------------------------------------------------------
// SVM

inline double rbf_kernel(std::span<const double> u, std::span<const double> v, double sigma) {
  return std::exp(-detail::squared_distance(u, v) / (2.0 * sigma * sigma));
}

/// Solution of  max  sum(a) - 1/2 a^T Q a,  Q_ij = y_i y_j K_ij,
///         s.t.  0 <= a_i <= c,  y^T a = 0.
struct DualSolution {
  std::vector<double> alpha;
  double bias = 0.0;
  double max_violation = 0.0;  ///< max(-y G) over I_up minus min over I_low at exit
  std::size_t iterations = 0;
};

/// SMO with maximal-violating-pair working set selection. `kernel` is the
/// full n x n Gram matrix in row-major order, `y` in {-1, +1}.
inline DualSolution smo_solve(std::span<const double> kernel, std::span<const double> y, double c,
                              double tolerance, std::size_t max_iterations) {
  const std::size_t n = y.size();
  constexpr double kTau = 1e-12;
  auto K = [&](std::size_t i, std::size_t j) { return kernel[i * n + j]; };

  DualSolution s;
  s.alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);  // Q a - 1
  auto& a = s.alpha;

  auto in_up = [&](std::size_t t) { return (y[t] > 0 && a[t] < c) || (y[t] < 0 && a[t] > 0); };
  auto in_low = [&](std::size_t t) { return (y[t] > 0 && a[t] > 0) || (y[t] < 0 && a[t] < c); };

  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && v > gmax) gmax = v, i = t;
      if (in_low(t) && v < gmin) gmin = v, j = t;
    }
    s.max_violation = (i == n || j == n) ? 0.0 : gmax - gmin;
    if (i == n || j == n || s.max_violation < tolerance) break;
    if (s.iterations >= max_iterations)
      throw Error("svm: SMO did not converge; worst KKT violation " + text::format_double(s.max_violation));
    ++s.iterations;

    const double qij = y[i] * y[j] * K(i, j);
    const double old_i = a[i], old_j = a[j];
    if (y[i] != y[j]) {
      double quad = K(i, i) + K(j, j) + 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0) {
        if (a[j] < 0) a[j] = 0, a[i] = diff;
      } else if (a[i] < 0) {
        a[i] = 0, a[j] = -diff;
      }
      if (diff > 0) {
        if (a[i] > c) a[i] = c, a[j] = c - diff;
      } else if (a[j] > c) {
        a[j] = c, a[i] = c + diff;
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > c) {
        if (a[i] > c) a[i] = c, a[j] = sum - c;
      } else if (a[j] < 0) {
        a[j] = 0, a[i] = sum;
      }
      if (sum > c) {
        if (a[j] > c) a[j] = c, a[i] = sum - c;
      } else if (a[i] < 0) {
        a[i] = 0, a[j] = sum;
      }
    }

    const double di = a[i] - old_i, dj = a[j] - old_j;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += y[t] * (y[i] * K(t, i) * di + y[j] * K(t, j) * dj);
  }

  // Bias: mean over free vectors, else the middle of the feasible interval.
  double sum_free = 0.0, lo = -std::numeric_limits<double>::infinity(),
         hi = std::numeric_limits<double>::infinity();
  std::size_t free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double v = -y[t] * grad[t];
    if (a[t] > 0 && a[t] < c) {
      sum_free += v;
      ++free;
    }
    if (in_up(t)) lo = std::max(lo, v);
    if (in_low(t)) hi = std::min(hi, v);
  }
  if (free > 0) {
    s.bias = sum_free / static_cast<double>(free);
  } else if (std::isfinite(lo) && std::isfinite(hi)) {
    s.bias = 0.5 * (lo + hi);
  } else {
    s.bias = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
  }
  return s;
}

inline double dual_objective(std::span<const double> kernel, std::span<const double> y,
                             std::span<const double> alpha) {
  const std::size_t n = y.size();
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lin += alpha[i];
    for (std::size_t j = 0; j < n; ++j) quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[i * n + j];
  }
  return lin - 0.5 * quad;
}

struct SvmOptions {
  double c = 1.0;
  double sigma = 10.0;
  double tolerance = 1e-3;
  bool scaling = true;
  std::size_t iteration_factor = 100;  ///< cap = factor * n
};

struct SvmModel {
  std::vector<Row> support_vectors;  ///< scaled
  std::vector<double> dual_coeffs;   ///< alpha_i * y_i
  double bias = 0.0;
  double kernel_sigma = 10.0;
  double c = 1.0;
  Scaler scaler;
  std::size_t iterations = 0;
  double max_violation = 0.0;
};

inline double to_sign(BinaryLabel b) noexcept { return b == BinaryLabel::stable ? 1.0 : -1.0; }

/// Scaled training rows, their Gram matrix and +-1 labels.
struct SvmProblem {
  Scaler scaler;
  std::vector<Row> rows;
  std::vector<double> gram;
  std::vector<double> y;
};

inline SvmProblem svm_problem(const LabeledData& data, const SvmOptions& opts,
                              const TrainingObserver* observer = nullptr) {
  detail::check_data(data);
  SvmProblem p;
  p.scaler = detail::fit_scaler(data, opts.scaling, observer);
  for (const auto& r : data.rows) p.rows.push_back(p.scaler.apply(r));
  const std::size_t n = data.size();
  p.gram.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      p.gram[i * n + j] = p.gram[j * n + i] = rbf_kernel(p.rows[i], p.rows[j], opts.sigma);
  for (auto l : data.labels) p.y.push_back(to_sign(l));
  return p;
}

inline SvmModel svm_train(const LabeledData& data, const SvmOptions& opts = {},
                          const TrainingObserver* observer = nullptr) {
  detail::check_data(data);
  const bool has_pos = std::count(data.labels.begin(), data.labels.end(), BinaryLabel::stable) > 0;
  const bool has_neg = std::count(data.labels.begin(), data.labels.end(), BinaryLabel::unstable) > 0;
  if (!has_pos || !has_neg) throw Error("svm: training data contains a single class");
  if (!(opts.c > 0.0) || !(opts.sigma > 0.0)) throw Error("svm: c and sigma must be positive");

  auto p = svm_problem(data, opts, observer);
  if (observer != nullptr && *observer) (*observer)("train", data.ids);
  const auto sol = smo_solve(p.gram, p.y, opts.c, opts.tolerance, opts.iteration_factor * data.size());

  SvmModel m;
  m.scaler = std::move(p.scaler);
  m.bias = sol.bias;
  m.kernel_sigma = opts.sigma;
  m.c = opts.c;
  m.iterations = sol.iterations;
  m.max_violation = sol.max_violation;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (sol.alpha[i] > 0.0) {
      m.support_vectors.push_back(std::move(p.rows[i]));
      m.dual_coeffs.push_back(sol.alpha[i] * p.y[i]);
    }
  }
  return m;
}

inline double svm_decision(const SvmModel& m, std::span<const double> x) {
  if (!m.support_vectors.empty() && x.size() != m.support_vectors.front().size())
    throw Error("svm: dimension mismatch");
  if (!m.scaler.identity() && x.size() != m.scaler.mean().size()) throw Error("svm: dimension mismatch");
  const Row q = m.scaler.apply(x);
  double f = m.bias;
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
    f += m.dual_coeffs[i] * rbf_kernel(m.support_vectors[i], q, m.kernel_sigma);
  return f;
}

/// Stable when the decision value is non-negative.
inline BinaryLabel svm_predict(const SvmModel& m, std::span<const double> x) {
  return svm_decision(m, x) >= 0.0 ? BinaryLabel::stable : BinaryLabel::unstable;
}

inline std::string dump(const SvmModel& m) {
  std::ostringstream os;
  os << "svm\n"
     << "support_vectors " << m.support_vectors.size() << '\n'
     << "bias " << text::format_double(m.bias) << '\n'
     << "sigma " << text::format_double(m.kernel_sigma) << '\n'
     << "c " << text::format_double(m.c) << '\n'
     << "scaling " << (m.scaler.identity() ? "off" : "on") << '\n'
     << "smo_iterations " << m.iterations << '\n'
     << "kkt_gap " << text::format_double(m.max_violation) << '\n';
  return os.str();
}

inline std::string dump(const KnnModel& m) {
  std::ostringstream os;
  const auto stable = std::count(m.labels.begin(), m.labels.end(), BinaryLabel::stable);
  os << "knn\n"
     << "k " << m.k << '\n'
     << "training_points " << m.points.size() << '\n'
     << "stable " << stable << '\n'
     << "unstable " << (static_cast<std::ptrdiff_t>(m.labels.size()) - stable) << '\n'
     << "scaling " << (m.scaler.identity() ? "off" : "on") << '\n';
  return os.str();
}

}  // namespace trendeq::classify
