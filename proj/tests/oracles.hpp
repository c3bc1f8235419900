#pragma once

// Independent reference implementations used by the tests. Nothing here
// calls into the library's numerics: matrices are plain nested vectors,
// inverses come from Gauss-Jordan elimination, searches are exhaustive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix identity(std::size_t n) {
  Matrix m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

/// Gauss-Jordan inverse with partial pivoting; also returns log|det|.
inline std::pair<Matrix, double> invert(Matrix a) {
  const std::size_t n = a.size();
  Matrix inv = identity(n);
  double logdet = 0.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(inv[col], inv[piv]);
    const double p = a[col][col];
    logdet += std::log(std::abs(p));
    for (std::size_t c = 0; c < n; ++c) {
      a[col][c] /= p;
      inv[col][c] /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return {inv, logdet};
}

inline std::vector<double> multiply(const Matrix& m, const std::vector<double>& v) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += m[i][j] * v[j];
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Gaussian process

struct Gp {
  std::vector<double> xs, ys;
  double prior_mean = 0.0;
  double length_scale = 1.0, signal = 1.0, noise = 1.0;
  double diag_extra = 0.0;  ///< absolute jitter on the diagonal
};

inline double se(double a, double b, double ell) { return std::exp(-(a - b) * (a - b) / (2.0 * ell * ell)); }

inline Matrix covariance(const Gp& g) {
  const std::size_t n = g.xs.size();
  Matrix k(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      k[i][j] = g.signal * se(g.xs[i], g.xs[j], g.length_scale) + (i == j ? g.noise + g.diag_extra : 0.0);
  return k;
}

struct Prediction {
  double mean, variance;
};

inline Prediction predict(const Gp& g, double x) {
  const auto [inv, logdet] = invert(covariance(g));
  std::vector<double> k(g.xs.size()), r(g.xs.size());
  for (std::size_t i = 0; i < g.xs.size(); ++i) {
    k[i] = g.signal * se(x, g.xs[i], g.length_scale);
    r[i] = g.ys[i] - g.prior_mean;
  }
  return {g.prior_mean + dot(k, multiply(inv, r)), g.signal - dot(k, multiply(inv, k))};
}

inline double log_marginal_likelihood(const Gp& g) {
  const auto [inv, logdet] = invert(covariance(g));
  std::vector<double> r(g.xs.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = g.ys[i] - g.prior_mean;
  const double n = static_cast<double>(r.size());
  return -0.5 * dot(r, multiply(inv, r)) - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

/// Cholesky for drawing GP samples in tests (lower factor, row-major).
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix l(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    double s = a[j][j];
    for (std::size_t k = 0; k < j; ++k) s -= l[j][k] * l[j][k];
    l[j][j] = std::sqrt(s);
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = a[i][j];
      for (std::size_t k = 0; k < j; ++k) t -= l[i][k] * l[j][k];
      l[i][j] = t / l[j][j];
    }
  }
  return l;
}

// ---------------------------------------------------------------------------
// Classifiers

/// Population z-score, zero spread mapped to unit scale.
inline std::pair<std::vector<double>, std::vector<double>> zscore(const std::vector<std::vector<double>>& rows) {
  const std::size_t d = rows.front().size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j] / static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (r[j] - mu[j]) * (r[j] - mu[j]) / static_cast<double>(rows.size());
  for (auto& s : sd) s = s > 0.0 ? std::sqrt(s) : 1.0;
  return {mu, sd};
}

/// Exhaustive K-NN: repeatedly picks the closest unused point, lowest index
/// first on ties. Labels are 1 (stable) / 0 (unstable).
inline int knn(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
               const std::vector<double>& q, int k, bool scale) {
  std::vector<double> mu(q.size(), 0.0), sd(q.size(), 1.0);
  if (scale) std::tie(mu, sd) = zscore(rows);
  auto dist = [&](const std::vector<double>& r) {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double a = (r[j] - mu[j]) / sd[j], b = (q[j] - mu[j]) / sd[j];
      s += (a - b) * (a - b);
    }
    return s;
  };
  std::vector<bool> used(rows.size(), false);
  int votes = 0;
  for (int round = 0; round < k; ++round) {
    std::size_t best = rows.size();
    double bd = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (used[i]) continue;
      const double d = dist(rows[i]);
      if (best == rows.size() || d < bd) best = i, bd = d;
    }
    used[best] = true;
    votes += labels[best];
  }
  return 2 * votes > k ? 1 : 0;
}

/// Projection onto {0 <= a <= c, y.a = 0} by bisection on the multiplier.
inline std::vector<double> project(const std::vector<double>& v, const std::vector<double>& y, double c) {
  auto at = [&](double lam) {
    std::vector<double> a(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::clamp(v[i] - lam * y[i], 0.0, c);
    return a;
  };
  auto h = [&](double lam) { return dot(y, at(lam)); };
  double lo = -1.0, hi = 1.0;
  while (h(lo) < 0.0) lo *= 2.0;
  while (h(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) > 0.0 ? lo : hi) = mid;
  }
  return at(0.5 * (lo + hi));
}

struct Dual {
  std::vector<double> alpha;
  double objective = 0.0;
};

inline double dual_value(const Matrix& k, const std::vector<double>& y, const std::vector<double>& a) {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lin += a[i];
    for (std::size_t j = 0; j < a.size(); ++j) quad += a[i] * a[j] * y[i] * y[j] * k[i][j];
  }
  return lin - 0.5 * quad;
}

/// Projected gradient ascent on the SVM dual with a Gershgorin step bound.
inline Dual svm_dual(const Matrix& k, const std::vector<double>& y, double c, int iterations = 20000) {
  const std::size_t n = y.size();
  double lip = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::abs(k[i][j]);
    lip = std::max(lip, row);
  }
  const double step = 1.0 / lip;
  std::vector<double> a(n, 0.0), g(n);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += y[i] * y[j] * k[i][j] * a[j];
      g[i] = 1.0 - s;
    }
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a[i] + step * g[i];
    a = project(v, y, c);
  }
  return {a, dual_value(k, y, a)};
}

// ---------------------------------------------------------------------------
// Metrics

struct Counts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// 1 = stable (positive).
inline Counts recount(const std::vector<int>& preds, const std::vector<int>& truths) {
  Counts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && truths[i] == 1) c.tp++;
    if (preds[i] == 1 && truths[i] == 0) c.fp++;
    if (preds[i] == 0 && truths[i] == 0) c.tn++;
    if (preds[i] == 0 && truths[i] == 1) c.fn++;
  }
  return c;
}

inline double f_measure(const Counts& c) {
  const double p = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  const double r = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

// ---------------------------------------------------------------------------
// Generators

/// `n` distinct sorted ages in [lo, hi], at least `gap` apart.
inline std::vector<double> random_ages(std::mt19937_64& rng, std::size_t n, double lo, double hi, double gap = 0.05) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> xs;
  while (xs.size() < n) {
    const double x = u(rng);
    bool ok = true;
    for (double e : xs) ok = ok && std::abs(e - x) >= gap;
    if (ok) xs.push_back(x);
  }
  std::sort(xs.begin(), xs.end());
  return xs;
}

inline double rel_err(double a, double b, double floor = 0.0) {
  return std::abs(a - b) / std::max({std::abs(b), floor, 1e-300});
}

}  // namespace oracle
