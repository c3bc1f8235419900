#pragma once

// Per-patient Gaussian-process regression with a squared-exponential kernel.
//
// Model:   y_i = d(x_i) + eps_i,  eps_i ~ N(0, noise_variance)
//          d ~ GP(prior_mean, signal_variance * exp(-(x - x')^2 / (2 length_scale^2)))
//
// Hyperparameters are fitted by MAP in log space: log marginal likelihood
// plus independent normal priors on each log-hyperparameter, maximised by
// multi-restart gradient ascent with a backtracking line search.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trendeq/error.hpp"
#include "trendeq/grid.hpp"
#include "trendeq/rng.hpp"
#include "trendeq/timeseries.hpp"

namespace trendeq::gpr {

struct Hyperparams {
  double length_scale = 5.0;      ///< years
  double signal_variance = 1.0;   ///< (eGFR units)^2
  double noise_variance = 1.0;    ///< (eGFR units)^2

  bool valid() const noexcept {
    auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
    return ok(length_scale) && ok(signal_variance) && ok(noise_variance);
  }

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// (log length_scale, log signal_variance, log noise_variance)
using LogParams = std::array<double, 3>;

inline LogParams to_log(const Hyperparams& hp) {
  return {std::log(hp.length_scale), std::log(hp.signal_variance), std::log(hp.noise_variance)};
}

inline Hyperparams from_log(const LogParams& t) {
  return {std::exp(t[0]), std::exp(t[1]), std::exp(t[2])};
}

struct FitConfig {
  double length_scale_median = 5.0;
  double length_scale_log_sd = 1.0;
  double signal_variance_floor = 1.0;  ///< prior median is max(sample variance, floor)
  double signal_variance_log_sd = 1.0;
  double noise_variance_median = 10.0;
  double noise_variance_log_sd = 1.0;

  int restarts = 5;  ///< prior median plus (restarts - 1) prior draws
  int max_iterations = 200;
  double gradient_tolerance = 1e-5;

  double jitter = 1e-9;      ///< relative to the signal variance
  double max_jitter = 1e-3;  ///< doubling stops here

  std::uint64_t seed = 0;

  friend bool operator==(const FitConfig&, const FitConfig&) = default;
};

// ---------------------------------------------------------------------------
// Kernel

/// Unit-amplitude squared exponential, in (0, 1].
inline double se_kernel(double x, double x2, double length_scale) noexcept {
  const double d = x - x2;
  return std::exp(-(d * d) / (2.0 * length_scale * length_scale));
}

inline Eigen::MatrixXd kernel_matrix(std::span<const double> xs, std::span<const double> xs2,
                                     const Hyperparams& hp) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(xs2.size()));
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < xs2.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          hp.signal_variance * se_kernel(xs[i], xs2[j], hp.length_scale);
  return k;
}

namespace detail {

inline Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

struct Factorization {
  Eigen::MatrixXd lower;  ///< L with L L^T = K + noise I + jitter I
  double jitter = 0.0;    ///< relative jitter actually used
};

/// Factorizes K + (noise + jitter * signal) I, doubling the relative jitter on
/// failure until `max_jitter` is exceeded.
inline Factorization factorize(std::span<const double> xs, const Hyperparams& hp,
                               double jitter, double max_jitter) {
  if (!(jitter > 0.0)) throw Error("factorize: jitter must be positive");
  Eigen::MatrixXd k = kernel_matrix(xs, xs, hp);
  for (double j = jitter; j <= max_jitter; j *= 2.0) {
    Eigen::MatrixXd a = k;
    a.diagonal().array() += hp.noise_variance + j * hp.signal_variance;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)
      return {llt.matrixL(), j};
  }
  throw IllConditionedKernel();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Evidence

struct Evidence {
  double value = 0.0;
  LogParams gradient{};  ///< d value / d log-hyperparameter
};

/// log N(ys | prior_mean, K + noise I) and its gradient with respect to the
/// log-hyperparameters. Jitter is scaled with the signal variance, so the
/// gradient is exact for the matrix that is actually factorized.
inline Evidence log_marginal_likelihood_with_gradient(const Hyperparams& hp,
                                                      std::span<const double> xs,
                                                      std::span<const double> ys,
                                                      double prior_mean, double jitter = 1e-9,
                                                      double max_jitter = 1e-3) {
  if (xs.size() != ys.size() || xs.empty()) throw Error("log_marginal_likelihood: size mismatch");
  const auto n = static_cast<Eigen::Index>(xs.size());
  const auto f = detail::factorize(xs, hp, jitter, max_jitter);
  const auto L = f.lower.triangularView<Eigen::Lower>();

  const Eigen::VectorXd r = detail::as_vector(ys).array() - prior_mean;
  Eigen::VectorXd alpha = L.solve(r);
  const double quad = alpha.squaredNorm();
  L.transpose().solveInPlace(alpha);

  Evidence ev;
  ev.value = -0.5 * quad - f.lower.diagonal().array().log().sum() -
             0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  Eigen::MatrixXd kinv = Eigen::MatrixXd::Identity(n, n);
  L.solveInPlace(kinv);
  L.transpose().solveInPlace(kinv);
  const Eigen::MatrixXd w = alpha * alpha.transpose() - kinv;

  const double ell2 = hp.length_scale * hp.length_scale;
  double g_len = 0.0, g_sig = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)];
      const double kij = hp.signal_variance * std::exp(-(d * d) / (2.0 * ell2));
      g_len += w(i, j) * kij * (d * d) / ell2;
      g_sig += w(i, j) * kij;
    }
    g_sig += w(i, i) * f.jitter * hp.signal_variance;
  }
  ev.gradient = {0.5 * g_len, 0.5 * g_sig, 0.5 * hp.noise_variance * w.trace()};
  return ev;
}

inline double log_marginal_likelihood(const Hyperparams& hp, std::span<const double> xs,
                                      std::span<const double> ys, double prior_mean) {
  return log_marginal_likelihood_with_gradient(hp, xs, ys, prior_mean).value;
}

// ---------------------------------------------------------------------------
// Priors

struct LogNormalPrior {
  double log_median = 0.0;
  double log_sd = 1.0;

  double log_density(double t) const noexcept {
    const double z = (t - log_median) / log_sd;
    return -0.5 * z * z - std::log(log_sd) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  double gradient(double t) const noexcept { return -(t - log_median) / (log_sd * log_sd); }
};

using Priors = std::array<LogNormalPrior, 3>;

inline double sample_variance(std::span<const double> ys) {
  if (ys.size() < 2) return 0.0;
  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= static_cast<double>(ys.size());
  double ss = 0.0;
  for (double y : ys) ss += (y - mean) * (y - mean);
  return ss / static_cast<double>(ys.size() - 1);
}

inline Priors make_priors(const FitConfig& cfg, std::span<const double> ys) {
  const double sig_median = std::max(sample_variance(ys), cfg.signal_variance_floor);
  return {LogNormalPrior{std::log(cfg.length_scale_median), cfg.length_scale_log_sd},
          LogNormalPrior{std::log(sig_median), cfg.signal_variance_log_sd},
          LogNormalPrior{std::log(cfg.noise_variance_median), cfg.noise_variance_log_sd}};
}

inline Hyperparams prior_medians(const Priors& p) {
  return from_log({p[0].log_median, p[1].log_median, p[2].log_median});
}

// ---------------------------------------------------------------------------
// Model

enum class RestartStatus { converged, stalled, iteration_cap, failed };

struct RestartDiagnostics {
  LogParams start{};
  LogParams end{};
  double objective = -std::numeric_limits<double>::infinity();
  double gradient_norm = std::numeric_limits<double>::infinity();  ///< infinity norm
  int iterations = 0;
  RestartStatus status = RestartStatus::failed;
};

struct GprModel {
  std::vector<double> train_x;
  std::vector<double> train_y;
  double prior_mean = 0.0;
  Hyperparams hp;
  double jitter = 0.0;      ///< relative jitter baked into `factor`
  Eigen::MatrixXd factor;   ///< lower Cholesky factor of K + noise I (+ jitter)
  Eigen::VectorXd alpha;    ///< (K + noise I)^-1 (y - prior_mean)
  std::vector<RestartDiagnostics> restarts;  ///< empty when not optimized
};

/// Conditions a GP with fixed hyperparameters on the given data.
inline GprModel condition(std::vector<double> xs, std::vector<double> ys, double prior_mean,
                          const Hyperparams& hp, double jitter = 1e-9, double max_jitter = 1e-3) {
  if (xs.empty() || xs.size() != ys.size()) throw Error("condition: size mismatch");
  if (!hp.valid()) throw Error("condition: hyperparameters must be positive and finite");
  GprModel m;
  auto f = detail::factorize(xs, hp, jitter, max_jitter);
  const Eigen::VectorXd r = detail::as_vector(ys).array() - prior_mean;
  m.alpha = f.lower.triangularView<Eigen::Lower>().solve(r);
  f.lower.triangularView<Eigen::Lower>().transpose().solveInPlace(m.alpha);
  m.factor = std::move(f.lower);
  m.jitter = f.jitter;
  m.train_x = std::move(xs);
  m.train_y = std::move(ys);
  m.prior_mean = prior_mean;
  m.hp = hp;
  return m;
}

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
};

inline Posterior predict(const GprModel& m, double x) {
  const auto n = static_cast<Eigen::Index>(m.train_x.size());
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i)
    k(i) = m.hp.signal_variance * se_kernel(x, m.train_x[static_cast<std::size_t>(i)], m.hp.length_scale);
  const double mean = m.prior_mean + k.dot(m.alpha);
  m.factor.triangularView<Eigen::Lower>().solveInPlace(k);
  const double var = m.hp.signal_variance - k.squaredNorm();
  return {mean, std::max(var, 0.0)};
}

// ---------------------------------------------------------------------------
// Fitting

namespace detail {

struct Objective {
  std::span<const double> xs;
  std::span<const double> ys;
  double prior_mean;
  const Priors& priors;
  const FitConfig& cfg;

  /// Log posterior (up to a constant) and gradient; value is -inf when the
  /// kernel cannot be factorized or the result is not finite.
  Evidence operator()(const LogParams& t) const {
    Evidence e;
    try {
      e = log_marginal_likelihood_with_gradient(from_log(t), xs, ys, prior_mean, cfg.jitter,
                                                cfg.max_jitter);
    } catch (const IllConditionedKernel&) {
      return {-std::numeric_limits<double>::infinity(), {}};
    }
    for (std::size_t i = 0; i < 3; ++i) {
      e.value += priors[i].log_density(t[i]);
      e.gradient[i] += priors[i].gradient(t[i]);
    }
    bool finite = std::isfinite(e.value);
    for (double g : e.gradient) finite = finite && std::isfinite(g);
    if (!finite) return {-std::numeric_limits<double>::infinity(), {}};
    return e;
  }
};

inline double inf_norm(const LogParams& g) {
  double m = 0.0;
  for (double v : g) m = std::max(m, std::abs(v));
  return m;
}

/// Gradient ascent with Barzilai-Borwein trial steps and Armijo backtracking.
inline RestartDiagnostics ascend(const Objective& objective, const LogParams& start,
                                 const FitConfig& cfg) {
  constexpr double kArmijo = 1e-4;
  constexpr double kMaxMove = 2.0;  // largest change of any log-parameter per step
  constexpr double kMinMove = 1e-13;

  RestartDiagnostics d;
  d.start = start;
  LogParams t = start;
  Evidence cur = objective(t);
  if (!std::isfinite(cur.value)) return d;

  double step = 1.0 / std::max(1.0, inf_norm(cur.gradient));
  for (;;) {
    const double gnorm = inf_norm(cur.gradient);
    d.end = t;
    d.objective = cur.value;
    d.gradient_norm = gnorm;
    if (gnorm < cfg.gradient_tolerance) {
      d.status = RestartStatus::converged;
      return d;
    }
    if (d.iterations >= cfg.max_iterations) {
      d.status = RestartStatus::iteration_cap;
      return d;
    }
    ++d.iterations;

    step = std::min(step, kMaxMove / gnorm);
    double gg = 0.0;
    for (double g : cur.gradient) gg += g * g;

    LogParams next{};
    Evidence trial;
    for (;;) {
      for (std::size_t i = 0; i < 3; ++i) next[i] = t[i] + step * cur.gradient[i];
      trial = objective(next);
      if (std::isfinite(trial.value) && trial.value >= cur.value + kArmijo * step * gg) break;
      step *= 0.5;
      if (step * gnorm < kMinMove) {
        // No representable ascent step remains: numerically stationary.
        d.status = RestartStatus::stalled;
        return d;
      }
    }

    // Barzilai-Borwein step for the next iteration (ascent form).
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double s = next[i] - t[i];
      const double y = cur.gradient[i] - trial.gradient[i];
      ss += s * s;
      sy += s * y;
    }
    t = next;
    cur = trial;
    step = sy > 0.0 ? ss / sy : 2.0 * step;
  }
}

}  // namespace detail

/// MAP fit of the hyperparameters for one series. The prior mean is the
/// series' mean eGFR. A single-observation series is not optimized; it gets
/// the prior-median hyperparameters.
inline GprModel fit(const PatientSeries& series, const FitConfig& cfg) {
  const auto xs = series.ages();
  const auto ys = series.values();
  if (xs.empty()) throw FitError("fit: empty series");
  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= static_cast<double>(ys.size());

  const Priors priors = make_priors(cfg, ys);
  if (xs.size() == 1) return condition(xs, ys, mean, prior_medians(priors), cfg.jitter, cfg.max_jitter);

  const detail::Objective objective{xs, ys, mean, priors, cfg};
  Rng rng(substream(cfg.seed, series.id));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<RestartDiagnostics> runs;
  for (int r = 0; r < std::max(cfg.restarts, 1); ++r) {
    LogParams start{};
    for (std::size_t i = 0; i < 3; ++i)
      start[i] = priors[i].log_median + (r == 0 ? 0.0 : priors[i].log_sd * normal(rng));
    runs.push_back(detail::ascend(objective, start, cfg));
  }

  const RestartDiagnostics* best = nullptr;
  for (const auto& run : runs) {
    const bool ok = run.status == RestartStatus::converged || run.status == RestartStatus::stalled;
    if (ok && (best == nullptr || run.objective > best->objective)) best = &run;
  }
  if (best == nullptr) {
    std::string msg = "fit diverged for '" + series.id + "':";
    for (const auto& run : runs)
      msg += " [iterations=" + std::to_string(run.iterations) +
             " |grad|=" + text::format_double(run.gradient_norm) + "]";
    throw FitError(msg);
  }

  GprModel m = condition(xs, ys, mean, from_log(best->end), cfg.jitter, cfg.max_jitter);
  m.restarts = std::move(runs);
  return m;
}

// ---------------------------------------------------------------------------
// Resampling

inline Resampled resample(const GprModel& m, std::vector<double> grid, Regime regime) {
  Resampled r;
  r.regime = regime;
  r.values.reserve(grid.size());
  r.variances.reserve(grid.size());
  for (double x : grid) {
    const auto p = predict(m, x);
    r.values.push_back(p.mean);
    r.variances.push_back(p.variance);
  }
  r.grid = std::move(grid);
  return r;
}

/// 50 points over ages 30..90 inclusive.
inline Resampled resample_fixed_range(const GprModel& m) {
  return resample(m, uniform_grid(kFixedRangeStart, kFixedRangeEnd), Regime::fixed_30_90);
}

/// 50 points over the series' own observed age range.
inline Resampled resample_in_range(const GprModel& m, const PatientSeries& series) {
  return resample(m, in_range_grid(series), Regime::in_range);
}

}  // namespace trendeq::gpr
