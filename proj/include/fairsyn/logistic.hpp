#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fairsyn/error.hpp"

namespace fairsyn {

inline constexpr double kLogisticRidge = 1e-6;
inline constexpr double kLogisticTol = 1e-10;
inline constexpr std::size_t kLogisticMaxIter = 100;

inline double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Ridge-stabilized logistic regression fitted by IRLS. Rows are dense feature
// vectors without the intercept; the intercept is coefficient 0.
struct LogisticModel {
  std::vector<double> beta;  // size d + 1
  bool converged = false;
  double deviance = 0.0;

  double predict(const std::vector<double>& x) const {
    double z = beta[0];
    for (std::size_t j = 0; j < x.size(); ++j) z += beta[j + 1] * x[j];
    return sigmoid(z);
  }
};

namespace detail {

// Solves A x = b for symmetric positive definite A (in-place Cholesky).
inline std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b,
                                     std::size_t d) {
  for (std::size_t j = 0; j < d; ++j) {
    double diag = a[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * d + k] * a[j * d + k];
    if (!(diag > 0.0)) throw NuisanceFitError("normal equations not positive definite");
    const double l = std::sqrt(diag);
    a[j * d + j] = l;
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * d + k] * a[j * d + k];
      a[i * d + j] = v / l;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= a[i * d + k] * b[k];
    b[i] = v / a[i * d + i];
  }
  for (std::size_t ii = d; ii > 0; --ii) {
    const std::size_t i = ii - 1;
    double v = b[i];
    for (std::size_t k = i + 1; k < d; ++k) v -= a[k * d + i] * b[k];
    b[i] = v / a[i * d + i];
  }
  return b;
}

}  // namespace detail

inline LogisticModel fit_logistic(const std::vector<std::vector<double>>& rows,
                                  const std::vector<int>& y,
                                  double ridge = kLogisticRidge) {
  const std::size_t n = rows.size();
  if (n == 0) throw NuisanceFitError("no rows to fit");
  const std::size_t d = rows[0].size() + 1;
  LogisticModel m;
  m.beta.assign(d, 0.0);
  std::vector<double> p(n, 0.5);
  std::vector<double> h(d * d), g(d);
  for (std::size_t iter = 0; iter < kLogisticMaxIter; ++iter) {
    std::fill(h.begin(), h.end(), 0.0);
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double z = m.beta[0];
      const auto& xi = rows[i];
      for (std::size_t j = 1; j < d; ++j) z += m.beta[j] * xi[j - 1];
      const double pi = sigmoid(z);
      p[i] = pi;
      const double w = std::max(pi * (1.0 - pi), 1e-12);
      const double r = static_cast<double>(y[i]) - pi;
      g[0] += r;
      h[0] += w;
      for (std::size_t j = 1; j < d; ++j) {
        const double xj = xi[j - 1];
        g[j] += r * xj;
        h[j] += w * xj;  // first row/column
        for (std::size_t k = 1; k <= j; ++k) {
          h[j * d + k] += w * xj * xi[k - 1];
        }
      }
    }
    // Symmetrize and add the ridge.
    for (std::size_t j = 0; j < d; ++j) {
      h[j * d + j] += ridge;
      if (j > 0) {
        g[j] -= ridge * m.beta[j];
        h[j * d + 0] = h[j];
        h[0 * d + j] = h[j];
      }
      for (std::size_t k = 1; k < j; ++k) h[k * d + j] = h[j * d + k];
    }
    std::vector<double> step = detail::solve_spd(h, g, d);
    double max_step = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(step[j])) throw NuisanceFitError("IRLS diverged");
      m.beta[j] += step[j];
      max_step = std::max(max_step, std::fabs(step[j]));
    }
    if (max_step < kLogisticTol) {
      m.converged = true;
      break;
    }
  }
  m.deviance = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = std::min(std::max(p[i], 1e-12), 1.0 - 1e-12);
    m.deviance -= 2.0 * (y[i] ? std::log(pi) : std::log(1.0 - pi));
  }
  if (!std::isfinite(m.deviance)) throw NuisanceFitError("non-finite deviance");
  return m;
}

}  // namespace fairsyn
