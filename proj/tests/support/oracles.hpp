// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numerical code paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qpvs/core.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Kernel { Linear, Poisson, NegBin };

// Per-observation kernel written straight from the integral of (y - t)/V(t).
inline double kernel_term(Kernel k, double y, double eta, double theta = 1.0) {
  switch (k) {
    case Kernel::Linear: return y * eta - 0.5 * eta * eta;
    case Kernel::Poisson: return y * eta - std::exp(eta);
    case Kernel::NegBin: return y * eta - (y + theta) * std::log(theta + std::exp(eta));
  }
  return 0.0;
}

// Term-by-term n*Q_n with an explicit dot product per row.
inline double naive_nq(Kernel k, const VectorXd& y, const MatrixXd& X, const VectorXd& beta, double psi,
                       double theta = 1.0) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double eta = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) eta += X(i, j) * beta[j];
    total += kernel_term(k, y[i], eta, theta);
  }
  return total / psi;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double max_rel_err(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

// Central differences, step 1e-6 * (1 + |x_j|).
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x) {
  VectorXd g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x[j]));
    VectorXd a = x, b = x;
    a[j] += h;
    b[j] -= h;
    g[j] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& g, const VectorXd& x) {
  MatrixXd J(x.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x[j]));
    VectorXd a = x, b = x;
    a[j] += h;
    b[j] -= h;
    J.col(j) = (g(a) - g(b)) / (2.0 * h);
  }
  return J;
}

inline double log_slab(const VectorXd& beta, double s2) {
  const double k = static_cast<double>(beta.size());
  return -0.5 * k * std::log(2.0 * M_PI * s2) - beta.squaredNorm() / (2.0 * s2);
}

// Adaptive Gauss-Kronrod on [lo, hi] of exp(h(b) - shift).
inline double integrate_1d(const std::function<double(double)>& log_integrand, double lo, double hi, double shift) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [&](double b) { return std::exp(log_integrand(b) - shift); };
  return gauss_kronrod<double, 61>::integrate(f, lo, hi, 20, 1e-13);
}

// log of the integral of exp(h) over a box, nested 1-D adaptive rules.
inline double log_integral_2d(const std::function<double(double, double)>& h, double lo0, double hi0, double lo1,
                              double hi1, double shift) {
  using boost::math::quadrature::gauss_kronrod;
  auto inner = [&](double b0) {
    auto f = [&](double b1) { return std::exp(h(b0, b1) - shift); };
    return gauss_kronrod<double, 31>::integrate(f, lo1, hi1, 12, 1e-10);
  };
  return std::log(gauss_kronrod<double, 31>::integrate(inner, lo0, hi0, 12, 1e-10)) + shift;
}

// Closed-form Gaussian integral written from scratch with a dense inverse
// (Eigen's LU), as a cross-check on Cholesky-based code.
inline double linear_log_marginal_dense(const VectorXd& y, const MatrixXd& Xg, double psi, double s2) {
  const auto k = Xg.cols();
  if (k == 0) return 0.0;
  const MatrixXd U = Xg.transpose() * Xg + (psi / s2) * MatrixXd::Identity(k, k);
  const VectorXd m = U.fullPivLu().solve(Xg.transpose() * y);
  return 0.5 * k * std::log(psi) - 0.5 * k * std::log(s2) - 0.5 * std::log(U.determinant()) +
         m.dot(U * m) / (2.0 * psi);
}

// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
inline double ks_pvalue(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double F = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

inline double chi2_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared(dof), x);
}

// Gaussian design with an intercept column, test-side RNG.
inline qpvs::Dataset random_design(std::mt19937_64& rng, std::size_t n, std::size_t p, double scale = 1.0) {
  std::normal_distribution<double> z;
  qpvs::Dataset d;
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    d.X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < d.X.cols(); ++j) d.X(i, j) = scale * z(rng);
  }
  d.y = VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < p; ++j) d.column_names.push_back("c" + std::to_string(j));
  return d;
}

inline void fill_linear(std::mt19937_64& rng, qpvs::Dataset& d, const VectorXd& beta, double sd) {
  std::normal_distribution<double> z;
  const VectorXd mu = d.X * beta;
  for (Eigen::Index i = 0; i < mu.size(); ++i) d.y[i] = mu[i] + sd * z(rng);
}

inline void fill_poisson(std::mt19937_64& rng, qpvs::Dataset& d, const VectorXd& beta) {
  const VectorXd eta = d.X * beta;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    std::poisson_distribution<long> pois(std::exp(eta[i]));
    d.y[i] = static_cast<double>(pois(rng));
  }
}

// Gamma-Poisson mixture: mean mu, variance mu + mu^2 / theta.
inline void fill_negbin(std::mt19937_64& rng, qpvs::Dataset& d, const VectorXd& beta, double theta) {
  const VectorXd eta = d.X * beta;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    std::gamma_distribution<double> g(theta, std::exp(eta[i]) / theta);
    std::poisson_distribution<long> pois(g(rng));
    d.y[i] = static_cast<double>(pois(rng));
  }
}

}  // namespace oracle
