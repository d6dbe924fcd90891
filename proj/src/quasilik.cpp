#include "qpvs/quasilik.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qpvs/error.hpp"
#include "qpvs/rng.hpp"

namespace qpvs {

namespace {

void check_args(const VectorXd& y, const MatrixXd& Xg, const VectorXd& beta, double psi) {
  if (Xg.rows() != y.size() || Xg.cols() != beta.size()) {
    std::ostringstream msg;
    msg << "dimension mismatch: y " << y.size() << ", X_gamma " << Xg.rows() << "x" << Xg.cols() << ", beta "
        << beta.size();
    fail(ErrorCode::DimensionMismatch, msg.str());
  }
  if (!(psi > 0.0)) fail(ErrorCode::NonPositiveDispersion, "dispersion must be positive");
}

VectorXd linear_predictor(const MatrixXd& Xg, const VectorXd& beta) {
  if (beta.size() == 0) return VectorXd::Zero(Xg.rows());
  return Xg * beta;
}

MatrixXd weighted_gram(const MatrixXd& Xg, const VectorXd& w, double scale) {
  MatrixXd h = Xg.transpose() * (w.asDiagonal() * Xg);
  h *= scale;
  // Force exact symmetry; the two triangles may differ in the last bit.
  return 0.5 * (h + h.transpose());
}

struct EvalRequest {
  bool observed = true;
  bool fisher = true;
};

QuasiEval eval_impl(const VectorXd& y, const MatrixXd& Xg, const VectorXd& beta, double psi,
                    const QuasiFamily& fam, EvalRequest req) {
  const VectorXd eta = linear_predictor(Xg, beta);
  const auto n = y.size();
  VectorXd d1(n), neg_d2(n), fw(n);
  double value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const KernelTerms k = fam.kernel(y[i], eta[i]);
    value += k.value;
    d1[i] = k.d1;
    neg_d2[i] = -k.d2;
    if (req.fisher) fw[i] = fam.fisher_weight(eta[i]);
  }
  QuasiEval out;
  out.value = value / psi;
  out.gradient = beta.size() == 0 ? VectorXd() : VectorXd(Xg.transpose() * d1 / psi);
  const auto k = beta.size();
  out.neg_hessian = req.observed ? weighted_gram(Xg, neg_d2, 1.0 / psi) : MatrixXd(k, k);
  out.fisher_neg_hessian = req.fisher ? weighted_gram(Xg, fw, 1.0 / psi) : MatrixXd(k, k);
  return out;
}

double objective_value(const VectorXd& y, const MatrixXd& Xg, const VectorXd& beta, double psi,
                       const QuasiFamily& fam, double ridge) {
  return quasi_loglik(y, Xg, beta, psi, fam) - 0.5 * ridge * beta.squaredNorm();
}

// Cholesky with escalating diagonal jitter; the matrix is PD in exact arithmetic.
Eigen::LLT<MatrixXd> robust_llt(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double base = std::max(1e-300, m.trace() / static_cast<double>(m.rows())) * 1e-10;
  double jitter = base;
  for (int attempt = 0; attempt < 20; ++attempt, jitter *= 10.0) {
    llt.compute(m + jitter * MatrixXd::Identity(m.rows(), m.cols()));
    if (llt.info() == Eigen::Success) return llt;
  }
  fail(ErrorCode::SingularHessian, "information matrix is singular; is the design rank deficient?");
}

}  // namespace

double quasi_loglik(const VectorXd& y, const MatrixXd& Xg, const VectorXd& beta, double psi,
                    const QuasiFamily& fam) {
  check_args(y, Xg, beta, psi);
  const VectorXd eta = linear_predictor(Xg, beta);
  double value = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) value += fam.kernel(y[i], eta[i]).value;
  return value / psi;
}

QuasiEval quasi_eval(const VectorXd& y, const MatrixXd& Xg, const VectorXd& beta, double psi,
                     const QuasiFamily& fam) {
  check_args(y, Xg, beta, psi);
  return eval_impl(y, Xg, beta, psi, fam, {});
}

double quasi_loglik(const Dataset& d, const ModelIndicator& gamma, const VectorXd& beta_gamma, double psi,
                    const QuasiFamily& fam) {
  if (gamma.p() != d.p()) fail(ErrorCode::DimensionMismatch, "model indicator length differs from p");
  return quasi_loglik(d.y, submatrix(d.X, gamma.active()), beta_gamma, psi, fam);
}

QuasiEval quasi_eval(const Dataset& d, const ModelIndicator& gamma, const VectorXd& beta_gamma, double psi,
                     const QuasiFamily& fam) {
  if (gamma.p() != d.p()) fail(ErrorCode::DimensionMismatch, "model indicator length differs from p");
  return quasi_eval(d.y, submatrix(d.X, gamma.active()), beta_gamma, psi, fam);
}

NewtonResult newton_maximize(const VectorXd& y, const MatrixXd& Xg, double psi, const QuasiFamily& fam,
                             double ridge, const VectorXd& start, const NewtonOptions& opt) {
  check_args(y, Xg, start, psi);
  NewtonResult res;
  res.beta = start;
  const auto k = start.size();
  if (k == 0) {
    res.objective = quasi_loglik(y, Xg, start, psi, fam);
    res.converged = true;
    return res;
  }

  // Log-link NB: scoring converges only linearly when y is far from mu, so take
  // the observed-Hessian step whenever it factorises.
  const bool canonical = fam.kind() != FamilyKind::NegBinLog;
  auto evaluate = [&](const VectorXd& b, QuasiEval& ev, double& f, VectorXd& g) {
    ev = eval_impl(y, Xg, b, psi, fam, {.observed = !canonical, .fisher = true});
    f = ev.value - 0.5 * ridge * b.squaredNorm();
    g = ev.gradient - ridge * b;
  };

  QuasiEval ev;
  double f = 0.0;
  VectorXd g;
  evaluate(res.beta, ev, f, g);
  if (!std::isfinite(f)) {
    // Cold start overflowed (large counts with log link); fall back to zero.
    res.beta.setZero();
    evaluate(res.beta, ev, f, g);
  }

  bool converged = false;
  double bound = opt.tol * (1.0 + std::abs(f));
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    bound = opt.tol * (1.0 + std::abs(f));
    if (g.lpNorm<Eigen::Infinity>() <= bound) {
      converged = true;
      break;
    }
    VectorXd delta;
    if (!canonical) {
      MatrixXd obs = ev.neg_hessian;
      obs.diagonal().array() += ridge;
      Eigen::LLT<MatrixXd> llt(obs);
      if (llt.info() == Eigen::Success) delta = llt.solve(g);
    }
    if (delta.size() == 0) {
      MatrixXd info = ev.fisher_neg_hessian;
      info.diagonal().array() += ridge;
      delta = robust_llt(info).solve(g);
    }

    // Near the mode f stops moving above rounding level.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    double step = 1.0;
    bool accepted = false;
    VectorXd cand;
    double fc = -std::numeric_limits<double>::infinity();
    for (int h = 0; h <= 50; ++h, step *= 0.5) {
      cand = res.beta + step * delta;
      fc = objective_value(y, Xg, cand, psi, fam, ridge);
      if (std::isfinite(fc) && fc >= f - slack) {
        accepted = true;
        break;
      }
    }
    ++res.iters;
    if (!accepted) break;
    const bool negligible = (cand - res.beta).lpNorm<Eigen::Infinity>() <=
                            1e-15 * (1.0 + res.beta.lpNorm<Eigen::Infinity>());
    res.beta = cand;
    evaluate(res.beta, ev, f, g);
    if (negligible) break;
  }
  res.objective = f;
  res.grad_inf_norm = g.lpNorm<Eigen::Infinity>();
  bound = opt.tol * (1.0 + std::abs(f));
  if (!converged) {
    if (res.grad_inf_norm <= 1e3 * bound && std::isfinite(f)) {
      converged = true;
    } else {
      std::ostringstream msg;
      msg << "Newton iterations did not converge after " << res.iters << " steps (|grad| = " << res.grad_inf_norm
          << ")";
      fail(ErrorCode::OptimizerDiverged, msg.str());
    }
  }
  res.converged = converged;
  return res;
}

NewtonResult fit_full_qmle(const Dataset& d, const QuasiFamily& fam, const NewtonOptions& opt) {
  return newton_maximize(d.y, d.X, 1.0, fam, 0.0, VectorXd::Zero(d.X.cols()), opt);
}

double pearson_statistic(const VectorXd& y, const VectorXd& mu, const QuasiFamily& fam) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = y[i] - mu[i];
    s += r * r / fam.variance(mu[i]);
  }
  return s;
}

VectorXd fitted_mean(const MatrixXd& X, const VectorXd& beta, const QuasiFamily& fam) {
  const VectorXd eta = beta.size() == 0 ? VectorXd(VectorXd::Zero(X.rows())) : VectorXd(X * beta);
  return eta.unaryExpr([&](double e) { return fam.mu(e); });
}

namespace {

// Smooth part of the lasso objective: -(1/n) sum kernel.
double lasso_loss(const VectorXd& y, const MatrixXd& X, const VectorXd& beta, const QuasiFamily& fam) {
  const VectorXd eta = X * beta;
  double v = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) v -= fam.kernel(y[i], eta[i]).value;
  return v / static_cast<double>(y.size());
}

VectorXd lasso_grad(const VectorXd& y, const MatrixXd& X, const VectorXd& beta, const QuasiFamily& fam) {
  const VectorXd eta = X * beta;
  VectorXd d1(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) d1[i] = fam.kernel(y[i], eta[i]).d1;
  return -(X.transpose() * d1) / static_cast<double>(y.size());
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Held-out loss used to choose lambda: squared error or Poisson deviance.
double holdout_loss(const VectorXd& y, const VectorXd& mu, const QuasiFamily& fam) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (fam.kind() == FamilyKind::LinearIdentity) {
      s += (y[i] - mu[i]) * (y[i] - mu[i]);
    } else {
      const double term = y[i] > 0.0 ? y[i] * std::log(y[i] / mu[i]) : 0.0;
      s += 2.0 * (term - (y[i] - mu[i]));
    }
  }
  return s / static_cast<double>(y.size());
}

}  // namespace

LassoFit lasso_ista(const VectorXd& y, const MatrixXd& X, const QuasiFamily& fam, double lambda,
                    const std::vector<bool>& unpenalized, const VectorXd& start, double tol, std::size_t max_iter) {
  if (fam.kind() == FamilyKind::NegBinLog) fail(ErrorCode::WrongFamily, "lasso dispersion supports linear and Poisson families");
  LassoFit fit;
  fit.beta = start;
  double t = 1.0;
  double loss = lasso_loss(y, X, fit.beta, fam);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const VectorXd grad = lasso_grad(y, X, fit.beta, fam);
    VectorXd next(fit.beta.size());
    double next_loss = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
        const double v = fit.beta[j] - t * grad[j];
        next[j] = unpenalized[static_cast<std::size_t>(j)] ? v : soft_threshold(v, t * lambda);
      }
      const VectorXd diff = next - fit.beta;
      next_loss = lasso_loss(y, X, next, fam);
      if (std::isfinite(next_loss) && next_loss <= loss + grad.dot(diff) + diff.squaredNorm() / (2.0 * t) + 1e-15)
        break;
      t *= 0.5;
    }
    fit.iters = it + 1;
    const double change = (next - fit.beta).lpNorm<Eigen::Infinity>();
    fit.beta = next;
    loss = next_loss;
    if (change <= tol * (1.0 + fit.beta.lpNorm<Eigen::Infinity>())) break;
    t *= 1.5;
  }
  return fit;
}

DispersionEstimate estimate_dispersion(const Dataset& d, const QuasiFamily& fam, const DispersionMode& mode,
                                       std::uint64_t seed, const BitVector* forced_in) {
  DispersionEstimate est;
  const std::size_t n = d.n();
  const std::size_t p = d.p();

  if (const auto* fixed = std::get_if<FixedDispersion>(&mode)) {
    if (!(fixed->psi > 0.0)) fail(ErrorCode::NonPositiveDispersion, "fixed dispersion must be positive");
    est.psi = fixed->psi;
    return est;
  }

  double pearson = 0.0;
  if (std::holds_alternative<FullModelQmle>(mode)) {
    if (n <= p) {
      fail(ErrorCode::InsufficientSamples,
           "dispersion estimation needs n > p (n = " + std::to_string(n) + ", p = " + std::to_string(p) + ")");
    }
    const NewtonResult fit = fit_full_qmle(d, fam);
    est.beta_hat = fit.beta;
    est.dof_used = p;
    pearson = pearson_statistic(d.y, fitted_mean(d.X, fit.beta, fam), fam);
  } else {
    const auto& l1 = std::get<L1Regularized>(mode);
    if (n <= 1) fail(ErrorCode::InsufficientSamples, "lasso dispersion needs n > 1");
    if (fam.kind() == FamilyKind::NegBinLog)
      fail(ErrorCode::WrongFamily, "lasso dispersion supports linear and Poisson families");
    std::vector<bool> unpen(p, false);
    if (forced_in)
      for (std::size_t j = 0; j < p; ++j) unpen[j] = forced_in->test(j);

    // Start from the fit of the unpenalised columns alone.
    VectorXd base = VectorXd::Zero(static_cast<Eigen::Index>(p));
    std::vector<std::size_t> unpen_idx;
    for (std::size_t j = 0; j < p; ++j)
      if (unpen[j]) unpen_idx.push_back(j);
    if (!unpen_idx.empty()) {
      const NewtonResult f0 = newton_maximize(d.y, submatrix(d.X, unpen_idx), 1.0, fam, 0.0,
                                              VectorXd::Zero(static_cast<Eigen::Index>(unpen_idx.size())), {});
      for (std::size_t k = 0; k < unpen_idx.size(); ++k)
        base[static_cast<Eigen::Index>(unpen_idx[k])] = f0.beta[static_cast<Eigen::Index>(k)];
    }
    const VectorXd g0 = lasso_grad(d.y, d.X, base, fam);
    double lambda_max = 0.0;
    for (std::size_t j = 0; j < p; ++j)
      if (!unpen[j]) lambda_max = std::max(lambda_max, std::abs(g0[static_cast<Eigen::Index>(j)]));
    if (lambda_max <= 0.0) lambda_max = 1.0;
    std::vector<double> grid(l1.grid_size);
    for (std::size_t i = 0; i < l1.grid_size; ++i) {
      const double frac = l1.grid_size == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(l1.grid_size - 1);
      grid[i] = lambda_max * std::pow(10.0, -3.0 * frac);
    }

    CounterRng rng(seed, hash_string("l1-dispersion-cv"));
    const auto perm = random_permutation(n, rng);
    std::vector<std::size_t> fold(n);
    for (std::size_t r = 0; r < n; ++r) fold[perm[r]] = r % l1.folds;

    std::vector<double> cv_loss(grid.size(), 0.0);
    for (std::size_t f = 0; f < l1.folds; ++f) {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
      if (train.empty() || test.empty()) continue;
      const Dataset tr = d.subset_rows(train);
      const Dataset te = d.subset_rows(test);
      VectorXd warm = base;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        warm = lasso_ista(tr.y, tr.X, fam, grid[g], unpen, warm).beta;
        cv_loss[g] += holdout_loss(te.y, fitted_mean(te.X, warm, fam), fam) * static_cast<double>(test.size());
      }
    }
    const auto best = static_cast<std::size_t>(std::min_element(cv_loss.begin(), cv_loss.end()) - cv_loss.begin());
    est.lambda = grid[best];
    VectorXd warm = base;
    for (std::size_t g = 0; g <= best; ++g) warm = lasso_ista(d.y, d.X, fam, grid[g], unpen, warm).beta;
    est.beta_hat = warm;
    std::size_t nonzero = 0;
    for (Eigen::Index j = 0; j < warm.size(); ++j)
      if (warm[j] != 0.0) ++nonzero;
    est.dof_used = nonzero;
    if (n <= nonzero) fail(ErrorCode::InsufficientSamples, "lasso fit keeps as many coefficients as observations");
    pearson = pearson_statistic(d.y, fitted_mean(d.X, warm, fam), fam);
  }

  est.psi = pearson / static_cast<double>(n - est.dof_used);
  if (!(est.psi >= kMinDispersion)) {
    est.psi = kMinDispersion;
    est.exact_fit_clamped = true;
  }
  return est;
}

double nb_theta_from_fit(const VectorXd& y, const VectorXd& mu, double dof) {
  auto excess = [&](double theta) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double r = y[i] - mu[i];
      s += r * r / (mu[i] + mu[i] * mu[i] / theta);
    }
    return s - dof;
  };
  if (excess(kThetaUpper) < 0.0) return kThetaUpper;
  if (excess(kThetaLower) > 0.0) return kThetaLower;
  double lo = std::log(kThetaLower), hi = std::log(kThetaUpper);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (excess(std::exp(mid)) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

double estimate_nb_theta(const Dataset& d) {
  const std::size_t n = d.n(), p = d.p();
  if (n <= p) fail(ErrorCode::InsufficientSamples, "theta estimation needs n > p");
  for (Eigen::Index i = 0; i < d.y.size(); ++i)
    if (d.y[i] < 0.0) fail(ErrorCode::InvalidArgument, "negative binomial responses must be non-negative counts");
  const auto fam = QuasiFamily::poisson();
  const NewtonResult fit = fit_full_qmle(d, fam);
  return nb_theta_from_fit(d.y, fitted_mean(d.X, fit.beta, fam), static_cast<double>(n - p));
}

}  // namespace qpvs
