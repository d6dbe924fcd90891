#pragma once

#include "qpvs/core.hpp"
#include "qpvs/family.hpp"

namespace qpvs {

/// Total quasi-log-likelihood n*Q_n with its analytic derivatives in beta_gamma.
struct QuasiEval {
  double value = 0.0;
  VectorXd gradient;
  /// -Hessian of n*Q_n: X' D X / psi with the observed weights.
  MatrixXd neg_hessian;
  /// Expected-information version with weights mu'^2 / V.
  MatrixXd fisher_neg_hessian;
};

/// n*Q_n(y, X_gamma; beta_gamma, psi).
double quasi_loglik(const Dataset& d, const ModelIndicator& gamma, const VectorXd& beta_gamma, double psi,
                    const QuasiFamily& fam);

QuasiEval quasi_eval(const Dataset& d, const ModelIndicator& gamma, const VectorXd& beta_gamma, double psi,
                     const QuasiFamily& fam);

/// Same quantities on an explicit sub-design; the gamma overloads forward here.
double quasi_loglik(const VectorXd& y, const MatrixXd& Xg, const VectorXd& beta, double psi,
                    const QuasiFamily& fam);
QuasiEval quasi_eval(const VectorXd& y, const MatrixXd& Xg, const VectorXd& beta, double psi,
                     const QuasiFamily& fam);

struct NewtonOptions {
  double tol = 1e-8;
  std::size_t max_iter = 100;
};

struct NewtonResult {
  VectorXd beta;
  double objective = 0.0;
  double grad_inf_norm = 0.0;
  std::size_t iters = 0;
  bool converged = false;
};

/// Maximises n*Q_n - ridge/2 * |beta|^2 by Newton steps with step halving. The
/// Fisher information is used for canonical links and as the NB fallback when the
/// observed Hessian does not factorise. ridge = 1/s^2 gives the MAP under the
/// Gaussian slab; ridge = 0 gives the quasi-MLE.
/// Convergence: |grad|_inf <= tol * (1 + |objective|).
/// Throws OptimizerDiverged if the cap is hit with |grad|_inf > 1e3 * that bound.
NewtonResult newton_maximize(const VectorXd& y, const MatrixXd& Xg, double psi, const QuasiFamily& fam,
                             double ridge, const VectorXd& start, const NewtonOptions& opt);

/// Quasi-MLE of the full model (all columns) at psi = 1.
NewtonResult fit_full_qmle(const Dataset& d, const QuasiFamily& fam, const NewtonOptions& opt = {});

/// mu(X beta) elementwise.
VectorXd fitted_mean(const MatrixXd& X, const VectorXd& beta, const QuasiFamily& fam);

/// Pearson statistic sum (y - mu)^2 / V(mu).
double pearson_statistic(const VectorXd& y, const VectorXd& mu, const QuasiFamily& fam);

struct DispersionEstimate {
  double psi = 1.0;
  /// The Pearson sum was zero and psi was clamped at 1e-10.
  bool exact_fit_clamped = false;
  /// Number of coefficients counted in the n - k divisor.
  std::size_t dof_used = 0;
  VectorXd beta_hat;
  /// L1 mode only: the penalty picked by cross-validation.
  double lambda = 0.0;
};

inline constexpr double kMinDispersion = 1e-10;

/// Pearson dispersion estimate. FullModelQmle divides by n - p using the
/// full-model quasi-MLE; L1Regularized uses a cross-validated lasso fit and
/// divides by n - (number of nonzero coefficients); FixedDispersion echoes psi.
/// forced_in columns are left unpenalised by the lasso.
DispersionEstimate estimate_dispersion(const Dataset& d, const QuasiFamily& fam, const DispersionMode& mode,
                                       std::uint64_t seed = 1, const BitVector* forced_in = nullptr);

/// theta solving sum (y - mu)^2 / (mu + mu^2/theta) = n - p for the full-model
/// Poisson fit, by bisection on [1e-3, 1e6]; 1e6 when no root exists.
double estimate_nb_theta(const Dataset& d);
/// Same root-finding for an arbitrary fitted mean and divisor.
double nb_theta_from_fit(const VectorXd& y, const VectorXd& mu, double dof);

inline constexpr double kThetaLower = 1e-3;
inline constexpr double kThetaUpper = 1e6;

struct LassoFit {
  VectorXd beta;
  std::size_t iters = 0;
};

/// Proximal gradient (ISTA with backtracking) for
/// -(1/n) sum kernel + lambda * sum_{j not in unpenalized} |beta_j|.
/// LinearIdentity and PoissonLog only.
LassoFit lasso_ista(const VectorXd& y, const MatrixXd& X, const QuasiFamily& fam, double lambda,
                    const std::vector<bool>& unpenalized, const VectorXd& start, double tol = 1e-9,
                    std::size_t max_iter = 20000);

}  // namespace qpvs
