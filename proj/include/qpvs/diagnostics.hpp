#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "qpvs/core.hpp"
#include "qpvs/simbench.hpp"

namespace qpvs {

/// Model-implied variance as a function of the (bin-averaged) fitted mean.
struct VarianceRule {
  enum class Kind { Poisson, NegBin, QuasiPoisson, Homoskedastic };
  Kind kind = Kind::Poisson;
  /// theta for NegBin, psi for QuasiPoisson and Homoskedastic.
  double param = 1.0;

  double operator()(double mean) const;
  static VarianceRule for_method(const Method& m, double psi, double theta);
};

struct FittedModel {
  std::string label;
  VectorXd fitted_mean;
  VarianceRule variance;
};

struct BinSummary {
  std::size_t index = 0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double y_mean = 0.0;
  double y_var = 0.0;
  /// Per model, in input order.
  std::vector<double> model_mean;
  std::vector<double> model_var;
};

struct AdequacyScores {
  std::string label;
  double mean_mse = 0.0;
  double mean_mae = 0.0;
  double var_mse = 0.0;
  double var_mae = 0.0;
};

struct BinnedDiagnostic {
  /// Neutral index per observation.
  VectorXd index;
  std::vector<double> edges;
  std::vector<BinSummary> bins;
  std::vector<AdequacyScores> scores;
};

inline constexpr std::size_t kMinBinCount = 20;
inline constexpr std::size_t kMinBins = 3;

/// Type-7 empirical quantile of sorted data.
double quantile_type7(const std::vector<double>& sorted, double prob);

/// Bins observations on deciles of the neutral index (mean of the supplied
/// fitted means), drops bins with fewer than 20 observations, and scores each
/// model's bin-averaged mean and implied variance against the empirical ones.
BinnedDiagnostic binned_mean_variance(const Dataset& d, const std::vector<FittedModel>& models);

struct FittedMethod {
  FittedModel model;
  ModelIndicator gamma;
  /// Length p, zero outside gamma.
  VectorXd beta;
  FamilyKind family = FamilyKind::PoissonLog;
  double psi = 1.0;
  double theta = 0.0;

  /// Fitted mean on new rows.
  VectorXd predict(const MatrixXd& X) const;
};

/// Selection on the training data followed by a MAP refit on the selected model.
/// psi (QP) and theta (NB) for the variance rule are re-estimated from the
/// refitted model.
FittedMethod fit_for_diagnostics(const Dataset& train, const Method& method, const PriorConfig& prior,
                                 const RunConfig& run, const BitVector& forced_in, SelectionRule rule);

struct WmseRow {
  std::string label;
  double mean = 0.0;
  double se = 0.0;
  std::vector<double> per_fold;
};

/// Folds stratified on the response: observations sorted by y are dealt in
/// blocks of `folds`, each block receiving a random permutation of fold labels.
std::vector<std::size_t> stratified_folds(const VectorXd& y, std::size_t folds, std::uint64_t seed);

/// Held-out variance-weighted MSE per method. Requires n >= 6 * folds.
std::vector<WmseRow> cv_wmse(const Dataset& d, const std::vector<Method>& methods, std::size_t folds,
                             std::uint64_t seed, const PriorConfig& prior, const RunConfig& run,
                             const BitVector& forced_in, SelectionRule rule);

/// WMSE = mean (y - mu)^2 / V(mu).
double wmse(const VectorXd& y, const VectorXd& mu, const VarianceRule& rule);

/// One row per surviving bin per model.
void write_bins_csv(std::ostream& os, const BinnedDiagnostic& diag, const std::vector<FittedModel>& models);

}  // namespace qpvs
