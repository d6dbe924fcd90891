#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qpvs/bits.hpp"

namespace qpvs {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Response vector and design matrix. Counts are stored as reals.
struct Dataset {
  VectorXd y;
  MatrixXd X;
  std::vector<std::string> column_names;

  std::size_t n() const noexcept { return static_cast<std::size_t>(y.size()); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(X.cols()); }

  /// Rows selected by index, all columns.
  Dataset subset_rows(const std::vector<std::size_t>& rows) const;
};

/// Throws NonFinite, DimensionMismatch, DuplicateColumnName or
/// TooManyPredictors; returns the input unchanged otherwise.
const Dataset& validate_dataset(const Dataset& d);

/// Sub-design X_gamma, columns in increasing index order.
MatrixXd submatrix(const MatrixXd& X, const std::vector<std::size_t>& cols);

struct FixedSparsity {
  double w = 0.5;
};
struct BetaBinomialSparsity {
  double a = 1.0;
  double b = 1.0;
};

/// Gaussian slab variance and the prior on the inclusion probability w.
struct PriorConfig {
  double slab_variance = 9.0;
  std::variant<FixedSparsity, BetaBinomialSparsity> sparsity = BetaBinomialSparsity{};

  bool fixed_w() const noexcept { return std::holds_alternative<FixedSparsity>(sparsity); }
  void validate() const;
};

struct FullModelQmle {};
struct L1Regularized {
  std::size_t folds = 5;
  std::size_t grid_size = 20;
};
struct FixedDispersion {
  double psi = 1.0;
};
using DispersionMode = std::variant<FullModelQmle, L1Regularized, FixedDispersion>;

struct RunConfig {
  std::size_t sweeps = 3000;
  std::size_t burn_in = 1500;
  std::uint64_t seed = 1;
  double fdr_alpha = 0.05;
  double newton_tol = 1e-8;
  std::size_t newton_max_iter = 100;
  std::optional<std::size_t> cache_cap;
  DispersionMode dispersion = FullModelQmle{};

  void validate() const;
};

}  // namespace qpvs
