#include "qpvs/core.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "qpvs/error.hpp"

namespace qpvs {

const Dataset& validate_dataset(const Dataset& d) {
  const auto n = d.y.size();
  if (d.X.rows() != n) {
    std::ostringstream msg;
    msg << "y has " << n << " entries but X has " << d.X.rows() << " rows";
    fail(ErrorCode::DimensionMismatch, msg.str());
  }
  if (n < 1 || d.X.cols() < 1) fail(ErrorCode::DimensionMismatch, "dataset needs n >= 1 and p >= 1");
  if (d.column_names.size() != d.p()) {
    std::ostringstream msg;
    msg << d.column_names.size() << " column names for " << d.p() << " predictors";
    fail(ErrorCode::DimensionMismatch, msg.str());
  }
  if (d.p() > kMaxPredictors)
    fail(ErrorCode::TooManyPredictors, "at most " + std::to_string(kMaxPredictors) + " predictors supported");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(d.y[i])) {
      throw Error(ErrorCode::NonFinite, "non-finite response y at row " + std::to_string(i),
                  static_cast<std::size_t>(i), std::nullopt);
    }
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) {
      if (!std::isfinite(d.X(i, j))) {
        std::ostringstream msg;
        msg << "non-finite value at row " << i << ", column " << j << " (" << d.column_names[j] << ")";
        throw Error(ErrorCode::NonFinite, msg.str(), static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      }
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& name : d.column_names)
    if (!seen.insert(name).second) fail(ErrorCode::DuplicateColumnName, "duplicate column name '" + name + "'");
  return d;
}

Dataset Dataset::subset_rows(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(rows[r]);
    out.y[static_cast<Eigen::Index>(r)] = y[i];
    out.X.row(static_cast<Eigen::Index>(r)) = X.row(i);
  }
  out.column_names = column_names;
  return out;
}

MatrixXd submatrix(const MatrixXd& X, const std::vector<std::size_t>& cols) {
  MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(cols[k]));
  return out;
}

void PriorConfig::validate() const {
  if (!(slab_variance > 0.0) || !std::isfinite(slab_variance))
    fail(ErrorCode::InvalidArgument, "slab variance must be positive");
  if (const auto* fw = std::get_if<FixedSparsity>(&sparsity)) {
    if (!(fw->w > 0.0 && fw->w < 1.0)) fail(ErrorCode::InvalidArgument, "fixed w must lie strictly inside (0, 1)");
  } else {
    const auto& bb = std::get<BetaBinomialSparsity>(sparsity);
    if (!(bb.a > 0.0) || !(bb.b > 0.0)) fail(ErrorCode::InvalidArgument, "Beta hyperparameters must be positive");
  }
}

void RunConfig::validate() const {
  if (sweeps < 1) fail(ErrorCode::InvalidArgument, "sweeps must be positive");
  if (burn_in >= sweeps) fail(ErrorCode::InvalidArgument, "burn-in must be smaller than the number of sweeps");
  if (!(fdr_alpha > 0.0 && fdr_alpha < 1.0)) fail(ErrorCode::InvalidArgument, "FDR alpha must lie in (0, 1)");
  if (!(newton_tol > 0.0)) fail(ErrorCode::InvalidArgument, "Newton tolerance must be positive");
  if (newton_max_iter < 1) fail(ErrorCode::InvalidArgument, "Newton iteration cap must be positive");
  if (cache_cap && *cache_cap < 1) fail(ErrorCode::InvalidArgument, "cache cap must be positive");
  if (const auto* fd = std::get_if<FixedDispersion>(&dispersion)) {
    if (!(fd->psi > 0.0)) fail(ErrorCode::NonPositiveDispersion, "fixed dispersion must be positive");
  }
  if (const auto* l1 = std::get_if<L1Regularized>(&dispersion)) {
    if (l1->folds < 2 || l1->grid_size < 1) fail(ErrorCode::InvalidArgument, "L1 dispersion needs >= 2 folds");
  }
}

}  // namespace qpvs
