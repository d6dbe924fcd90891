#include "qpvs/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qpvs/error.hpp"
#include "qpvs/io.hpp"
#include "qpvs/marginal.hpp"
#include "qpvs/quasilik.hpp"

namespace qpvs {

double VarianceRule::operator()(double mean) const {
  switch (kind) {
    case Kind::Poisson: return mean;
    case Kind::NegBin: return mean + mean * mean / param;
    case Kind::QuasiPoisson: return param * mean;
    case Kind::Homoskedastic: return param;
  }
  return mean;
}

VarianceRule VarianceRule::for_method(const Method& m, double psi, double theta) {
  switch (m.kind) {
    case MethodKind::PoissonLikelihood: return {Kind::Poisson, 1.0};
    case MethodKind::NegBinQuasi: return {Kind::NegBin, theta};
    case MethodKind::QuasiPosterior:
      if (m.family == FamilyKind::LinearIdentity) return {Kind::Homoskedastic, psi};
      return {Kind::QuasiPoisson, psi};
  }
  return {};
}

double quantile_type7(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) fail(ErrorCode::InvalidArgument, "quantile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BinnedDiagnostic binned_mean_variance(const Dataset& d, const std::vector<FittedModel>& models) {
  if (models.empty()) fail(ErrorCode::InvalidArgument, "at least one fitted model is required");
  const auto n = d.y.size();
  for (const auto& m : models)
    if (m.fitted_mean.size() != n)
      fail(ErrorCode::LengthMismatch, "fitted mean of '" + m.label + "' does not match the number of rows");

  BinnedDiagnostic out;
  out.index.resize(n);
  // Summing in sorted order keeps the index independent of model order.
  std::vector<double> vals(models.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < models.size(); ++m) vals[m] = models[m].fitted_mean[i];
    std::sort(vals.begin(), vals.end());
    out.index[i] = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(models.size());
  }

  std::vector<double> sorted(out.index.data(), out.index.data() + n);
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k <= 10; ++k) out.edges.push_back(quantile_type7(sorted, k / 10.0));

  std::vector<std::vector<Eigen::Index>> members(10);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto pos = std::upper_bound(out.edges.begin() + 1, out.edges.end() - 1, out.index[i]);
    members[static_cast<std::size_t>(pos - (out.edges.begin() + 1))].push_back(i);
  }

  for (std::size_t b = 0; b < members.size(); ++b) {
    const auto& rows = members[b];
    if (rows.size() < kMinBinCount) continue;
    BinSummary bin;
    bin.index = b;
    bin.lower = out.edges[b];
    bin.upper = out.edges[b + 1];
    bin.count = rows.size();
    const auto cnt = static_cast<double>(rows.size());
    double sy = 0.0;
    for (auto i : rows) sy += d.y[i];
    bin.y_mean = sy / cnt;
    double ss = 0.0;
    for (auto i : rows) ss += (d.y[i] - bin.y_mean) * (d.y[i] - bin.y_mean);
    bin.y_var = ss / (cnt - 1.0);
    for (const auto& m : models) {
      double sm = 0.0;
      for (auto i : rows) sm += m.fitted_mean[i];
      const double mean = sm / cnt;
      bin.model_mean.push_back(mean);
      bin.model_var.push_back(m.variance(mean));
    }
    out.bins.push_back(std::move(bin));
  }
  if (out.bins.size() < kMinBins)
    fail(ErrorCode::TooFewBins, std::to_string(out.bins.size()) + " bins have at least " +
                                    std::to_string(kMinBinCount) + " observations; need " + std::to_string(kMinBins));

  const auto K = static_cast<double>(out.bins.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    AdequacyScores s;
    s.label = models[m].label;
    for (const auto& bin : out.bins) {
      const double em = bin.y_mean - bin.model_mean[m];
      const double ev = bin.y_var - bin.model_var[m];
      s.mean_mse += em * em / K;
      s.mean_mae += std::abs(em) / K;
      s.var_mse += ev * ev / K;
      s.var_mae += std::abs(ev) / K;
    }
    out.scores.push_back(std::move(s));
  }
  return out;
}

VectorXd FittedMethod::predict(const MatrixXd& X) const {
  const VectorXd eta = X * beta;
  if (family == FamilyKind::LinearIdentity) return eta;
  return eta.array().exp().matrix();
}

FittedMethod fit_for_diagnostics(const Dataset& train, const Method& method, const PriorConfig& prior,
                                 const RunConfig& run, const BitVector& forced_in, SelectionRule rule) {
  const ReplicateReport rep = run_method(train, method, prior, run, forced_in);
  const SelectionResult& sel = rule == SelectionRule::MedianProbability ? rep.median.selection : rep.bfdr.selection;

  FittedMethod fm;
  fm.gamma = ModelIndicator::forced_only(forced_in);
  for (std::size_t j = 0; j < sel.selected.size(); ++j)
    if (sel.selected[j]) fm.gamma.bits.set(j);

  QuasiFamily fam = QuasiFamily::poisson();
  if (method.kind == MethodKind::NegBinQuasi) fam = QuasiFamily::negbin(rep.theta_used);
  if (method.kind == MethodKind::QuasiPosterior && method.family == FamilyKind::LinearIdentity)
    fam = QuasiFamily::linear();
  fm.family = fam.kind();

  const auto active = fm.gamma.active();
  fm.beta = VectorXd::Zero(static_cast<Eigen::Index>(train.p()));
  if (!active.empty()) {
    const MapEstimate map = map_estimate(train, fm.gamma, rep.psi_used, fam, prior, std::nullopt,
                                         {run.newton_tol, run.newton_max_iter});
    for (std::size_t k = 0; k < active.size(); ++k)
      fm.beta[static_cast<Eigen::Index>(active[k])] = map.beta[static_cast<Eigen::Index>(k)];
  }
  const VectorXd mu = fm.predict(train.X);
  const double dof = static_cast<double>(train.n()) - static_cast<double>(active.size());
  if (!(dof > 0.0)) fail(ErrorCode::InsufficientSamples, "selected model leaves no residual degrees of freedom");

  fm.psi = rep.psi_used;
  fm.theta = rep.theta_used;
  if (method.kind == MethodKind::QuasiPosterior) {
    const QuasiFamily base = fam.kind() == FamilyKind::LinearIdentity ? QuasiFamily::linear() : QuasiFamily::poisson();
    fm.psi = std::max(pearson_statistic(train.y, mu, base) / dof, kMinDispersion);
  } else if (method.kind == MethodKind::NegBinQuasi) {
    fm.theta = nb_theta_from_fit(train.y, mu, dof);
  }
  fm.model = {method.label(), mu, VarianceRule::for_method(method, fm.psi, fm.theta)};
  return fm;
}

std::vector<std::size_t> stratified_folds(const VectorXd& y, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) fail(ErrorCode::InvalidArgument, "need at least two folds");
  const auto n = static_cast<std::size_t>(y.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return y[static_cast<Eigen::Index>(a)] < y[static_cast<Eigen::Index>(b)];
  });
  CounterRng rng(seed, hash_string("cv-folds"));
  std::vector<std::size_t> fold(n);
  for (std::size_t start = 0; start < n; start += folds) {
    const auto labels = random_permutation(folds, rng);
    for (std::size_t k = 0; k < folds && start + k < n; ++k) fold[order[start + k]] = labels[k];
  }
  return fold;
}

double wmse(const VectorXd& y, const VectorXd& mu, const VarianceRule& rule) {
  if (y.size() != mu.size()) fail(ErrorCode::LengthMismatch, "y and fitted mean differ in length");
  if (y.size() == 0) fail(ErrorCode::InvalidArgument, "WMSE of an empty sample");
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = y[i] - mu[i];
    s += r * r / rule(mu[i]);
  }
  return s / static_cast<double>(y.size());
}

std::vector<WmseRow> cv_wmse(const Dataset& d, const std::vector<Method>& methods, std::size_t folds,
                             std::uint64_t seed, const PriorConfig& prior, const RunConfig& run,
                             const BitVector& forced_in, SelectionRule rule) {
  if (folds < 2) fail(ErrorCode::InvalidArgument, "need at least two folds");
  if (d.n() < 6 * folds)
    fail(ErrorCode::InsufficientSamples, "cross-validation with " + std::to_string(folds) + " folds needs n >= " +
                                             std::to_string(6 * folds) + " (n = " + std::to_string(d.n()) + ")");
  if (methods.empty()) fail(ErrorCode::InvalidArgument, "no methods given");
  const auto assign = stratified_folds(d.y, folds, seed);

  std::vector<WmseRow> rows(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) rows[m].label = methods[m].label();
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < d.n(); ++i) (assign[i] == f ? te : tr).push_back(i);
    const Dataset train = d.subset_rows(tr);
    const Dataset test = d.subset_rows(te);
    RunConfig fold_run = run;
    fold_run.seed = derive_seed(seed, {hash_string("cv-fit"), static_cast<std::uint64_t>(f)});
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const FittedMethod fm = fit_for_diagnostics(train, methods[m], prior, fold_run, forced_in, rule);
      rows[m].per_fold.push_back(wmse(test.y, fm.predict(test.X), fm.model.variance));
    }
  }
  for (auto& r : rows) {
    const auto K = static_cast<double>(r.per_fold.size());
    r.mean = std::accumulate(r.per_fold.begin(), r.per_fold.end(), 0.0) / K;
    double ss = 0.0;
    for (double v : r.per_fold) ss += (v - r.mean) * (v - r.mean);
    r.se = std::sqrt(ss / (K - 1.0)) / std::sqrt(K);
  }
  return rows;
}

void write_bins_csv(std::ostream& os, const BinnedDiagnostic& diag, const std::vector<FittedModel>& models) {
  os << "model,bin,lower,upper,count,y_mean,y_var,model_mean,model_var\n";
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (const auto& b : diag.bins) {
      os << models[m].label << ',' << b.index << ',' << format_double(b.lower) << ',' << format_double(b.upper) << ','
         << b.count << ',' << format_double(b.y_mean) << ',' << format_double(b.y_var) << ','
         << format_double(b.model_mean[m]) << ',' << format_double(b.model_var[m]) << '\n';
    }
  }
}

}  // namespace qpvs
