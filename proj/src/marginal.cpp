#include "qpvs/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "qpvs/error.hpp"

namespace qpvs {

double log_slab_density(const VectorXd& beta, double slab_variance) {
  const double k = static_cast<double>(beta.size());
  return -0.5 * k * std::log(2.0 * std::numbers::pi * slab_variance) - beta.squaredNorm() / (2.0 * slab_variance);
}

MapEstimate map_estimate(const Dataset& d, const ModelIndicator& gamma, double psi, const QuasiFamily& fam,
                         const PriorConfig& prior, const std::optional<VectorXd>& warm_start,
                         const NewtonOptions& opt) {
  if (gamma.p() != d.p()) fail(ErrorCode::DimensionMismatch, "model indicator length differs from p");
  if (!(psi > 0.0)) fail(ErrorCode::NonPositiveDispersion, "dispersion must be positive");
  MapEstimate out;
  const auto active = gamma.active();
  const auto k = static_cast<Eigen::Index>(active.size());
  if (k == 0) {
    out.beta = VectorXd();
    out.chol_lower = MatrixXd();
    return out;
  }
  const MatrixXd Xg = submatrix(d.X, active);
  const double ridge = 1.0 / prior.slab_variance;
  const VectorXd start = (warm_start && warm_start->size() == k) ? *warm_start : VectorXd::Zero(k);
  const NewtonResult nr = newton_maximize(d.y, Xg, psi, fam, ridge, start, opt);
  out.beta = nr.beta;
  out.iters = nr.iters;

  MatrixXd M = quasi_eval(d.y, Xg, nr.beta, psi, fam).neg_hessian;
  M.diagonal().array() += ridge;
  Eigen::LLT<MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    double jitter = 1e-8 * std::abs(M.trace()) / static_cast<double>(k);
    bool ok = false;
    for (int attempt = 0; attempt <= 6 && !ok; ++attempt, jitter *= 2.0) {
      llt.compute(M + jitter * MatrixXd::Identity(k, k));
      ok = llt.info() == Eigen::Success;
    }
    if (!ok) fail(ErrorCode::SingularHessian, "negative Hessian at the mode is not positive definite");
    out.jittered = true;
  }
  out.chol_lower = llt.matrixL();
  out.logdet_M = 2.0 * out.chol_lower.diagonal().array().log().sum();
  return out;
}

ClosedFormParts closed_form_from_gram(const MatrixXd& gram, const VectorXd& xty,
                                      const std::vector<std::size_t>& active, double psi, double slab_variance) {
  if (!(psi > 0.0)) fail(ErrorCode::NonPositiveDispersion, "dispersion must be positive");
  ClosedFormParts out;
  const auto k = static_cast<Eigen::Index>(active.size());
  if (k == 0) {
    out.mode = VectorXd();
    return out;
  }
  MatrixXd U(k, k);
  VectorXd b(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    b[r] = xty[static_cast<Eigen::Index>(active[static_cast<std::size_t>(r)])];
    for (Eigen::Index c = 0; c < k; ++c)
      U(r, c) = gram(static_cast<Eigen::Index>(active[static_cast<std::size_t>(r)]),
                     static_cast<Eigen::Index>(active[static_cast<std::size_t>(c)]));
  }
  U.diagonal().array() += psi / slab_variance;
  Eigen::LLT<MatrixXd> llt(U);
  if (llt.info() != Eigen::Success) fail(ErrorCode::SingularU, "Cholesky of U failed; non-finite input?");
  const VectorXd z = llt.matrixL().solve(b);
  out.mode = llt.matrixU().solve(z);
  out.logdet_U = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double kd = static_cast<double>(k);
  out.log_qmarginal = 0.5 * kd * std::log(psi) - 0.5 * kd * std::log(slab_variance) - 0.5 * out.logdet_U +
                      z.squaredNorm() / (2.0 * psi);
  if (!std::isfinite(out.log_qmarginal)) fail(ErrorCode::SingularU, "closed-form marginal is not finite");
  return out;
}

double log_qmarginal_closed_form(const Dataset& d, const ModelIndicator& gamma, double psi,
                                 const PriorConfig& prior, const QuasiFamily& fam) {
  if (fam.kind() != FamilyKind::LinearIdentity)
    fail(ErrorCode::WrongFamily, "closed-form quasi-marginal requires the linear family");
  if (gamma.p() != d.p()) fail(ErrorCode::DimensionMismatch, "model indicator length differs from p");
  const auto active = gamma.active();
  const MatrixXd Xg = submatrix(d.X, active);
  const MatrixXd gram = Xg.transpose() * Xg;
  const VectorXd xty = Xg.transpose() * d.y;
  std::vector<std::size_t> local(active.size());
  for (std::size_t i = 0; i < local.size(); ++i) local[i] = i;
  return closed_form_from_gram(gram, xty, local, psi, prior.slab_variance).log_qmarginal;
}

ModelEvaluation log_qmarginal_laplace(const Dataset& d, const ModelIndicator& gamma, double psi,
                                      const QuasiFamily& fam, const PriorConfig& prior,
                                      const std::optional<VectorXd>& warm_start, const NewtonOptions& opt) {
  const MapEstimate map = map_estimate(d, gamma, psi, fam, prior, warm_start, opt);
  ModelEvaluation ev;
  ev.gamma = gamma;
  ev.map_beta = map.beta;
  ev.logdet_M = map.logdet_M;
  ev.newton_iters = map.iters;
  ev.method = MarginalMethod::Laplace;
  ev.jittered = map.jittered;
  const double k = static_cast<double>(map.beta.size());
  ev.log_qmarginal = quasi_loglik(d, gamma, map.beta, psi, fam) + log_slab_density(map.beta, prior.slab_variance) +
                     0.5 * k * std::log(2.0 * std::numbers::pi) - 0.5 * map.logdet_M;
  return ev;
}

ModelCache::ModelCache(const Dataset& d, double psi, QuasiFamily fam, PriorConfig prior, NewtonOptions newton,
                       std::optional<std::size_t> cap)
    : data_(d), psi_(psi), fam_(std::move(fam)), prior_(std::move(prior)), newton_(newton), cap_(cap) {
  if (!(psi > 0.0)) fail(ErrorCode::NonPositiveDispersion, "dispersion must be positive");
  if (cap_ && *cap_ == 0) fail(ErrorCode::InvalidArgument, "cache cap must be positive");
  if (fam_.kind() == FamilyKind::LinearIdentity && !fam_.kernel_constant) {
    gram_ = d.X.transpose() * d.X;
    xty_ = d.X.transpose() * d.y;
  }
}

const ModelEvaluation* ModelCache::peek(const ModelIndicator& gamma) const {
  const auto it = map_.find(gamma);
  return it == map_.end() ? nullptr : &it->second.eval;
}

ModelEvaluation ModelCache::evaluate(const ModelIndicator& gamma) const {
  if (gamma.p() != data_.p()) fail(ErrorCode::DimensionMismatch, "model indicator length differs from p");
  if (!gamma.respects_forced()) fail(ErrorCode::InvalidArgument, "model drops a forced-in column");
  if (gram_.size() > 0) {
    const auto active = gamma.active();
    const ClosedFormParts cf = closed_form_from_gram(gram_, xty_, active, psi_, prior_.slab_variance);
    ModelEvaluation ev;
    ev.gamma = gamma;
    ev.log_qmarginal = cf.log_qmarginal;
    ev.map_beta = cf.mode;
    ev.logdet_M = cf.logdet_U - static_cast<double>(active.size()) * std::log(psi_);
    ev.method = MarginalMethod::ClosedForm;
    return ev;
  }

  std::optional<VectorXd> warm;
  const auto active = gamma.active();
  for (std::size_t pos = 0; pos < active.size() && !warm; ++pos) {
    const std::size_t j = active[pos];
    if (gamma.is_forced(j)) continue;
    const ModelEvaluation* parent = peek(gamma.with(j, false));
    if (!parent) continue;
    VectorXd start(static_cast<Eigen::Index>(active.size()));
    for (std::size_t q = 0, r = 0; q < active.size(); ++q) {
      if (q == pos) {
        start[static_cast<Eigen::Index>(q)] = 0.0;
      } else {
        start[static_cast<Eigen::Index>(q)] = parent->map_beta[static_cast<Eigen::Index>(r++)];
      }
    }
    warm = std::move(start);
  }
  return log_qmarginal_laplace(data_, gamma, psi_, fam_, prior_, warm, newton_);
}

const ModelEvaluation& ModelCache::get_or_eval(const ModelIndicator& gamma) {
  if (auto it = map_.find(gamma); it != map_.end()) {
    ++stats_.hits;
    lru_.splice(lru_.begin(), lru_, it->second.lru_pos);
    return it->second.eval;
  }
  ++stats_.misses;
  ModelEvaluation ev = evaluate(gamma);
  stats_.newton_iters += ev.newton_iters;
  lru_.push_front(gamma);
  auto [it, inserted] = map_.emplace(gamma, Slot{std::move(ev), lru_.begin()});
  if (cap_ && map_.size() > *cap_) {
    const ModelIndicator victim = lru_.back();
    lru_.pop_back();
    map_.erase(victim);
    ++stats_.evictions;
  }
  return it->second.eval;
}

void ModelCache::dump_jsonl(std::ostream& os) const {
  std::vector<const ModelEvaluation*> entries;
  entries.reserve(map_.size());
  for (const auto& [key, slot] : map_) entries.push_back(&slot.eval);
  std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->gamma < b->gamma; });
  for (const auto* e : entries) {
    nlohmann::json j;
    j["gamma"] = e->gamma.bits.to_hex();
    j["log_qmarginal"] = e->log_qmarginal;
    j["beta"] = std::vector<double>(e->map_beta.data(), e->map_beta.data() + e->map_beta.size());
    j["method"] = e->method == MarginalMethod::ClosedForm ? "closed_form" : "laplace";
    os << j.dump() << '\n';
  }
}

}  // namespace qpvs
