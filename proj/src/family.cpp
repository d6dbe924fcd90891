#include "qpvs/family.hpp"

#include <cmath>

#include "qpvs/error.hpp"

namespace qpvs {

namespace {

// log(theta + exp(eta)) without overflow.
double log_theta_plus_exp(double log_theta, double eta) {
  const double hi = std::max(log_theta, eta);
  const double lo = std::min(log_theta, eta);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace

QuasiFamily QuasiFamily::negbin(double theta) {
  if (!(theta > 0.0) || !std::isfinite(theta)) fail(ErrorCode::InvalidArgument, "negative binomial theta must be positive");
  return QuasiFamily(FamilyKind::NegBinLog, theta);
}

std::string QuasiFamily::name() const {
  switch (kind_) {
    case FamilyKind::LinearIdentity: return "linear";
    case FamilyKind::PoissonLog: return "poisson";
    case FamilyKind::NegBinLog: return "negbin";
  }
  return "unknown";
}

double QuasiFamily::mu(double s) const { return kind_ == FamilyKind::LinearIdentity ? s : std::exp(s); }
double QuasiFamily::mu_d1(double s) const { return kind_ == FamilyKind::LinearIdentity ? 1.0 : std::exp(s); }
double QuasiFamily::mu_d2(double s) const { return kind_ == FamilyKind::LinearIdentity ? 0.0 : std::exp(s); }

double QuasiFamily::variance(double t) const {
  switch (kind_) {
    case FamilyKind::LinearIdentity: return 1.0;
    case FamilyKind::PoissonLog: return t;
    case FamilyKind::NegBinLog: return t + t * t / theta_;
  }
  return 1.0;
}

double QuasiFamily::variance_d1(double t) const {
  switch (kind_) {
    case FamilyKind::LinearIdentity: return 0.0;
    case FamilyKind::PoissonLog: return 1.0;
    case FamilyKind::NegBinLog: return 1.0 + 2.0 * t / theta_;
  }
  return 0.0;
}

KernelTerms QuasiFamily::kernel(double y, double eta) const {
  KernelTerms k{};
  switch (kind_) {
    case FamilyKind::LinearIdentity:
      k = {y * eta - 0.5 * eta * eta, y - eta, -1.0};
      break;
    case FamilyKind::PoissonLog: {
      const double m = std::exp(eta);
      k = {y * eta - m, y - m, -m};
      break;
    }
    case FamilyKind::NegBinLog: {
      const double log_theta = std::log(theta_);
      const double lse = log_theta_plus_exp(log_theta, eta);
      // q = mu / (theta + mu), computed in log space.
      const double q = std::exp(eta - lse);
      k = {y * eta - (y + theta_) * lse, y - (y + theta_) * q, -(y + theta_) * q * (1.0 - q)};
      break;
    }
  }
  if (kernel_constant) k.value += kernel_constant(y);
  return k;
}

double QuasiFamily::fisher_weight(double eta) const {
  switch (kind_) {
    case FamilyKind::LinearIdentity: return 1.0;
    case FamilyKind::PoissonLog: return std::exp(eta);
    case FamilyKind::NegBinLog: {
      // mu * theta / (theta + mu)
      const double lse = log_theta_plus_exp(std::log(theta_), eta);
      return theta_ * std::exp(eta - lse);
    }
  }
  return 1.0;
}

double QuasiFamily::concavity_residual(double s) const {
  const double m = mu(s);
  const double d1 = mu_d1(s);
  return variance_d1(m) / variance(m) * d1 * d1 - mu_d2(s);
}

}  // namespace qpvs
