#pragma once

#include <functional>
#include <string>

namespace qpvs {

enum class FamilyKind { LinearIdentity, PoissonLog, NegBinLog };

/// Per-observation kernel value and its first two derivatives in the linear
/// predictor eta, at unit dispersion.
struct KernelTerms {
  double value;
  double d1;
  double d2;
};

/// Mean and variance functions of a quasi-likelihood GLM.
///
/// The kernel is the integral of (y - t) / V(t) from an arbitrary constant to
/// mu(eta), with the constant dropped:
///   LinearIdentity  y*eta - eta^2/2
///   PoissonLog      y*eta - exp(eta)
///   NegBinLog       y*eta - (y + theta) * log(theta + exp(eta))
class QuasiFamily {
 public:
  static QuasiFamily linear() { return QuasiFamily(FamilyKind::LinearIdentity, 0.0); }
  static QuasiFamily poisson() { return QuasiFamily(FamilyKind::PoissonLog, 0.0); }
  static QuasiFamily negbin(double theta);

  FamilyKind kind() const noexcept { return kind_; }
  double theta() const noexcept { return theta_; }
  std::string name() const;

  double mu(double s) const;
  double mu_d1(double s) const;
  double mu_d2(double s) const;
  double variance(double t) const;
  double variance_d1(double t) const;

  KernelTerms kernel(double y, double eta) const;

  /// mu'(eta)^2 / V(mu(eta)): the expected-information weight.
  double fisher_weight(double eta) const;

  /// V'/V * mu'^2 - mu'' vanishes identically for the canonical-link pairs,
  /// which makes the negative quasi-log-posterior convex.
  bool globally_concave() const noexcept { return kind_ != FamilyKind::NegBinLog; }
  double concavity_residual(double s) const;

  /// Optional per-observation constant c(y) added to every kernel term.
  /// Cross-model quantities are invariant to it; it exists so that can be checked.
  std::function<double(double)> kernel_constant;

 private:
  QuasiFamily(FamilyKind kind, double theta) : kind_(kind), theta_(theta) {}

  FamilyKind kind_;
  double theta_;
};

}  // namespace qpvs
