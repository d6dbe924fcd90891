#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "qpvs/error.hpp"
#include "qpvs/family.hpp"
#include "qpvs/quasilik.hpp"
#include "qpvs/rng.hpp"
#include "qpvs/simbench.hpp"

using namespace qpvs;

namespace {

Dataset one_row(double y, double x) {
  Dataset d;
  d.y = VectorXd::Constant(1, y);
  d.X = MatrixXd::Constant(1, 1, x);
  d.column_names = {"x"};
  return d;
}

ModelIndicator all_of(std::size_t p) {
  ModelIndicator g(p);
  for (std::size_t j = 0; j < p; ++j) g.bits.set(j);
  return g;
}

QuasiFamily family_for(oracle::Kernel k, double theta) {
  switch (k) {
    case oracle::Kernel::Linear: return QuasiFamily::linear();
    case oracle::Kernel::Poisson: return QuasiFamily::poisson();
    case oracle::Kernel::NegBin: return QuasiFamily::negbin(theta);
  }
  return QuasiFamily::linear();
}

VectorXd random_beta(std::mt19937_64& rng, Eigen::Index k, double sd) {
  std::normal_distribution<double> z(0.0, sd);
  VectorXd b(k);
  for (Eigen::Index j = 0; j < k; ++j) b[j] = z(rng);
  return b;
}

}  // namespace

TEST_CASE("kernel values at trivial points") {
  const Dataset lin = one_row(0.0, 0.0);
  CHECK(quasi_loglik(lin, all_of(1), VectorXd::Zero(1), 1.0, QuasiFamily::linear()) == 0.0);
  const Dataset pois = one_row(1.0, 0.0);
  CHECK(quasi_loglik(pois, all_of(1), VectorXd::Zero(1), 1.0, QuasiFamily::poisson()) == -1.0);
}

TEST_CASE("quasi_loglik matches term-by-term summation") {
  std::mt19937_64 rng(101);
  for (auto k : {oracle::Kernel::Linear, oracle::Kernel::Poisson, oracle::Kernel::NegBin}) {
    Dataset d = oracle::random_design(rng, 5, 3);
    oracle::fill_poisson(rng, d, VectorXd::Constant(3, 0.4));
    const VectorXd beta = random_beta(rng, 3, 0.5);
    const double psi = 1.7;
    const double got = quasi_loglik(d, all_of(3), beta, psi, family_for(k, 2.5));
    const double want = oracle::naive_nq(k, d.y, d.X, beta, psi, 2.5);
    CHECK(std::abs(got - want) <= 1e-12 * std::abs(want));
  }
}

TEST_CASE("negative binomial kernel is stable for large linear predictors") {
  const QuasiFamily nb = QuasiFamily::negbin(3.0);
  const KernelTerms t = nb.kernel(4.0, 800.0);
  CHECK(std::isfinite(t.value));
  CHECK(t.value == doctest::Approx(4.0 * 800.0 - 7.0 * 800.0).epsilon(1e-12));
  CHECK(std::isfinite(nb.kernel(0.0, -800.0).value));
}

TEST_CASE("scale identity: psi divides the quasi-log-likelihood") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t)
    for (auto k : {oracle::Kernel::Linear, oracle::Kernel::Poisson, oracle::Kernel::NegBin}) {
      Dataset d = oracle::random_design(rng, 12, 4);
      oracle::fill_poisson(rng, d, VectorXd::Constant(4, 0.2));
      const VectorXd beta = random_beta(rng, 4, 0.4);
      const auto fam = family_for(k, 1.5);
      const double psi = std::exp(std::normal_distribution<double>(0.0, 1.0)(rng));
      const double one = quasi_loglik(d, all_of(4), beta, 1.0, fam);
      CHECK(quasi_loglik(d, all_of(4), beta, psi, fam) == doctest::Approx(one / psi).epsilon(1e-13));
    }
}

TEST_CASE("linear family has the constant Hessian X'X / psi") {
  std::mt19937_64 rng(9);
  Dataset d = oracle::random_design(rng, 20, 4);
  oracle::fill_linear(rng, d, VectorXd::Ones(4), 1.0);
  const double psi = 0.7;
  const QuasiEval ev = quasi_eval(d, all_of(4), random_beta(rng, 4, 1.0), psi, QuasiFamily::linear());
  const MatrixXd want = d.X.transpose() * d.X / psi;
  CHECK(oracle::max_rel_err(ev.neg_hessian, want) <= 1e-14);
  CHECK(oracle::max_rel_err(ev.fisher_neg_hessian, want) <= 1e-14);
}

TEST_CASE("Poisson gradient matches finite differences") {
  std::mt19937_64 rng(21);
  Dataset d = oracle::random_design(rng, 6, 3);
  oracle::fill_poisson(rng, d, VectorXd::Constant(3, 0.5));
  const VectorXd beta = random_beta(rng, 3, 0.5);
  const auto fam = QuasiFamily::poisson();
  const QuasiEval ev = quasi_eval(d, all_of(3), beta, 1.3, fam);
  const VectorXd fd = oracle::fd_gradient(
      [&](const VectorXd& b) { return oracle::naive_nq(oracle::Kernel::Poisson, d.y, d.X, b, 1.3); }, beta);
  CHECK(oracle::max_rel_err(ev.gradient, fd) <= 1e-5);
}

TEST_CASE("negative binomial Hessian matches finite differences of the gradient") {
  std::mt19937_64 rng(23);
  Dataset d = oracle::random_design(rng, 15, 3);
  oracle::fill_negbin(rng, d, VectorXd::Constant(3, 0.6), 2.0);
  const VectorXd beta = random_beta(rng, 3, 0.5);
  const auto fam = QuasiFamily::negbin(2.0);
  const QuasiEval ev = quasi_eval(d, all_of(3), beta, 1.0, fam);
  const MatrixXd J = oracle::fd_jacobian(
      [&](const VectorXd& b) { return VectorXd(quasi_eval(d, all_of(3), b, 1.0, fam).gradient); }, beta);
  CHECK(oracle::max_rel_err(ev.neg_hessian, -J) <= 1e-4);
  CHECK(oracle::max_rel_err(ev.neg_hessian, ev.neg_hessian.transpose()) == 0.0);
}

TEST_CASE("concavity and Fisher positive definiteness on random full-rank inputs") {
  std::mt19937_64 rng(31);
  int nb_observed_failures = 0;
  for (int t = 0; t < 1000; ++t) {
    Dataset d = oracle::random_design(rng, 10, 3);
    oracle::fill_negbin(rng, d, VectorXd::Constant(3, 0.3), 0.7);
    const VectorXd beta = random_beta(rng, 3, 1.5);
    for (auto k : {oracle::Kernel::Linear, oracle::Kernel::Poisson, oracle::Kernel::NegBin}) {
      const QuasiEval ev = quasi_eval(d, all_of(3), beta, 1.0, family_for(k, 0.7));
      REQUIRE(Eigen::LLT<MatrixXd>(ev.fisher_neg_hessian).info() == Eigen::Success);
      const bool observed_pd = Eigen::LLT<MatrixXd>(ev.neg_hessian).info() == Eigen::Success;
      if (k == oracle::Kernel::NegBin)
        nb_observed_failures += !observed_pd;
      else
        REQUIRE(observed_pd);
    }
  }
  MESSAGE("negative binomial observed Hessians that were not PD: " << nb_observed_failures);
}

TEST_CASE("concavity residual vanishes exactly for canonical pairs only") {
  for (double s : {-3.0, -0.5, 0.0, 1.0, 4.0}) {
    CHECK(QuasiFamily::linear().concavity_residual(s) == 0.0);
    CHECK(std::abs(QuasiFamily::poisson().concavity_residual(s)) <= 1e-12 * std::exp(s));
  }
  CHECK(QuasiFamily::linear().globally_concave());
  CHECK(QuasiFamily::poisson().globally_concave());
  CHECK_FALSE(QuasiFamily::negbin(2.0).globally_concave());
  CHECK(std::abs(QuasiFamily::negbin(2.0).concavity_residual(1.0)) > 1e-3);
}

TEST_CASE("variance functions are positive on the mean range") {
  for (double s : {-20.0, -1.0, 0.0, 2.0, 20.0}) {
    CHECK(QuasiFamily::linear().variance(QuasiFamily::linear().mu(s)) > 0.0);
    CHECK(QuasiFamily::poisson().variance(QuasiFamily::poisson().mu(s)) > 0.0);
    CHECK(QuasiFamily::negbin(0.5).variance(QuasiFamily::negbin(0.5).mu(s)) > 0.0);
  }
  CHECK_THROWS_AS(QuasiFamily::negbin(0.0), Error);
}

TEST_CASE("argument errors") {
  const Dataset d = one_row(1.0, 1.0);
  try {
    quasi_loglik(d, all_of(1), VectorXd::Zero(2), 1.0, QuasiFamily::linear());
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  try {
    quasi_loglik(d, all_of(1), VectorXd::Zero(1), 0.0, QuasiFamily::linear());
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonPositiveDispersion);
  }
}

TEST_CASE("dispersion: intercept-only least squares") {
  Dataset d;
  d.y = VectorXd(3);
  d.y << 1, 2, 3;
  d.X = MatrixXd::Ones(3, 1);
  d.column_names = {"(Intercept)"};
  const auto est = estimate_dispersion(d, QuasiFamily::linear(), FullModelQmle{});
  CHECK(est.beta_hat[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(est.psi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(est.exact_fit_clamped);
  CHECK(est.dof_used == 1);
}

TEST_CASE("dispersion: exact fit is clamped and flagged") {
  Dataset d;
  d.X = MatrixXd(4, 2);
  d.X << 1, 0, 1, 1, 1, 2, 1, 3;
  d.y = d.X * Eigen::Vector2d(1.0, 2.0);
  d.column_names = {"a", "b"};
  const auto est = estimate_dispersion(d, QuasiFamily::linear(), FullModelQmle{});
  CHECK(est.psi == kMinDispersion);
  CHECK(est.exact_fit_clamped);
}

TEST_CASE("dispersion: fixed mode echoes its value and n <= p is rejected") {
  Dataset d;
  d.X = MatrixXd::Identity(2, 2);
  d.y = VectorXd::Ones(2);
  d.column_names = {"a", "b"};
  CHECK(estimate_dispersion(d, QuasiFamily::linear(), FixedDispersion{2.5}).psi == 2.5);
  try {
    estimate_dispersion(d, QuasiFamily::linear(), FullModelQmle{});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
  }
}

TEST_CASE("dispersion on overdispersed counts approaches the true value") {
  double small_err = 0.0, large_err = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CounterRng r1(seed, 1), r2(seed, 2);
    const Dataset small = gen_counts(ScenarioSpec::make(ScenarioKind::OverdispersedCounts, 50), r1);
    const Dataset large = gen_counts(ScenarioSpec::make(ScenarioKind::OverdispersedCounts, 2000), r2);
    const double ps = estimate_dispersion(small, QuasiFamily::poisson(), FullModelQmle{}).psi;
    const double pl = estimate_dispersion(large, QuasiFamily::poisson(), FullModelQmle{}).psi;
    CHECK(ps >= 2.0);
    CHECK(ps <= 12.0);
    CHECK(pl == doctest::Approx(5.5).epsilon(0.15));
    small_err += std::abs(ps - 5.5);
    large_err += std::abs(pl - 5.5);
  }
  CHECK(large_err < small_err);
}

TEST_CASE("lasso dispersion counts nonzero coefficients and rejects negative binomial") {
  std::mt19937_64 rng(41);
  Dataset d = oracle::random_design(rng, 120, 12);
  VectorXd beta = VectorXd::Zero(12);
  beta[0] = 1.0;
  beta[1] = 2.0;
  beta[2] = -1.5;
  oracle::fill_linear(rng, d, beta, 1.0);
  const BitVector forced = intercept_mask(12, true);
  const auto est = estimate_dispersion(d, QuasiFamily::linear(), L1Regularized{}, 3, &forced);
  std::size_t nz = 0;
  for (Eigen::Index j = 0; j < est.beta_hat.size(); ++j) nz += est.beta_hat[j] != 0.0;
  CHECK(est.dof_used == nz);
  CHECK(est.lambda > 0.0);
  CHECK(est.psi == doctest::Approx(1.0).epsilon(0.35));
  CHECK(est.beta_hat[1] > 1.0);
  CHECK(estimate_dispersion(d, QuasiFamily::linear(), L1Regularized{}, 3, &forced).psi == est.psi);
  CHECK_THROWS_AS(estimate_dispersion(d, QuasiFamily::negbin(1.0), L1Regularized{}), Error);
}

TEST_CASE("lasso with zero penalty is least squares; a huge penalty zeroes penalised columns") {
  std::mt19937_64 rng(43);
  Dataset d = oracle::random_design(rng, 60, 4);
  oracle::fill_linear(rng, d, VectorXd::Constant(4, 0.8), 1.0);
  const std::vector<bool> unpen{true, false, false, false};
  const LassoFit zero = lasso_ista(d.y, d.X, QuasiFamily::linear(), 0.0, unpen, VectorXd::Zero(4), 1e-12, 200000);
  const VectorXd ls = d.X.colPivHouseholderQr().solve(d.y);
  CHECK((zero.beta - ls).cwiseAbs().maxCoeff() <= 1e-6);
  const LassoFit big = lasso_ista(d.y, d.X, QuasiFamily::linear(), 1e6, unpen, VectorXd::Zero(4));
  CHECK(big.beta.tail(3).isZero(0.0));
  CHECK(big.beta[0] == doctest::Approx(d.y.mean()).epsilon(1e-6));
}

TEST_CASE("theta estimation") {
  SUBCASE("underdispersed counts hit the upper cap") {
    std::mt19937_64 rng(51);
    Dataset d = oracle::random_design(rng, 2000, 3);
    const VectorXd eta = d.X * Eigen::Vector3d(2.0, 0.3, -0.2);
    for (Eigen::Index i = 0; i < eta.size(); ++i) d.y[i] = std::floor(std::exp(eta[i]) + 0.5);
    CHECK(estimate_nb_theta(d) == kThetaUpper);
  }
  SUBCASE("equidispersed Poisson data give a very large theta") {
    std::mt19937_64 rng(52);
    int capped = 0;
    for (int t = 0; t < 10; ++t) {
      Dataset d = oracle::random_design(rng, 2000, 3);
      oracle::fill_poisson(rng, d, Eigen::Vector3d(2.0, 0.3, -0.2));
      const double th = estimate_nb_theta(d);
      CHECK(th > 20.0);
      capped += th == kThetaUpper;
    }
    MESSAGE("Poisson replicates at the theta cap: " << capped << " of 10");
  }
  SUBCASE("negative binomial data with theta 5") {
    std::mt19937_64 rng(53);
    for (int t = 0; t < 5; ++t) {
      Dataset d = oracle::random_design(rng, 2000, 3);
      oracle::fill_negbin(rng, d, Eigen::Vector3d(1.5, 0.3, -0.2), 5.0);
      const double th = estimate_nb_theta(d);
      CHECK(th >= 3.0);
      CHECK(th <= 8.0);
    }
  }
  SUBCASE("n <= p") {
    Dataset d;
    d.X = MatrixXd::Identity(2, 2);
    d.y = VectorXd::Ones(2);
    d.column_names = {"a", "b"};
    try {
      estimate_nb_theta(d);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InsufficientSamples);
    }
  }
}

TEST_CASE("Newton reaches the quasi-MLE: score is zero at the optimum") {
  std::mt19937_64 rng(61);
  for (int t = 0; t < 20; ++t) {
    Dataset d = oracle::random_design(rng, 40, 4);
    oracle::fill_poisson(rng, d, Eigen::Vector4d(1.0, 0.4, -0.3, 0.0));
    const NewtonResult r = fit_full_qmle(d, QuasiFamily::poisson());
    CHECK(r.converged);
    const VectorXd mu = (d.X * r.beta).array().exp();
    const VectorXd score = d.X.transpose() * (d.y - mu);
    CHECK(score.cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + d.y.sum()));
  }
}
