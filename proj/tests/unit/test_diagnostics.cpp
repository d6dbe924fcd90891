#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "../support/oracles.hpp"
#include "qpvs/diagnostics.hpp"
#include "qpvs/error.hpp"
#include "qpvs/quasilik.hpp"

using namespace qpvs;

namespace {

using Kind = VarianceRule::Kind;

Dataset response_only(const VectorXd& y) {
  Dataset d;
  d.y = y;
  d.X = MatrixXd::Ones(y.size(), 1);
  d.column_names = {"(Intercept)"};
  return d;
}

// Quasi-Poisson draws: Gamma(mu/psi, psi) rounded half-up.
VectorXd qp_counts(std::mt19937_64& rng, const VectorXd& mu, double psi) {
  VectorXd y(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    std::gamma_distribution<double> g(mu[i] / psi, psi);
    y[i] = std::floor(g(rng) + 0.5);
  }
  return y;
}

}  // namespace

TEST_CASE("variance rules") {
  CHECK(VarianceRule{Kind::Poisson, 1.0}(4.0) == 4.0);
  CHECK(VarianceRule{Kind::NegBin, 2.0}(4.0) == 12.0);
  CHECK(VarianceRule{Kind::QuasiPoisson, 5.0}(4.0) == 20.0);
  CHECK(VarianceRule{Kind::Homoskedastic, 0.7}(4.0) == 0.7);
  CHECK(VarianceRule::for_method(Method::poisson(), 3.0, 2.0).kind == Kind::Poisson);
  CHECK(VarianceRule::for_method(Method::negbin(), 3.0, 2.0).param == 2.0);
  CHECK(VarianceRule::for_method(Method::qp(FamilyKind::PoissonLog), 3.0, 2.0).kind == Kind::QuasiPoisson);
  CHECK(VarianceRule::for_method(Method::qp(FamilyKind::LinearIdentity), 3.0, 2.0).kind == Kind::Homoskedastic);
}

TEST_CASE("type-7 quantiles") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(quantile_type7(v, 0.0) == 1.0);
  CHECK(quantile_type7(v, 1.0) == 5.0);
  CHECK(quantile_type7(v, 0.5) == 3.0);
  CHECK(quantile_type7(v, 0.1) == doctest::Approx(1.4));
  CHECK(quantile_type7({7.0}, 0.3) == 7.0);
  CHECK_THROWS_AS(quantile_type7({}, 0.5), Error);
}

TEST_CASE("a model matching each bin's empirical variance scores zero") {
  // Alternating 0/1 response: every decile of the index holds 50 of each.
  const Eigen::Index n = 1000;
  VectorXd y(n), idx(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = static_cast<double>(i % 2);
    idx[i] = static_cast<double>(i);
  }
  const double s2 = 100.0 / 99.0 * 0.25;
  const auto diag = binned_mean_variance(response_only(y), {{"h", idx, {Kind::Homoskedastic, s2}}});
  CHECK(diag.bins.size() == 10);
  for (const auto& b : diag.bins) CHECK(b.y_var == doctest::Approx(s2).epsilon(1e-14));
  CHECK(diag.scores[0].var_mse <= 1e-28);
  CHECK(diag.scores[0].var_mae <= 1e-14);
}

TEST_CASE("constant data with a constant fit") {
  const VectorXd y = VectorXd::Constant(300, 4.0);
  const VectorXd mu = VectorXd::Constant(300, 4.0);
  // Distinct index values so the deciles do not collapse.
  VectorXd other(300);
  for (Eigen::Index i = 0; i < 300; ++i) other[i] = 4.0 + static_cast<double>(i) * 1e-6;
  const auto diag = binned_mean_variance(response_only(y), {{"c", mu, {Kind::Poisson, 1.0}}, {"o", other, {Kind::Poisson, 1.0}}});
  CHECK(diag.scores[0].mean_mse == 0.0);
  for (const auto& b : diag.bins) CHECK(b.y_var == 0.0);
}

TEST_CASE("too few bins survive") {
  const VectorXd y = VectorXd::LinSpaced(50, 0.0, 1.0);
  try {
    binned_mean_variance(response_only(y), {{"m", y, {Kind::Poisson, 1.0}}});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewBins);
  }
  // An all-equal index collapses every observation into one bin.
  const VectorXd c = VectorXd::Constant(500, 1.0);
  try {
    binned_mean_variance(response_only(c), {{"m", c, {Kind::Poisson, 1.0}}});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewBins);
  }
}

TEST_CASE("fitted means must match the number of rows") {
  CHECK_THROWS_AS(binned_mean_variance(response_only(VectorXd::Ones(100)), {{"m", VectorXd::Ones(99), {}}}), Error);
  CHECK_THROWS_AS(binned_mean_variance(response_only(VectorXd::Ones(100)), {}), Error);
}

TEST_CASE("single model: the index is its own fitted mean") {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(1.0, 20.0);
  VectorXd mu(400);
  for (auto& v : mu) v = u(rng);
  const VectorXd y = qp_counts(rng, mu, 2.0);
  const auto diag = binned_mean_variance(response_only(y), {{"m", mu, {Kind::QuasiPoisson, 2.0}}});
  CHECK(diag.index == mu);
}

TEST_CASE("results do not depend on the order of the models") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(1.0, 30.0);
  const Eigen::Index n = 800;
  VectorXd a(n), b(n), c(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a[i] = u(rng);
    b[i] = a[i] * (0.9 + 0.2 * u(rng) / 30.0);
    c[i] = 0.1 * a[i] + 0.9 * u(rng);
  }
  const VectorXd y = qp_counts(rng, a, 3.0);
  std::vector<FittedModel> models{{"a", a, {Kind::Poisson, 1.0}}, {"b", b, {Kind::NegBin, 4.0}}, {"c", c, {Kind::QuasiPoisson, 3.0}}};
  std::vector<std::size_t> perm{0, 1, 2};
  const auto base = binned_mean_variance(response_only(y), models);
  while (std::next_permutation(perm.begin(), perm.end())) {
    std::vector<FittedModel> shuffled;
    for (auto k : perm) shuffled.push_back(models[k]);
    const auto d = binned_mean_variance(response_only(y), shuffled);
    CHECK(d.index == base.index);
    CHECK(d.edges == base.edges);
    REQUIRE(d.bins.size() == base.bins.size());
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(d.scores[k].var_mse == base.scores[perm[k]].var_mse);
      CHECK(d.scores[k].mean_mae == base.scores[perm[k]].mean_mae);
    }
  }
}

TEST_CASE("surviving bins match a direct recomputation from their members") {
  std::mt19937_64 rng(54);
  std::uniform_int_distribution<int> level(0, 4);
  const Eigen::Index n = 600;
  VectorXd idx(n);
  // Heavy ties: some deciles collapse and leave empty or tiny bins.
  for (Eigen::Index i = 0; i < n; ++i) idx[i] = i < 15 ? 100.0 + static_cast<double>(i) : static_cast<double>(level(rng));
  const VectorXd y = qp_counts(rng, idx.array() + 1.0, 2.0);
  const auto diag = binned_mean_variance(response_only(y), {{"m", idx, {Kind::Poisson, 1.0}}});
  std::size_t total = 0;
  for (const auto& b : diag.bins) {
    std::vector<double> ys, ms;
    for (Eigen::Index i = 0; i < n; ++i) {
      // Bins are left-closed: bin(v) counts the interior edges not above v.
      std::size_t bin = 0;
      for (std::size_t k = 1; k <= 9; ++k) bin += diag.edges[k] <= idx[i];
      if (bin == b.index) {
        ys.push_back(y[i]);
        ms.push_back(idx[i]);
      }
    }
    REQUIRE(ys.size() == b.count);
    CHECK(b.count >= kMinBinCount);
    total += b.count;
    const double ym = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double ss = 0.0;
    for (double v : ys) ss += (v - ym) * (v - ym);
    CHECK(b.y_mean == doctest::Approx(ym).epsilon(1e-13));
    CHECK(b.y_var == doctest::Approx(ss / static_cast<double>(ys.size() - 1)).epsilon(1e-12));
    CHECK(b.model_mean[0] ==
          doctest::Approx(std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size())).epsilon(1e-13));
  }
  CHECK(total <= static_cast<std::size_t>(n));
  CHECK(diag.bins.size() < 10);
}

TEST_CASE("quasi-Poisson variance rule beats Poisson on overdispersed data") {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> z;
  int wins = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = 2000;
    VectorXd mu(n);
    for (auto& v : mu) v = std::exp(2.0 + 0.5 * z(rng));
    const VectorXd y = qp_counts(rng, mu, 5.0);
    double pearson = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) pearson += (y[i] - mu[i]) * (y[i] - mu[i]) / mu[i];
    const double psi_hat = pearson / static_cast<double>(n - 1);
    const auto diag = binned_mean_variance(
        response_only(y), {{"qp", mu, {Kind::QuasiPoisson, psi_hat}}, {"poisson", mu, {Kind::Poisson, 1.0}}});
    wins += diag.scores[0].var_mse < diag.scores[1].var_mse;
  }
  CHECK(wins >= 95);
}

TEST_CASE("WMSE examples") {
  const VectorXd y = Eigen::Vector3d(1.0, 2.0, 4.0);
  const VectorXd mu = Eigen::Vector3d(1.5, 2.0, 3.0);
  CHECK(wmse(y, mu, {Kind::Homoskedastic, 1.0}) == doctest::Approx((0.25 + 0.0 + 1.0) / 3.0).epsilon(1e-15));
  CHECK(wmse(y, y, {Kind::Poisson, 1.0}) == 0.0);
  CHECK(wmse(y, mu, {Kind::Poisson, 1.0}) == doctest::Approx((0.25 / 1.5 + 1.0 / 3.0) / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(wmse(y, VectorXd::Ones(2), {}), Error);
}

TEST_CASE("stratified folds are balanced and reproducible") {
  std::mt19937_64 rng(56);
  std::uniform_real_distribution<double> u;
  VectorXd y(103);
  for (auto& v : y) v = u(rng);
  const auto f = stratified_folds(y, 10, 9);
  CHECK(f == stratified_folds(y, 10, 9));
  CHECK(f != stratified_folds(y, 10, 10));
  std::vector<int> sizes(10, 0);
  for (auto k : f) {
    REQUIRE(k < 10);
    ++sizes[k];
  }
  for (int s : sizes) CHECK((s == 10 || s == 11));
  // Each block of ten consecutive ranks holds every fold once.
  std::vector<std::size_t> order(103);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return y[a] < y[b]; });
  for (std::size_t start = 0; start + 10 <= 103; start += 10) {
    std::vector<bool> seen(10, false);
    for (std::size_t k = 0; k < 10; ++k) seen[f[order[start + k]]] = true;
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
  }
}

TEST_CASE("cross-validation needs six observations per fold") {
  std::mt19937_64 rng(57);
  Dataset d = oracle::random_design(rng, 59, 2);
  oracle::fill_poisson(rng, d, Eigen::Vector2d(1.0, 0.3));
  try {
    cv_wmse(d, {Method::poisson()}, 10, 1, PriorConfig{}, RunConfig{}, intercept_mask(2, true),
            SelectionRule::MedianProbability);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
  }
}

TEST_CASE("linear refit with unit weights gives plain held-out MSE") {
  std::mt19937_64 rng(58);
  Dataset d = oracle::random_design(rng, 120, 3);
  oracle::fill_linear(rng, d, Eigen::Vector3d(1.0, 0.8, 0.0), 1.0);
  RunConfig run;
  run.sweeps = 300;
  run.burn_in = 100;
  run.dispersion = FixedDispersion{1.0};
  const auto fm = fit_for_diagnostics(d, Method::qp(FamilyKind::LinearIdentity), PriorConfig{}, run,
                                      intercept_mask(3, true), SelectionRule::MedianProbability);
  CHECK(fm.gamma.test(0));
  CHECK(fm.gamma.test(1));
  const VectorXd pred = fm.predict(d.X);
  const double mse = (d.y - pred).squaredNorm() / 120.0;
  CHECK(wmse(d.y, pred, {Kind::Homoskedastic, 1.0}) == doctest::Approx(mse).epsilon(1e-14));
  // Refit psi is the Pearson estimate on the selected model.
  CHECK(fm.psi == doctest::Approx((d.y - pred).squaredNorm() / (120.0 - static_cast<double>(fm.gamma.size()))).epsilon(1e-12));
  CHECK(fm.model.variance.kind == Kind::Homoskedastic);
}

TEST_CASE("held-out WMSE favours quasi-Poisson over Poisson on overdispersed counts") {
  std::mt19937_64 rng(59);
  int wins = 0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    Dataset d = oracle::random_design(rng, 600, 4);
    d.y = qp_counts(rng, (d.X * Eigen::Vector4d(2.0, 0.5, -0.3, 0.0)).array().exp(), 5.0);
    RunConfig run;
    run.sweeps = 400;
    run.burn_in = 100;
    const auto rows = cv_wmse(d, {Method::qp(FamilyKind::PoissonLog), Method::poisson()}, 10, 100 + s, PriorConfig{},
                              run, intercept_mask(4, true), SelectionRule::MedianProbability);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].per_fold.size() == 10);
    CHECK(rows[0].se > 0.0);
    wins += rows[0].mean < rows[1].mean;
  }
  CHECK(wins >= 9);
}

TEST_CASE("bins CSV layout") {
  std::mt19937_64 rng(60);
  std::uniform_real_distribution<double> u(1.0, 10.0);
  VectorXd mu(300);
  for (auto& v : mu) v = u(rng);
  const VectorXd y = qp_counts(rng, mu, 2.0);
  const std::vector<FittedModel> models{{"qp", mu, {Kind::QuasiPoisson, 2.0}}, {"poisson", mu, {Kind::Poisson, 1.0}}};
  const auto diag = binned_mean_variance(response_only(y), models);
  std::ostringstream os;
  write_bins_csv(os, diag, models);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "model,bin,lower,upper,count,y_mean,y_var,model_mean,model_var");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * diag.bins.size());
}
