#include "qpvs/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include "qpvs/error.hpp"
#include "qpvs/rng.hpp"

namespace qpvs {

double conditional_inclusion_probability(double log_f_plus, double log_f_minus, double w) {
  const double log_odds = log_f_plus - log_f_minus + std::log(w) - std::log1p(-w);
  if (log_odds >= 0.0) return 1.0 / (1.0 + std::exp(-log_odds));
  const double e = std::exp(log_odds);
  return e / (1.0 + e);
}

SamplerOutput gibbs_run(ModelCache& cache, std::size_t p, const PriorConfig& prior, const RunConfig& run,
                        const BitVector& forced_in) {
  prior.validate();
  run.validate();
  if (p < 1) fail(ErrorCode::InvalidArgument, "sampler needs p >= 1");
  if (forced_in.size() != p) fail(ErrorCode::LengthMismatch, "forced-in mask length differs from p");

  const bool fixed_w = prior.fixed_w();
  double a = 1.0, b = 1.0, w = 0.5;
  if (fixed_w) {
    w = std::get<FixedSparsity>(prior.sparsity).w;
  } else {
    const auto& bb = std::get<BetaBinomialSparsity>(prior.sparsity);
    a = bb.a;
    b = bb.b;
    w = a / (a + b);
  }
  const std::size_t p_free = p - forced_in.count();

  CounterRng rng(run.seed, hash_string("gibbs"));
  ModelIndicator gamma = ModelIndicator::forced_only(forced_in);

  SamplerOutput out;
  out.p = p;
  out.burn_in = run.burn_in;
  const auto sweeps = static_cast<Eigen::Index>(run.sweeps);
  const auto pp = static_cast<Eigen::Index>(p);
  out.conditional_probs.resize(sweeps, pp);
  out.cumulative_ppi.resize(sweeps, pp);
  out.gamma_draws.reserve(run.sweeps);
  if (!fixed_w) out.w_draws.reserve(run.sweeps);
  VectorXd running = VectorXd::Zero(pp);

  for (Eigen::Index t = 0; t < sweeps; ++t) {
    const auto order = random_permutation(p, rng);
    for (const std::size_t l : order) {
      const auto col = static_cast<Eigen::Index>(l);
      if (forced_in.test(l)) {
        out.conditional_probs(t, col) = 1.0;
        continue;
      }
      const double log_plus = cache.get_or_eval(gamma.with(l, true)).log_qmarginal;
      const double log_minus = cache.get_or_eval(gamma.with(l, false)).log_qmarginal;
      const double prob = conditional_inclusion_probability(log_plus, log_minus, w);
      gamma.bits.set(l, rng.uniform() < prob);
      out.conditional_probs(t, col) = prob;
    }
    out.gamma_draws.push_back(gamma);
    if (!fixed_w) {
      const std::size_t k = gamma.size() - forced_in.count();
      boost::random::beta_distribution<double> beta_dist(a + static_cast<double>(k),
                                                         b + static_cast<double>(p_free - k));
      w = std::clamp(beta_dist(rng), 1e-300, 1.0 - 1e-16);
      out.w_draws.push_back(w);
    }
    running += out.conditional_probs.row(t).transpose();
    out.cumulative_ppi.row(t) = (running / static_cast<double>(t + 1)).transpose();
  }

  const auto kept = sweeps - static_cast<Eigen::Index>(run.burn_in);
  out.rb_ppi = out.conditional_probs.bottomRows(kept).colwise().mean().transpose();
  for (std::size_t j = 0; j < p; ++j)
    if (forced_in.test(j)) out.rb_ppi[static_cast<Eigen::Index>(j)] = 1.0;
  out.cache_stats = cache.stats();
  std::unordered_set<ModelIndicator> distinct(out.gamma_draws.begin(), out.gamma_draws.end());
  out.visited_models = distinct.size();
  return out;
}

SamplerOutput gibbs_run(const Dataset& d, const QuasiFamily& fam, const PriorConfig& prior, const RunConfig& run,
                        double psi, const BitVector& forced_in) {
  if (!(psi > 0.0)) fail(ErrorCode::NonPositiveDispersion, "dispersion must be positive");
  ModelCache cache(d, psi, fam, prior, {run.newton_tol, run.newton_max_iter}, run.cache_cap);
  return gibbs_run(cache, d.p(), prior, run, forced_in);
}

ExactPosterior enumerate_exact(std::size_t p, const BitVector& forced_in, double w,
                               const std::function<double(const ModelIndicator&)>& log_marginal) {
  if (p > kMaxEnumeratePredictors)
    fail(ErrorCode::TooManyPredictors, "exact enumeration supports p <= " + std::to_string(kMaxEnumeratePredictors));
  if (!(w > 0.0 && w < 1.0)) fail(ErrorCode::InvalidArgument, "enumeration needs a fixed w in (0, 1)");
  if (forced_in.size() != p) fail(ErrorCode::LengthMismatch, "forced-in mask length differs from p");

  std::vector<std::size_t> free_cols;
  for (std::size_t j = 0; j < p; ++j)
    if (!forced_in.test(j)) free_cols.push_back(j);
  const std::size_t p_free = free_cols.size();
  const std::size_t count = std::size_t{1} << p_free;

  ExactPosterior post;
  post.models.reserve(count);
  std::vector<double> log_post(count);
  const double lw = std::log(w), l1w = std::log1p(-w);
  for (std::size_t mask = 0; mask < count; ++mask) {
    ModelIndicator g = ModelIndicator::forced_only(forced_in);
    std::size_t k = 0;
    for (std::size_t i = 0; i < p_free; ++i) {
      if ((mask >> i) & 1u) {
        g.bits.set(free_cols[i]);
        ++k;
      }
    }
    const double lm = log_marginal(g);
    log_post[mask] = lm + static_cast<double>(k) * lw + static_cast<double>(p_free - k) * l1w;
    post.models.push_back({std::move(g), lm, 0.0});
  }
  const double mx = *std::max_element(log_post.begin(), log_post.end());
  double total = 0.0;
  for (double v : log_post) total += std::exp(v - mx);
  post.ppi = VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t m = 0; m < count; ++m) {
    const double prob = std::exp(log_post[m] - mx) / total;
    post.models[m].probability = prob;
    for (std::size_t j : post.models[m].gamma.active()) post.ppi[static_cast<Eigen::Index>(j)] += prob;
  }
  return post;
}

ExactPosterior enumerate_exact(const Dataset& d, const QuasiFamily& fam, const PriorConfig& prior, double psi,
                               const BitVector& forced_in, const NewtonOptions& newton) {
  prior.validate();
  if (!prior.fixed_w()) fail(ErrorCode::InvalidArgument, "exact enumeration needs a fixed w prior");
  if (d.p() > kMaxEnumeratePredictors)
    fail(ErrorCode::TooManyPredictors, "exact enumeration supports p <= " + std::to_string(kMaxEnumeratePredictors));
  ModelCache cache(d, psi, fam, prior, newton);
  return enumerate_exact(d.p(), forced_in, std::get<FixedSparsity>(prior.sparsity).w,
                         [&](const ModelIndicator& g) { return cache.get_or_eval(g).log_qmarginal; });
}

BetaDraws sample_beta_given_gamma(const Dataset& d, const ModelIndicator& gamma, const QuasiFamily& fam,
                                  const PriorConfig& prior, double psi, std::size_t n_draws, std::uint64_t seed,
                                  bool metropolis, const NewtonOptions& newton) {
  if (n_draws < 1) fail(ErrorCode::InvalidArgument, "need at least one draw");
  BetaDraws out;
  out.draws = MatrixXd::Zero(static_cast<Eigen::Index>(n_draws), static_cast<Eigen::Index>(d.p()));
  const auto active = gamma.active();
  if (active.empty()) return out;

  const MapEstimate map = map_estimate(d, gamma, psi, fam, prior, std::nullopt, newton);
  const auto k = static_cast<Eigen::Index>(active.size());
  const MatrixXd Xg = submatrix(d.X, active);
  const auto upper = map.chol_lower.transpose().triangularView<Eigen::Upper>();

  CounterRng rng(seed, hash_string("beta-given-gamma"));
  boost::random::normal_distribution<double> normal;
  auto propose = [&](VectorXd& beta, double& log_weight) {
    VectorXd z(k);
    for (Eigen::Index i = 0; i < k; ++i) z[i] = normal(rng);
    beta = map.beta + upper.solve(z);
    if (metropolis) {
      const double target = quasi_loglik(d.y, Xg, beta, psi, fam) + log_slab_density(beta, prior.slab_variance);
      log_weight = target + 0.5 * z.squaredNorm();
    }
  };

  VectorXd current, proposal;
  double w_current = 0.0, w_proposal = 0.0;
  propose(current, w_current);
  std::size_t accepted = 0;
  for (std::size_t r = 0; r < n_draws; ++r) {
    if (r > 0) {
      propose(proposal, w_proposal);
      bool accept = true;
      if (metropolis) {
        const double log_ratio = w_proposal - w_current;
        accept = !std::isnan(log_ratio) && (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio);
      }
      if (accept) {
        current = proposal;
        w_current = w_proposal;
        ++accepted;
      }
    }
    for (Eigen::Index i = 0; i < k; ++i)
      out.draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)])) = current[i];
  }
  out.acceptance_rate = n_draws > 1 ? static_cast<double>(accepted) / static_cast<double>(n_draws - 1) : 1.0;
  return out;
}

}  // namespace qpvs
