#pragma once

#include <functional>
#include <vector>

#include "qpvs/core.hpp"
#include "qpvs/family.hpp"
#include "qpvs/marginal.hpp"

namespace qpvs {

struct SamplerOutput {
  std::size_t p = 0;
  std::size_t burn_in = 0;
  /// One row per sweep.
  std::vector<ModelIndicator> gamma_draws;
  /// Empty under a fixed w.
  std::vector<double> w_draws;
  /// Conditional inclusion probability used for each column in each sweep
  /// (sweeps x p); forced-in columns hold 1.
  MatrixXd conditional_probs;
  /// Post burn-in mean of conditional_probs.
  VectorXd rb_ppi;
  /// Running mean of conditional_probs from the first sweep (sweeps x p).
  MatrixXd cumulative_ppi;
  CacheStats cache_stats;
  std::size_t visited_models = 0;

  std::size_t sweeps() const noexcept { return gamma_draws.size(); }
};

/// Sigmoid of the log-odds log f(g+) - log f(g-) + log w - log(1 - w).
double conditional_inclusion_probability(double log_f_plus, double log_f_minus, double w);

/// Random-scan Gibbs sampler over gamma (and w under a Beta-Binomial prior).
/// Each sweep visits every free column once in a fresh uniform permutation;
/// w is then drawn from Beta(a + |gamma_free|, b + p_free - |gamma_free|).
/// Starts from the forced-only model with w = a/(a+b).
SamplerOutput gibbs_run(const Dataset& d, const QuasiFamily& fam, const PriorConfig& prior, const RunConfig& run,
                        double psi, const BitVector& forced_in);

/// Same, driving an existing cache (used to expose cache dumps).
SamplerOutput gibbs_run(ModelCache& cache, std::size_t p, const PriorConfig& prior, const RunConfig& run,
                        const BitVector& forced_in);

struct EnumeratedModel {
  ModelIndicator gamma;
  double log_marginal = 0.0;
  double probability = 0.0;
};

struct ExactPosterior {
  std::vector<EnumeratedModel> models;
  VectorXd ppi;
};

inline constexpr std::size_t kMaxEnumeratePredictors = 15;

/// Exhaustive model posterior under a fixed w; forced-in columns are held at 1.
ExactPosterior enumerate_exact(std::size_t p, const BitVector& forced_in, double w,
                               const std::function<double(const ModelIndicator&)>& log_marginal);

ExactPosterior enumerate_exact(const Dataset& d, const QuasiFamily& fam, const PriorConfig& prior, double psi,
                               const BitVector& forced_in, const NewtonOptions& newton = {});

struct BetaDraws {
  /// n_draws x p; inactive columns are exactly zero.
  MatrixXd draws;
  double acceptance_rate = 1.0;
};

/// Draws beta | gamma from the Laplace Gaussian N(mode, M^-1), then runs one
/// independence-Metropolis pass with that Gaussian as proposal.
BetaDraws sample_beta_given_gamma(const Dataset& d, const ModelIndicator& gamma, const QuasiFamily& fam,
                                  const PriorConfig& prior, double psi, std::size_t n_draws, std::uint64_t seed,
                                  bool metropolis = true, const NewtonOptions& newton = {});

}  // namespace qpvs
