#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qpvs/core.hpp"
#include "qpvs/family.hpp"
#include "qpvs/rng.hpp"
#include "qpvs/sampler.hpp"
#include "qpvs/selection.hpp"

namespace qpvs {

enum class ScenarioKind { OverdispersedCounts, HeavyTailLinear, InlierLinear };

std::string to_string(ScenarioKind kind);
ScenarioKind parse_scenario(const std::string& name);

/// Simulation design. make() fills the published settings; fields may be
/// overridden afterwards.
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::OverdispersedCounts;
  std::size_t n = 100;
  std::uint64_t replicate_seed = 1;
  VectorXd beta_star;
  double psi_star = 1.0;
  double nu = 3.0;

  static ScenarioSpec make(ScenarioKind kind, std::size_t n, std::uint64_t seed = 1);
  std::size_t p() const noexcept { return static_cast<std::size_t>(beta_star.size()); }
  /// beta_star != 0, per column.
  std::vector<bool> truth() const;
};

/// Intercept column plus iid N(0,1) covariates; y = round-half-up of
/// Gamma(shape mu/psi, scale psi), mu = exp(x'beta).
Dataset gen_counts(const ScenarioSpec& spec, CounterRng& rng);
/// Intercept plus N(0,1) covariates; y = x'beta + sqrt((nu-2)/nu * psi) * t_nu.
Dataset gen_heavy_tails(const ScenarioSpec& spec, CounterRng& rng);
/// Intercept plus, per row, either N(0,I) covariates with N(mu, 2 psi) noise or
/// an all-zero covariate row observed without error.
Dataset gen_inliers(const ScenarioSpec& spec, CounterRng& rng);
Dataset generate(const ScenarioSpec& spec, CounterRng& rng);

enum class MethodKind { QuasiPosterior, PoissonLikelihood, NegBinQuasi };

struct Method {
  MethodKind kind = MethodKind::QuasiPosterior;
  /// Family for QuasiPosterior; ignored otherwise.
  FamilyKind family = FamilyKind::PoissonLog;

  static Method qp(FamilyKind fam) { return {MethodKind::QuasiPosterior, fam}; }
  static Method poisson() { return {MethodKind::PoissonLikelihood, FamilyKind::PoissonLog}; }
  static Method negbin() { return {MethodKind::NegBinQuasi, FamilyKind::NegBinLog}; }
  std::string label() const;
};

Method parse_method(const std::string& name, ScenarioKind scenario);

struct RuleOutcome {
  SelectionResult selection;
  std::optional<SelectionMetrics> metrics;
};

struct ReplicateReport {
  std::string scenario;
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::string method;
  std::vector<double> rb_ppi;
  RuleOutcome median;
  RuleOutcome bfdr;
  double psi_used = 1.0;
  double theta_used = 0.0;
  double wall_seconds = 0.0;
  CacheStats cache_stats;
  bool failed = false;
  std::string error;
};

/// Dispersion / theta estimation followed by the Gibbs sampler and both
/// selection rules. truth, when given, is scored over the non-forced columns.
ReplicateReport run_method(const Dataset& d, const Method& method, const PriorConfig& prior, const RunConfig& run,
                           const BitVector& forced_in, const std::optional<std::vector<bool>>& truth = std::nullopt);

struct GridConfig {
  std::vector<ScenarioKind> scenarios;
  std::vector<std::size_t> n_grid;
  std::size_t replicates = 50;
  /// Method names resolved per scenario: "qp", "poisson", "negbin".
  std::vector<std::string> methods{"qp"};
  PriorConfig prior;
  RunConfig run;
  std::size_t jobs = 1;
};

struct AggregateRow {
  std::string scenario;
  std::size_t n = 0;
  std::string method;
  std::string rule;
  std::string metric;
  double mean = 0.0;
  double se = 0.0;
  std::size_t R = 0;
};

struct GridResult {
  std::vector<ReplicateReport> reports;
  std::vector<AggregateRow> aggregates;
};

/// Metrics aggregated per cell: fdr, power, f1, mcc and size (selected count).
inline constexpr const char* kAggregateMetrics[] = {"fdr", "power", "f1", "mcc", "size"};

/// Seed for replicate rep of (scenario, n): seed xor hash(scenario, n, rep).
std::uint64_t replicate_seed(std::uint64_t seed, ScenarioKind kind, std::size_t n, std::size_t rep);

GridResult run_scenario_grid(const GridConfig& cfg);

/// Mean and standard error (sample sd / sqrt(R)) of successful replicates.
std::vector<AggregateRow> aggregate_reports(const std::vector<ReplicateReport>& reports);

/// Columns: scenario,n,method,rule,metric,replicate,mean,se,R. Replicate rows
/// carry the replicate index, se = 0 and R = 1; aggregate rows carry "all".
void write_results_csv(std::ostream& os, const GridResult& result);
/// One JSON object per replicate report.
/// Wall times are omitted unless include_timing, keeping the file reproducible.
void write_replicates_jsonl(std::ostream& os, const std::vector<ReplicateReport>& reports,
                            bool include_timing = false);

/// 2 * (n*Q_n at the quasi-MLE of gamma - n*Q_n at the quasi-MLE of gamma_star).
double nested_bf_statistic(const Dataset& d, const ModelIndicator& gamma, const ModelIndicator& gamma_star,
                           const QuasiFamily& fam, double psi, const NewtonOptions& opt = {});

}  // namespace qpvs
