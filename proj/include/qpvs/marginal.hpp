#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <ostream>
#include <unordered_map>

#include "qpvs/core.hpp"
#include "qpvs/family.hpp"
#include "qpvs/quasilik.hpp"

namespace qpvs {

enum class MarginalMethod { ClosedForm, Laplace };

struct ModelEvaluation {
  ModelIndicator gamma;
  double log_qmarginal = 0.0;
  VectorXd map_beta;
  /// log|M|, M = -Hessian of (n*Q_n + log prior) at the mode.
  double logdet_M = 0.0;
  std::size_t newton_iters = 0;
  MarginalMethod method = MarginalMethod::Laplace;
  /// The observed Hessian needed diagonal jitter before Cholesky succeeded.
  bool jittered = false;
};

struct MapEstimate {
  VectorXd beta;
  double logdet_M = 0.0;
  std::size_t iters = 0;
  bool jittered = false;
  /// Lower Cholesky factor of M (observed Hessian + I/s^2, jitter included).
  MatrixXd chol_lower;
};

MapEstimate map_estimate(const Dataset& d, const ModelIndicator& gamma, double psi, const QuasiFamily& fam,
                         const PriorConfig& prior, const std::optional<VectorXd>& warm_start = std::nullopt,
                         const NewtonOptions& opt = {});

/// Log of the Gaussian-slab linear-model quasi-marginal:
/// (k/2) log psi - k log s - 1/2 log|U| + m'Um / (2 psi), U = X'X + (psi/s^2) I.
double log_qmarginal_closed_form(const Dataset& d, const ModelIndicator& gamma, double psi,
                                 const PriorConfig& prior, const QuasiFamily& fam = QuasiFamily::linear());

/// Closed form from precomputed X'X and X'y; also returns the mode m and log|U|.
struct ClosedFormParts {
  double log_qmarginal = 0.0;
  VectorXd mode;
  double logdet_U = 0.0;
};
ClosedFormParts closed_form_from_gram(const MatrixXd& gram, const VectorXd& xty,
                                      const std::vector<std::size_t>& active, double psi, double slab_variance);

/// Laplace approximation:
/// n*Q_n(b) + log pi(b) + (k/2) log(2 pi) - 1/2 log|M|, b the MAP.
ModelEvaluation log_qmarginal_laplace(const Dataset& d, const ModelIndicator& gamma, double psi,
                                      const QuasiFamily& fam, const PriorConfig& prior,
                                      const std::optional<VectorXd>& warm_start = std::nullopt,
                                      const NewtonOptions& opt = {});

/// log N(beta; 0, s^2 I) over the active coordinates.
double log_slab_density(const VectorXd& beta, double slab_variance);

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t newton_iters = 0;

  double hit_rate() const noexcept {
    const auto total = hits + misses;
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  }
};

/// Per-chain memo of model evaluations with optional LRU capacity. Linear
/// families use the closed form (from a precomputed Gram matrix); the others
/// use Laplace, warm-started from any cached parent model.
class ModelCache {
 public:
  ModelCache(const Dataset& d, double psi, QuasiFamily fam, PriorConfig prior, NewtonOptions newton = {},
             std::optional<std::size_t> cap = std::nullopt);

  /// Returns a reference valid until the next call.
  const ModelEvaluation& get_or_eval(const ModelIndicator& gamma);

  /// Lookup without evaluating or touching recency.
  const ModelEvaluation* peek(const ModelIndicator& gamma) const;

  const CacheStats& stats() const noexcept { return stats_; }
  std::size_t size() const noexcept { return map_.size(); }
  double psi() const noexcept { return psi_; }
  const QuasiFamily& family() const noexcept { return fam_; }
  const PriorConfig& prior() const noexcept { return prior_; }

  /// One JSON object per line: {"gamma": hex, "log_qmarginal": v, "beta": [...]},
  /// ordered by gamma.
  void dump_jsonl(std::ostream& os) const;

 private:
  struct Slot {
    ModelEvaluation eval;
    std::list<ModelIndicator>::iterator lru_pos;
  };

  ModelEvaluation evaluate(const ModelIndicator& gamma) const;

  const Dataset& data_;
  double psi_;
  QuasiFamily fam_;
  PriorConfig prior_;
  NewtonOptions newton_;
  std::optional<std::size_t> cap_;
  MatrixXd gram_;
  VectorXd xty_;
  std::unordered_map<ModelIndicator, Slot> map_;
  std::list<ModelIndicator> lru_;
  CacheStats stats_;
};

}  // namespace qpvs
