#include "qpvs/simbench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/student_t_distribution.hpp>
#include <json.hpp>

#include "qpvs/error.hpp"
#include "qpvs/io.hpp"
#include "qpvs/quasilik.hpp"

namespace qpvs {

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::OverdispersedCounts: return "counts";
    case ScenarioKind::HeavyTailLinear: return "heavy_tails";
    case ScenarioKind::InlierLinear: return "inliers";
  }
  return "unknown";
}

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "counts") return ScenarioKind::OverdispersedCounts;
  if (name == "heavy_tails") return ScenarioKind::HeavyTailLinear;
  if (name == "inliers") return ScenarioKind::InlierLinear;
  fail(ErrorCode::InvalidArgument, "unknown scenario '" + name + "' (expected counts, heavy_tails or inliers)");
}

ScenarioSpec ScenarioSpec::make(ScenarioKind kind, std::size_t n, std::uint64_t seed) {
  ScenarioSpec s;
  s.kind = kind;
  s.n = n;
  s.replicate_seed = seed;
  switch (kind) {
    case ScenarioKind::OverdispersedCounts:
      s.beta_star = VectorXd::Zero(20);
      s.beta_star[0] = 3.5;
      s.beta_star[6] = 1.5;
      s.beta_star[8] = -0.3;
      s.beta_star[9] = 0.3;
      s.psi_star = 5.5;
      break;
    case ScenarioKind::HeavyTailLinear:
      s.beta_star = VectorXd::Zero(20);
      s.beta_star.head(4) << 0.3, 0.6, -0.6, 0.3;
      s.psi_star = 1.0;
      s.nu = 3.0;
      break;
    case ScenarioKind::InlierLinear:
      s.beta_star = VectorXd::Zero(51);
      s.beta_star.segment(1, 4).setConstant(0.1);
      s.psi_star = 1.0 / 40.0;
      break;
  }
  return s;
}

std::vector<bool> ScenarioSpec::truth() const {
  std::vector<bool> t(p());
  for (std::size_t j = 0; j < p(); ++j) t[j] = beta_star[static_cast<Eigen::Index>(j)] != 0.0;
  return t;
}

namespace {

std::vector<std::string> default_names(std::size_t p) {
  std::vector<std::string> names{"(Intercept)"};
  for (std::size_t j = 1; j < p; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

void check_spec(const ScenarioSpec& spec, ScenarioKind expected) {
  if (spec.kind != expected) fail(ErrorCode::InvalidArgument, "generator called with the wrong scenario kind");
  if (spec.n < 1 || spec.p() < 1) fail(ErrorCode::InvalidArgument, "scenario needs n >= 1 and p >= 1");
}

// Intercept column followed by iid N(0,1) entries, filled row by row.
MatrixXd gaussian_design(std::size_t n, std::size_t p, CounterRng& rng) {
  boost::random::normal_distribution<double> normal;
  MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < X.cols(); ++j) X(i, j) = normal(rng);
  }
  return X;
}

bool is_count_vector(const VectorXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] < 0.0 || y[i] != std::floor(y[i])) return false;
  return true;
}

}  // namespace

Dataset gen_counts(const ScenarioSpec& spec, CounterRng& rng) {
  check_spec(spec, ScenarioKind::OverdispersedCounts);
  Dataset d;
  d.X = gaussian_design(spec.n, spec.p(), rng);
  d.column_names = default_names(spec.p());
  d.y.resize(d.X.rows());
  const VectorXd eta = d.X * spec.beta_star;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double mu = std::exp(eta[i]);
    boost::random::gamma_distribution<double> gamma(mu / spec.psi_star, spec.psi_star);
    d.y[i] = std::floor(gamma(rng) + 0.5);
  }
  return d;
}

Dataset gen_heavy_tails(const ScenarioSpec& spec, CounterRng& rng) {
  check_spec(spec, ScenarioKind::HeavyTailLinear);
  if (!(spec.nu > 2.0)) fail(ErrorCode::InvalidArgument, "heavy-tail generator needs nu > 2");
  Dataset d;
  d.X = gaussian_design(spec.n, spec.p(), rng);
  d.column_names = default_names(spec.p());
  const VectorXd mu = d.X * spec.beta_star;
  d.y.resize(mu.size());
  if (std::isinf(spec.nu)) {
    boost::random::normal_distribution<double> normal(0.0, std::sqrt(spec.psi_star));
    for (Eigen::Index i = 0; i < mu.size(); ++i) d.y[i] = mu[i] + normal(rng);
  } else {
    const double scale = std::sqrt((spec.nu - 2.0) / spec.nu * spec.psi_star);
    boost::random::student_t_distribution<double> t(spec.nu);
    for (Eigen::Index i = 0; i < mu.size(); ++i) d.y[i] = mu[i] + scale * t(rng);
  }
  return d;
}

Dataset gen_inliers(const ScenarioSpec& spec, CounterRng& rng) {
  check_spec(spec, ScenarioKind::InlierLinear);
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto p = static_cast<Eigen::Index>(spec.p());
  boost::random::normal_distribution<double> normal;
  const double noise_sd = std::sqrt(2.0 * spec.psi_star);
  Dataset d;
  d.X = MatrixXd::Zero(n, p);
  d.y.resize(n);
  d.column_names = default_names(spec.p());
  for (Eigen::Index i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    const bool inlier = rng.uniform() < 0.5;
    if (!inlier)
      for (Eigen::Index j = 1; j < p; ++j) d.X(i, j) = normal(rng);
    const double mu = d.X.row(i).dot(spec.beta_star);
    d.y[i] = inlier ? mu : mu + noise_sd * normal(rng);
  }
  return d;
}

Dataset generate(const ScenarioSpec& spec, CounterRng& rng) {
  switch (spec.kind) {
    case ScenarioKind::OverdispersedCounts: return gen_counts(spec, rng);
    case ScenarioKind::HeavyTailLinear: return gen_heavy_tails(spec, rng);
    case ScenarioKind::InlierLinear: return gen_inliers(spec, rng);
  }
  fail(ErrorCode::InvalidArgument, "unknown scenario kind");
}

std::string Method::label() const {
  switch (kind) {
    case MethodKind::QuasiPosterior: return "qp";
    case MethodKind::PoissonLikelihood: return "poisson";
    case MethodKind::NegBinQuasi: return "negbin";
  }
  return "unknown";
}

Method parse_method(const std::string& name, ScenarioKind scenario) {
  const bool counts = scenario == ScenarioKind::OverdispersedCounts;
  if (name == "qp") return Method::qp(counts ? FamilyKind::PoissonLog : FamilyKind::LinearIdentity);
  if (name == "poisson" || name == "negbin") {
    if (!counts) fail(ErrorCode::InvalidArgument, "method '" + name + "' needs count data");
    return name == "poisson" ? Method::poisson() : Method::negbin();
  }
  fail(ErrorCode::InvalidArgument, "unknown method '" + name + "' (expected qp, poisson or negbin)");
}

ReplicateReport run_method(const Dataset& d, const Method& method, const PriorConfig& prior, const RunConfig& run,
                           const BitVector& forced_in, const std::optional<std::vector<bool>>& truth) {
  const auto start = std::chrono::steady_clock::now();
  ReplicateReport rep;
  rep.n = d.n();
  rep.method = method.label();

  QuasiFamily fam = QuasiFamily::poisson();
  double psi = 1.0;
  switch (method.kind) {
    case MethodKind::QuasiPosterior: {
      if (method.family == FamilyKind::NegBinLog)
        fail(ErrorCode::WrongFamily, "quasi-posterior method takes the linear or Poisson family");
      fam = method.family == FamilyKind::LinearIdentity ? QuasiFamily::linear() : QuasiFamily::poisson();
      psi = estimate_dispersion(d, fam, run.dispersion, run.seed, &forced_in).psi;
      break;
    }
    case MethodKind::PoissonLikelihood:
      if (!is_count_vector(d.y)) fail(ErrorCode::InvalidArgument, "Poisson likelihood needs non-negative integer y");
      break;
    case MethodKind::NegBinQuasi:
      if (!is_count_vector(d.y)) fail(ErrorCode::InvalidArgument, "negative binomial needs non-negative integer y");
      rep.theta_used = estimate_nb_theta(d);
      fam = QuasiFamily::negbin(rep.theta_used);
      break;
  }
  rep.psi_used = psi;

  const SamplerOutput out = gibbs_run(d, fam, prior, run, psi, forced_in);
  rep.rb_ppi = to_std(out.rb_ppi);
  rep.cache_stats = out.cache_stats;
  rep.median.selection = select_median(rep.rb_ppi);
  rep.bfdr.selection = select_bfdr(rep.rb_ppi, run.fdr_alpha);
  if (truth) {
    std::vector<bool> scored(d.p());
    for (std::size_t j = 0; j < d.p(); ++j) scored[j] = !forced_in.test(j);
    rep.median.metrics = score_selection(rep.median.selection.selected, *truth, scored);
    rep.bfdr.metrics = score_selection(rep.bfdr.selection.selected, *truth, scored);
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::uint64_t replicate_seed(std::uint64_t seed, ScenarioKind kind, std::size_t n, std::size_t rep) {
  return seed ^ derive_seed(hash_string(to_string(kind)), {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
}

GridResult run_scenario_grid(const GridConfig& cfg) {
  cfg.prior.validate();
  cfg.run.validate();
  if (cfg.replicates < 1) fail(ErrorCode::InvalidArgument, "need at least one replicate");
  if (cfg.scenarios.empty() || cfg.n_grid.empty() || cfg.methods.empty())
    fail(ErrorCode::InvalidArgument, "scenario, n and method lists must be non-empty");

  struct Task {
    ScenarioKind kind;
    std::size_t n;
    std::size_t rep;
    std::vector<Method> methods;
  };
  std::vector<Task> tasks;
  for (const auto kind : cfg.scenarios) {
    std::vector<Method> methods;
    for (const auto& m : cfg.methods) methods.push_back(parse_method(m, kind));
    for (const auto n : cfg.n_grid)
      for (std::size_t r = 0; r < cfg.replicates; ++r) tasks.push_back({kind, n, r, methods});
  }

  std::vector<std::vector<ReplicateReport>> slots(tasks.size());
  auto run_task = [&](std::size_t t) {
    const Task& task = tasks[t];
    const std::uint64_t seed = replicate_seed(cfg.run.seed, task.kind, task.n, task.rep);
    const ScenarioSpec spec = ScenarioSpec::make(task.kind, task.n, seed);
    CounterRng rng(seed, hash_string("data"));
    std::optional<Dataset> data;
    std::string data_error;
    try {
      data = generate(spec, rng);
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    const BitVector forced = intercept_mask(spec.p(), true);
    RunConfig run = cfg.run;
    run.seed = seed;
    for (const auto& method : task.methods) {
      ReplicateReport rep;
      try {
        if (!data) fail(ErrorCode::InvalidArgument, data_error);
        rep = run_method(*data, method, cfg.prior, run, forced, spec.truth());
      } catch (const std::exception& e) {
        rep.failed = true;
        rep.error = e.what();
        rep.method = method.label();
        rep.n = task.n;
      }
      rep.scenario = to_string(task.kind);
      rep.replicate = task.rep;
      slots[t].push_back(std::move(rep));
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, tasks.size()));
  if (jobs == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) run_task(t);
      });
    for (auto& th : pool) th.join();
  }

  GridResult result;
  for (auto& s : slots)
    for (auto& r : s) result.reports.push_back(std::move(r));
  result.aggregates = aggregate_reports(result.reports);
  return result;
}

namespace {

double metric_value(const RuleOutcome& o, const std::string& metric) {
  if (metric == "size") return static_cast<double>(o.selection.size());
  const SelectionMetrics& m = *o.metrics;
  if (metric == "fdr") return m.fdr;
  if (metric == "power") return m.power;
  if (metric == "f1") return m.f1;
  return m.mcc;
}

const RuleOutcome& outcome(const ReplicateReport& r, const std::string& rule) {
  return rule == "median" ? r.median : r.bfdr;
}

bool scorable(const ReplicateReport& r) { return !r.failed && r.median.metrics && r.bfdr.metrics; }

const char* const kRules[] = {"median", "bfdr"};

}  // namespace

std::vector<AggregateRow> aggregate_reports(const std::vector<ReplicateReport>& reports) {
  using Cell = std::tuple<std::string, std::size_t, std::string>;
  std::vector<Cell> order;
  std::map<Cell, std::vector<const ReplicateReport*>> groups;
  for (const auto& r : reports) {
    if (!scorable(r)) continue;
    Cell key{r.scenario, r.n, r.method};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<AggregateRow> rows;
  for (const auto& key : order) {
    const auto& members = groups[key];
    for (const char* rule : kRules) {
      for (const char* metric : kAggregateMetrics) {
        AggregateRow row{std::get<0>(key), std::get<1>(key), std::get<2>(key), rule, metric};
        row.R = members.size();
        double sum = 0.0;
        for (const auto* r : members) sum += metric_value(outcome(*r, rule), metric);
        row.mean = sum / static_cast<double>(row.R);
        if (row.R > 1) {
          double ss = 0.0;
          for (const auto* r : members) {
            const double dv = metric_value(outcome(*r, rule), metric) - row.mean;
            ss += dv * dv;
          }
          row.se = std::sqrt(ss / static_cast<double>(row.R - 1)) / std::sqrt(static_cast<double>(row.R));
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

void write_results_csv(std::ostream& os, const GridResult& result) {
  os << "scenario,n,method,rule,metric,replicate,mean,se,R\n";
  for (const auto& agg : result.aggregates) {
    for (const auto& r : result.reports) {
      if (!scorable(r) || r.scenario != agg.scenario || r.n != agg.n || r.method != agg.method) continue;
      os << r.scenario << ',' << r.n << ',' << r.method << ',' << agg.rule << ',' << agg.metric << ','
         << r.replicate << ',' << format_double(metric_value(outcome(r, agg.rule), agg.metric)) << ",0,1\n";
    }
    os << agg.scenario << ',' << agg.n << ',' << agg.method << ',' << agg.rule << ',' << agg.metric << ",all,"
       << format_double(agg.mean) << ',' << format_double(agg.se) << ',' << agg.R << '\n';
  }
}

namespace {

nlohmann::json outcome_json(const RuleOutcome& o) {
  nlohmann::json j;
  std::vector<std::size_t> sel;
  for (std::size_t k = 0; k < o.selection.selected.size(); ++k)
    if (o.selection.selected[k]) sel.push_back(k);
  j["selected"] = sel;
  j["threshold"] = o.selection.implicit_threshold;
  if (o.metrics) {
    const auto& m = *o.metrics;
    j["metrics"] = {{"fdr", m.fdr}, {"power", m.power}, {"f1", m.f1}, {"mcc", m.mcc},
                    {"tp", m.tp},   {"fp", m.fp},       {"tn", m.tn}, {"fn", m.fn}};
  }
  return j;
}

}  // namespace

void write_replicates_jsonl(std::ostream& os, const std::vector<ReplicateReport>& reports, bool include_timing) {
  for (const auto& r : reports) {
    nlohmann::json j;
    j["scenario"] = r.scenario;
    j["n"] = r.n;
    j["replicate"] = r.replicate;
    j["method"] = r.method;
    j["failed"] = r.failed;
    if (r.failed) {
      j["error"] = r.error;
    } else {
      j["rb_ppi"] = r.rb_ppi;
      j["psi_used"] = r.psi_used;
      j["theta_used"] = r.theta_used;
      j["median"] = outcome_json(r.median);
      j["bfdr"] = outcome_json(r.bfdr);
      j["cache"] = {{"hits", r.cache_stats.hits},
                    {"misses", r.cache_stats.misses},
                    {"evictions", r.cache_stats.evictions},
                    {"hit_rate", r.cache_stats.hit_rate()}};
    }
    if (include_timing) j["wall_seconds"] = r.wall_seconds;
    os << j.dump() << '\n';
  }
}

double nested_bf_statistic(const Dataset& d, const ModelIndicator& gamma, const ModelIndicator& gamma_star,
                           const QuasiFamily& fam, double psi, const NewtonOptions& opt) {
  if (gamma.p() != d.p() || gamma_star.p() != d.p())
    fail(ErrorCode::LengthMismatch, "model indicators must have length p");
  if (!gamma_star.bits.is_subset_of(gamma.bits)) fail(ErrorCode::NotNested, "gamma_star is not contained in gamma");
  if (!(psi > 0.0)) fail(ErrorCode::NonPositiveDispersion, "dispersion must be positive");
  if (gamma.bits == gamma_star.bits) return 0.0;
  auto max_nq = [&](const ModelIndicator& g) {
    const auto cols = g.active();
    const MatrixXd Xg = submatrix(d.X, cols);
    if (cols.empty()) return quasi_loglik(d.y, Xg, VectorXd(), psi, fam);
    const NewtonResult fit =
        newton_maximize(d.y, Xg, psi, fam, 0.0, VectorXd::Zero(static_cast<Eigen::Index>(cols.size())), opt);
    return quasi_loglik(d.y, Xg, fit.beta, psi, fam);
  };
  return 2.0 * (max_nq(gamma) - max_nq(gamma_star));
}

}  // namespace qpvs
