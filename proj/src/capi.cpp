#include "qpvs/qpvs.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>

#include <json.hpp>

#include "qpvs/diagnostics.hpp"
#include "qpvs/error.hpp"
#include "qpvs/io.hpp"
#include "qpvs/marginal.hpp"
#include "qpvs/quasilik.hpp"
#include "qpvs/sampler.hpp"
#include "qpvs/selection.hpp"
#include "qpvs/simbench.hpp"

using namespace qpvs;
using nlohmann::json;

struct qpvs_dataset {
  Dataset data;
};

struct qpvs_fit {
  std::unique_ptr<Dataset> data;
  QuasiFamily fam = QuasiFamily::poisson();
  PriorConfig prior;
  RunConfig run;
  double psi = 1.0;
  BitVector forced;
  std::unique_ptr<ModelCache> cache;
  SamplerOutput out;
  SelectionResult median;
  SelectionResult bfdr;
  ModelIndicator bfdr_model;
  BetaDraws beta;
};

namespace {

thread_local std::string g_last_error;

template <class F>
qpvs_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return QPVS_OK;
  } catch (const Error& e) {
    g_last_error = std::string("[") + to_string(e.code()) + "] " + e.what();
    return is_numeric_failure(e.code()) ? QPVS_E_NUMERIC : QPVS_E_INPUT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return QPVS_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return QPVS_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

std::vector<std::string> split_list(const char* s) {
  std::vector<std::string> out;
  if (!s) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

PriorConfig to_prior(const qpvs_run_options& o) {
  PriorConfig p;
  p.slab_variance = o.slab_variance;
  if (o.fixed_w)
    p.sparsity = FixedSparsity{o.w};
  else
    p.sparsity = BetaBinomialSparsity{o.beta_a, o.beta_b};
  p.validate();
  return p;
}

RunConfig to_run(const qpvs_run_options& o) {
  RunConfig r;
  r.sweeps = o.sweeps;
  r.burn_in = o.burn_in;
  r.seed = o.seed;
  r.fdr_alpha = o.fdr_alpha;
  if (o.cache_cap > 0) r.cache_cap = o.cache_cap;
  switch (o.dispersion) {
    case QPVS_DISPERSION_QMLE: r.dispersion = FullModelQmle{}; break;
    case QPVS_DISPERSION_L1: r.dispersion = L1Regularized{o.l1_folds, 20}; break;
    case QPVS_DISPERSION_FIXED: r.dispersion = FixedDispersion{o.fixed_psi}; break;
    default: fail(ErrorCode::InvalidArgument, "unknown dispersion mode");
  }
  r.validate();
  return r;
}

QuasiFamily base_family(int family) {
  switch (family) {
    case QPVS_FAMILY_LINEAR: return QuasiFamily::linear();
    case QPVS_FAMILY_POISSON: return QuasiFamily::poisson();
    case QPVS_FAMILY_NEGBIN: return QuasiFamily::poisson();
    default: fail(ErrorCode::InvalidArgument, "unknown family");
  }
}

SelectionRule to_rule(int rule) {
  switch (rule) {
    case QPVS_RULE_MEDIAN: return SelectionRule::MedianProbability;
    case QPVS_RULE_BFDR: return SelectionRule::BayesFdr;
    default: fail(ErrorCode::InvalidArgument, "unknown selection rule");
  }
}

BitVector forced_mask(const Dataset& d, bool force_intercept, const char* extra) {
  BitVector mask(d.p());
  for (std::size_t j = 0; j < d.p(); ++j)
    if (force_intercept && d.column_names[j] == "(Intercept)") mask.set(j);
  for (const auto& name : split_list(extra)) {
    const auto it = std::find(d.column_names.begin(), d.column_names.end(), name);
    if (it == d.column_names.end()) fail(ErrorCode::MissingColumn, "forced column '" + name + "' not found");
    mask.set(static_cast<std::size_t>(it - d.column_names.begin()));
  }
  return mask;
}

struct Prepared {
  QuasiFamily fam = QuasiFamily::poisson();
  double psi = 1.0;
  BitVector forced;
};

// Resolves the family (estimating theta when needed), the dispersion and the forced-in mask.
Prepared prepare(const Dataset& d, const qpvs_fit_options& o, const RunConfig& run) {
  Prepared p;
  p.forced = forced_mask(d, o.force_intercept != 0, o.forced);
  if (o.family == QPVS_FAMILY_NEGBIN) {
    p.fam = QuasiFamily::negbin(o.negbin_theta > 0.0 ? o.negbin_theta : estimate_nb_theta(d));
    p.psi = 1.0;
  } else {
    p.fam = base_family(o.family);
    p.psi = estimate_dispersion(d, p.fam, run.dispersion, run.seed, &p.forced).psi;
  }
  return p;
}

std::vector<std::string> names_where(const Dataset& d, const std::vector<bool>& sel) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < sel.size(); ++j)
    if (sel[j]) out.push_back(d.column_names[j]);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  return os;
}

void check_len(std::size_t len, std::size_t p) {
  if (len != p) fail(ErrorCode::LengthMismatch, "output length must equal p = " + std::to_string(p));
}

}  // namespace

extern "C" {

const char* qpvs_last_error(void) { return g_last_error.c_str(); }
const char* qpvs_version(void) { return "0.1.0"; }

qpvs_status qpvs_dataset_read_csv(const char* path, int add_intercept, int standardize, qpvs_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto h = std::make_unique<qpvs_dataset>();
    h->data = read_dataset_csv(std::string(path), CsvOptions{add_intercept != 0, standardize != 0});
    *out = h.release();
  });
}

qpvs_status qpvs_dataset_create(size_t n, size_t p, const double* y, const double* x, const char* const* names,
                                qpvs_dataset** out) {
  return guarded([&] {
    require(y, "y");
    require(x, "x");
    require(out, "out");
    *out = nullptr;
    auto h = std::make_unique<qpvs_dataset>();
    const auto nn = static_cast<Eigen::Index>(n), pp = static_cast<Eigen::Index>(p);
    h->data.y = Eigen::Map<const VectorXd>(y, nn);
    h->data.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x, nn, pp);
    for (std::size_t j = 0; j < p; ++j) {
      if (names && !names[j]) fail(ErrorCode::InvalidArgument, "column name must not be NULL");
      h->data.column_names.push_back(names ? std::string(names[j]) : "x" + std::to_string(j));
    }
    validate_dataset(h->data);
    *out = h.release();
  });
}

void qpvs_dataset_free(qpvs_dataset* d) { delete d; }
size_t qpvs_dataset_n(const qpvs_dataset* d) { return d ? d->data.n() : 0; }
size_t qpvs_dataset_p(const qpvs_dataset* d) { return d ? d->data.p() : 0; }

void qpvs_run_options_init(qpvs_run_options* o) {
  if (!o) return;
  *o = qpvs_run_options{};
  o->slab_variance = 9.0;
  o->fixed_w = 0;
  o->w = 0.5;
  o->beta_a = 1.0;
  o->beta_b = 1.0;
  o->sweeps = 3000;
  o->burn_in = 1500;
  o->seed = 1;
  o->fdr_alpha = 0.05;
  o->dispersion = QPVS_DISPERSION_QMLE;
  o->fixed_psi = 1.0;
  o->l1_folds = 5;
  o->cache_cap = 0;
}

void qpvs_fit_options_init(qpvs_fit_options* o) {
  if (!o) return;
  *o = qpvs_fit_options{};
  qpvs_run_options_init(&o->run);
  o->family = QPVS_FAMILY_POISSON;
  o->negbin_theta = 0.0;
  o->force_intercept = 1;
  o->forced = nullptr;
  o->beta_draws = 1000;
}

qpvs_status qpvs_fit_run(const qpvs_dataset* d, const qpvs_fit_options* o, qpvs_fit** out) {
  return guarded([&] {
    require(d, "dataset");
    require(o, "options");
    require(out, "out");
    *out = nullptr;
    auto f = std::make_unique<qpvs_fit>();
    f->data = std::make_unique<Dataset>(d->data);
    f->prior = to_prior(o->run);
    f->run = to_run(o->run);
    Prepared prep = prepare(*f->data, *o, f->run);
    f->fam = prep.fam;
    f->psi = prep.psi;
    f->forced = prep.forced;
    f->cache = std::make_unique<ModelCache>(*f->data, f->psi, f->fam, f->prior,
                                            NewtonOptions{f->run.newton_tol, f->run.newton_max_iter}, f->run.cache_cap);
    f->out = gibbs_run(*f->cache, f->data->p(), f->prior, f->run, f->forced);
    const auto ppi = to_std(f->out.rb_ppi);
    f->median = select_median(ppi);
    f->bfdr = select_bfdr(ppi, f->run.fdr_alpha);
    f->bfdr_model = ModelIndicator::forced_only(f->forced);
    for (std::size_t j = 0; j < ppi.size(); ++j)
      if (f->bfdr.selected[j]) f->bfdr_model.bits.set(j);
    if (o->beta_draws > 0) {
      f->beta = sample_beta_given_gamma(*f->data, f->bfdr_model, f->fam, f->prior, f->psi, o->beta_draws,
                                        derive_seed(f->run.seed, {hash_string("beta-draws")}), true,
                                        {f->run.newton_tol, f->run.newton_max_iter});
    }
    *out = f.release();
  });
}

void qpvs_fit_free(qpvs_fit* f) { delete f; }
size_t qpvs_fit_p(const qpvs_fit* f) { return f ? f->data->p() : 0; }
double qpvs_fit_psi(const qpvs_fit* f) { return f ? f->psi : 0.0; }
double qpvs_fit_theta(const qpvs_fit* f) { return f ? f->fam.theta() : 0.0; }
double qpvs_fit_cache_hit_rate(const qpvs_fit* f) { return f ? f->out.cache_stats.hit_rate() : 0.0; }

qpvs_status qpvs_fit_ppi(const qpvs_fit* f, double* out, size_t len) {
  return guarded([&] {
    require(f, "fit");
    require(out, "out");
    check_len(len, f->data->p());
    std::copy(f->out.rb_ppi.data(), f->out.rb_ppi.data() + f->out.rb_ppi.size(), out);
  });
}

qpvs_status qpvs_fit_selected(const qpvs_fit* f, int rule, int* out, size_t len) {
  return guarded([&] {
    require(f, "fit");
    require(out, "out");
    check_len(len, f->data->p());
    const auto& sel = to_rule(rule) == SelectionRule::MedianProbability ? f->median : f->bfdr;
    for (std::size_t j = 0; j < len; ++j) out[j] = sel.selected[j] ? 1 : 0;
  });
}

qpvs_status qpvs_fit_write(const qpvs_fit* f, const char* dir, int gamma_draws, int cache_dump) {
  return guarded([&] {
    require(f, "fit");
    require(dir, "dir");
    const std::string base = std::string(dir) + "/";
    const Dataset& d = *f->data;
    {
      auto os = open_out(base + "rb_ppi.csv");
      write_rb_ppi_csv(os, d, f->out.rb_ppi);
    }
    {
      auto os = open_out(base + "cumulative_ppi.csv");
      write_cumulative_ppi_csv(os, d, f->out);
    }
    {
      const auto active = f->bfdr_model.active();
      std::vector<std::string> header{"draw"};
      for (auto j : active) header.push_back(d.column_names[j]);
      const auto rows = f->beta.draws.rows();
      MatrixXd m(rows, static_cast<Eigen::Index>(header.size()));
      for (Eigen::Index r = 0; r < rows; ++r) {
        m(r, 0) = static_cast<double>(r + 1);
        for (std::size_t k = 0; k < active.size(); ++k)
          m(r, static_cast<Eigen::Index>(k + 1)) = f->beta.draws(r, static_cast<Eigen::Index>(active[k]));
      }
      auto os = open_out(base + "beta_samples.csv");
      write_matrix_csv(os, header, m);
    }
    {
      json j;
      j["family"] = f->fam.name();
      if (f->fam.kind() == FamilyKind::NegBinLog) j["theta"] = f->fam.theta();
      j["psi"] = f->psi;
      j["n"] = d.n();
      j["p"] = d.p();
      j["names"] = d.column_names;
      j["forced"] = names_where(d, f->forced.to_bools());
      j["ppi"] = to_std(f->out.rb_ppi);
      j["median"] = {{"threshold", f->median.implicit_threshold}, {"selected", names_where(d, f->median.selected)}};
      j["bfdr"] = {{"alpha", f->bfdr.alpha},
                   {"threshold", f->bfdr.implicit_threshold},
                   {"selected", names_where(d, f->bfdr.selected)}};
      j["beta_samples"] = {{"draws", f->beta.draws.rows()}, {"acceptance_rate", f->beta.acceptance_rate}};
      const auto& cs = f->out.cache_stats;
      j["sampler"] = {{"sweeps", f->out.sweeps()},
                      {"burn_in", f->out.burn_in},
                      {"visited_models", f->out.visited_models},
                      {"cache_hits", cs.hits},
                      {"cache_misses", cs.misses},
                      {"cache_hit_rate", cs.hit_rate()}};
      auto os = open_out(base + "selection.json");
      os << j.dump(2) << '\n';
    }
    if (gamma_draws) write_gamma_draws_gz(base + "gamma_draws.txt.gz", f->out);
    if (cache_dump) {
      auto os = open_out(base + "cache.jsonl");
      f->cache->dump_jsonl(os);
    }
  });
}

qpvs_status qpvs_oracle_check(const qpvs_dataset* d, const qpvs_fit_options* o, double* ppi_out, size_t len,
                              const char* json_path) {
  return guarded([&] {
    require(d, "dataset");
    require(o, "options");
    const PriorConfig prior = to_prior(o->run);
    const RunConfig run = to_run(o->run);
    if (!prior.fixed_w()) fail(ErrorCode::InvalidArgument, "enumeration needs a fixed w (set fixed_w)");
    const Prepared prep = prepare(d->data, *o, run);
    const ExactPosterior post = enumerate_exact(d->data, prep.fam, prior, prep.psi, prep.forced,
                                                {run.newton_tol, run.newton_max_iter});
    if (ppi_out) {
      check_len(len, d->data.p());
      std::copy(post.ppi.data(), post.ppi.data() + post.ppi.size(), ppi_out);
    }
    if (json_path) {
      std::vector<const EnumeratedModel*> models;
      for (const auto& m : post.models) models.push_back(&m);
      std::stable_sort(models.begin(), models.end(),
                       [](const auto* a, const auto* b) { return a->probability > b->probability; });
      json j;
      j["psi"] = prep.psi;
      j["names"] = d->data.column_names;
      j["ppi"] = to_std(post.ppi);
      j["models"] = json::array();
      for (const auto* m : models)
        j["models"].push_back({{"gamma", m->gamma.bits.to_hex()},
                               {"active", names_where(d->data, m->gamma.bits.to_bools())},
                               {"log_marginal", m->log_marginal},
                               {"probability", m->probability}});
      auto os = open_out(json_path);
      os << j.dump(2) << '\n';
    }
  });
}

void qpvs_simulate_options_init(qpvs_simulate_options* o) {
  if (!o) return;
  *o = qpvs_simulate_options{};
  qpvs_run_options_init(&o->run);
  o->scenarios = "counts";
  o->n_grid = "200";
  o->replicates = 50;
  o->methods = "qp";
  o->jobs = 1;
  o->include_timing = 0;
}

qpvs_status qpvs_simulate(const qpvs_simulate_options* o, const char* results_csv, const char* jsonl_path) {
  return guarded([&] {
    require(o, "options");
    require(results_csv, "results_csv");
    GridConfig cfg;
    for (const auto& s : split_list(o->scenarios)) cfg.scenarios.push_back(parse_scenario(s));
    for (const auto& s : split_list(o->n_grid)) {
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(s, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != s.size() || v == 0) fail(ErrorCode::InvalidArgument, "invalid sample size '" + s + "'");
      cfg.n_grid.push_back(static_cast<std::size_t>(v));
    }
    cfg.methods = split_list(o->methods);
    cfg.replicates = o->replicates;
    cfg.prior = to_prior(o->run);
    cfg.run = to_run(o->run);
    cfg.jobs = o->jobs;
    // Resolve method names up front so bad input fails before any work.
    for (const auto kind : cfg.scenarios)
      for (const auto& m : cfg.methods) parse_method(m, kind);
    const GridResult result = run_scenario_grid(cfg);
    {
      auto os = open_out(results_csv);
      write_results_csv(os, result);
    }
    if (jsonl_path) {
      auto os = open_out(jsonl_path);
      write_replicates_jsonl(os, result.reports, o->include_timing != 0);
    }
  });
}

void qpvs_diagnose_options_init(qpvs_diagnose_options* o) {
  if (!o) return;
  *o = qpvs_diagnose_options{};
  qpvs_run_options_init(&o->run);
  o->methods = "qp,poisson,negbin";
  o->family = QPVS_FAMILY_POISSON;
  o->rule = QPVS_RULE_MEDIAN;
  o->folds = 10;
  o->force_intercept = 1;
}

qpvs_status qpvs_diagnose(const qpvs_dataset* d, const qpvs_diagnose_options* o, const char* bins_csv,
                          const char* summary_json) {
  return guarded([&] {
    require(d, "dataset");
    require(o, "options");
    require(bins_csv, "bins_csv");
    require(summary_json, "summary_json");
    const Dataset& data = d->data;
    const PriorConfig prior = to_prior(o->run);
    const RunConfig run = to_run(o->run);
    if (o->folds > 0 && data.n() < 6 * o->folds)
      fail(ErrorCode::InsufficientSamples, "cross-validation with " + std::to_string(o->folds) +
                                               " folds needs n >= " + std::to_string(6 * o->folds) +
                                               " (n = " + std::to_string(data.n()) + ")");
    std::vector<Method> methods;
    for (const auto& name : split_list(o->methods)) {
      if (name == "qp") {
        if (o->family == QPVS_FAMILY_NEGBIN) fail(ErrorCode::WrongFamily, "qp takes the linear or Poisson family");
        methods.push_back(Method::qp(o->family == QPVS_FAMILY_LINEAR ? FamilyKind::LinearIdentity
                                                                      : FamilyKind::PoissonLog));
      } else if (name == "poisson") {
        methods.push_back(Method::poisson());
      } else if (name == "negbin") {
        methods.push_back(Method::negbin());
      } else {
        fail(ErrorCode::InvalidArgument, "unknown method '" + name + "' (expected qp, poisson or negbin)");
      }
    }
    if (methods.empty()) fail(ErrorCode::InvalidArgument, "no methods given");
    const BitVector forced = forced_mask(data, o->force_intercept != 0, nullptr);
    const auto rule = to_rule(o->rule);

    std::vector<FittedMethod> fits;
    std::vector<FittedModel> models;
    for (const auto& m : methods) {
      fits.push_back(fit_for_diagnostics(data, m, prior, run, forced, rule));
      models.push_back(fits.back().model);
    }
    const BinnedDiagnostic diag = binned_mean_variance(data, models);
    std::vector<WmseRow> cv;
    if (o->folds > 0) cv = cv_wmse(data, methods, o->folds, run.seed, prior, run, forced, rule);

    json j;
    j["models"] = json::array();
    for (const auto& f : fits) {
      json m{{"label", f.model.label},
             {"selected", names_where(data, f.gamma.bits.to_bools())},
             {"psi", f.psi}};
      if (f.theta > 0.0) m["theta"] = f.theta;
      j["models"].push_back(m);
    }
    j["edges"] = diag.edges;
    j["bins_kept"] = diag.bins.size();
    j["adequacy"] = json::array();
    for (const auto& s : diag.scores)
      j["adequacy"].push_back({{"label", s.label},
                               {"mean_mse", s.mean_mse},
                               {"mean_mae", s.mean_mae},
                               {"var_mse", s.var_mse},
                               {"var_mae", s.var_mae}});
    j["folds"] = o->folds;
    j["wmse"] = json::array();
    for (const auto& r : cv)
      j["wmse"].push_back({{"label", r.label}, {"mean", r.mean}, {"se", r.se}, {"per_fold", r.per_fold}});
    {
      auto os = open_out(bins_csv);
      write_bins_csv(os, diag, models);
    }
    auto os = open_out(summary_json);
    os << j.dump(2) << '\n';
  });
}

}  // extern "C"
