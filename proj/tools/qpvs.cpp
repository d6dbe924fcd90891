// Command-line front end over the qpvs C API.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qpvs/qpvs.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchema = 1;

struct Config {
  std::string subcommand;
  std::string input;
  std::string family = "poisson";
  double theta = 0.0;
  bool intercept = true;
  bool standardize = false;
  std::string forced;
  std::size_t beta_draws = 1000;
  bool gamma_draws = false;
  bool cache_dump = false;

  std::uint64_t seed = 1;
  std::size_t sweeps = 3000;
  std::size_t burn_in = 1500;
  double slab_variance = 9.0;
  bool fixed_w = false;
  double w = 0.5;
  double beta_a = 1.0;
  double beta_b = 1.0;
  double alpha = 0.05;
  std::string dispersion = "qmle";
  double psi = 1.0;
  std::size_t l1_folds = 5;
  std::size_t cache_cap = 0;

  std::string scenarios = "counts";
  std::string n_grid = "200";
  std::size_t replicates = 50;
  std::string methods = "qp";
  std::size_t jobs = 1;
  bool timing = false;

  std::string rule = "median";
  std::size_t folds = 10;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Config, subcommand, input, family, theta, intercept, standardize,
                                                forced, beta_draws, gamma_draws, cache_dump, seed, sweeps, burn_in,
                                                slab_variance, fixed_w, w, beta_a, beta_b, alpha, dispersion, psi,
                                                l1_folds, cache_cap, scenarios, n_grid, replicates, methods, jobs,
                                                timing, rule, folds)

struct Failure {
  int code;
};

void check(qpvs_status st) {
  if (st != QPVS_OK) {
    std::cerr << "error: " << qpvs_last_error() << '\n';
    throw Failure{st};
  }
}

void input_error(const std::string& msg) {
  std::cerr << "error: " << msg << '\n';
  throw Failure{QPVS_E_INPUT};
}

int family_code(const std::string& f) {
  if (f == "linear") return QPVS_FAMILY_LINEAR;
  if (f == "poisson") return QPVS_FAMILY_POISSON;
  if (f == "negbin") return QPVS_FAMILY_NEGBIN;
  input_error("unknown family '" + f + "' (expected linear, poisson or negbin)");
  return -1;
}

qpvs_run_options run_options(const Config& c) {
  qpvs_run_options o;
  qpvs_run_options_init(&o);
  o.seed = c.seed;
  o.sweeps = c.sweeps;
  o.burn_in = c.burn_in;
  o.slab_variance = c.slab_variance;
  o.fixed_w = c.fixed_w ? 1 : 0;
  o.w = c.w;
  o.beta_a = c.beta_a;
  o.beta_b = c.beta_b;
  o.fdr_alpha = c.alpha;
  if (c.dispersion == "qmle") o.dispersion = QPVS_DISPERSION_QMLE;
  else if (c.dispersion == "l1") o.dispersion = QPVS_DISPERSION_L1;
  else if (c.dispersion == "fixed") o.dispersion = QPVS_DISPERSION_FIXED;
  else input_error("unknown dispersion mode '" + c.dispersion + "' (expected qmle, l1 or fixed)");
  o.fixed_psi = c.psi;
  o.l1_folds = c.l1_folds;
  o.cache_cap = c.cache_cap;
  return o;
}

struct DatasetHandle {
  qpvs_dataset* ptr = nullptr;
  ~DatasetHandle() { qpvs_dataset_free(ptr); }
};

void load(const Config& c, DatasetHandle& h) {
  if (c.input.empty()) input_error("--input is required");
  check(qpvs_dataset_read_csv(c.input.c_str(), c.intercept ? 1 : 0, c.standardize ? 1 : 0, &h.ptr));
}

qpvs_fit_options fit_options(const Config& c) {
  qpvs_fit_options o;
  qpvs_fit_options_init(&o);
  o.run = run_options(c);
  o.family = family_code(c.family);
  o.negbin_theta = c.theta;
  o.forced = c.forced.empty() ? nullptr : c.forced.c_str();
  o.beta_draws = c.beta_draws;
  return o;
}

void cmd_fit(const Config& c, const fs::path& out) {
  DatasetHandle d;
  load(c, d);
  const qpvs_fit_options o = fit_options(c);
  qpvs_fit* fit = nullptr;
  check(qpvs_fit_run(d.ptr, &o, &fit));
  const qpvs_status st = qpvs_fit_write(fit, out.string().c_str(), c.gamma_draws, c.cache_dump);
  qpvs_fit_free(fit);
  check(st);
}

void cmd_oracle(const Config& c, const fs::path& out) {
  DatasetHandle d;
  load(c, d);
  const qpvs_fit_options o = fit_options(c);
  std::vector<double> ppi(qpvs_dataset_p(d.ptr));
  check(qpvs_oracle_check(d.ptr, &o, ppi.data(), ppi.size(), (out / "oracle.json").string().c_str()));
  for (std::size_t j = 0; j < ppi.size(); ++j) std::printf("%zu %.10f\n", j, ppi[j]);
}

void cmd_simulate(const Config& c, const fs::path& out) {
  qpvs_simulate_options o;
  qpvs_simulate_options_init(&o);
  o.run = run_options(c);
  o.scenarios = c.scenarios.c_str();
  o.n_grid = c.n_grid.c_str();
  o.replicates = c.replicates;
  o.methods = c.methods.c_str();
  o.jobs = c.jobs;
  o.include_timing = c.timing ? 1 : 0;
  check(qpvs_simulate(&o, (out / "results.csv").string().c_str(), (out / "replicates.jsonl").string().c_str()));
}

void cmd_diagnose(const Config& c, const fs::path& out) {
  DatasetHandle d;
  load(c, d);
  qpvs_diagnose_options o;
  qpvs_diagnose_options_init(&o);
  o.run = run_options(c);
  o.methods = c.methods.c_str();
  o.family = family_code(c.family);
  if (c.rule == "median") o.rule = QPVS_RULE_MEDIAN;
  else if (c.rule == "bfdr") o.rule = QPVS_RULE_BFDR;
  else input_error("unknown rule '" + c.rule + "' (expected median or bfdr)");
  o.folds = c.folds;
  o.force_intercept = c.intercept ? 1 : 0;
  check(qpvs_diagnose(d.ptr, &o, (out / "bins.csv").string().c_str(), (out / "diagnostics.json").string().c_str()));
}

void execute(const Config& c, const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) input_error("cannot create output directory '" + out.string() + "': " + ec.message());
  if (c.subcommand == "fit") cmd_fit(c, out);
  else if (c.subcommand == "oracle-check") cmd_oracle(c, out);
  else if (c.subcommand == "simulate") cmd_simulate(c, out);
  else if (c.subcommand == "diagnose") cmd_diagnose(c, out);
  else input_error("unknown subcommand '" + c.subcommand + "'");

  json m = c;
  m["schema"] = kSchema;
  m["version"] = qpvs_version();
  std::ofstream os(out / "manifest.json", std::ios::binary);
  if (!os) input_error("cannot write manifest");
  os << m.dump(2) << '\n';
}

Config read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) input_error("cannot open manifest '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    input_error(std::string("malformed manifest: ") + e.what());
  }
  if (j.value("schema", 0) != kSchema) input_error("unsupported manifest schema");
  try {
    return j.get<Config>();
  } catch (const json::exception& e) {
    input_error(std::string("malformed manifest: ") + e.what());
  }
  return {};
}

void add_run_flags(CLI::App* sub, Config& c) {
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--sweeps", c.sweeps, "Gibbs sweeps");
  sub->add_option("--burn-in", c.burn_in, "Sweeps discarded before averaging");
  sub->add_option("--slab-variance", c.slab_variance, "Slab variance s^2");
  sub->add_option("--w", c.w, "Fixed prior inclusion probability (default: Beta(a, b) prior on w)")
      ->each([&c](const std::string&) { c.fixed_w = true; });
  sub->add_option("--beta-a", c.beta_a, "Beta prior shape a");
  sub->add_option("--beta-b", c.beta_b, "Beta prior shape b");
  sub->add_option("--alpha", c.alpha, "Bayesian FDR level");
  sub->add_option("--dispersion", c.dispersion, "Dispersion estimate: qmle, l1 or fixed")
      ->check(CLI::IsMember({"qmle", "l1", "fixed"}));
  sub->add_option("--psi", c.psi, "Dispersion used with --dispersion fixed");
  sub->add_option("--l1-folds", c.l1_folds, "Folds for the lasso penalty choice");
  sub->add_option("--cache-cap", c.cache_cap, "Model cache capacity (0: unbounded)");
}

void add_data_flags(CLI::App* sub, Config& c) {
  sub->add_option("--input", c.input, "CSV with a header and a response column named y")->required();
  sub->add_flag("!--no-intercept", c.intercept, "Do not prepend an intercept column");
  sub->add_flag("--standardize", c.standardize, "Z-score predictors");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-posterior Bayesian variable selection for GLMs"};
  app.require_subcommand(0, 1);
  Config c;
  std::string out_dir = "out";
  std::string manifest;
  app.add_option("--manifest", manifest, "Re-run the configuration stored in a manifest.json");
  app.add_option("--out", out_dir, "Output directory (for --manifest replays)");

  auto* fit = app.add_subcommand("fit", "Sample the model posterior for a CSV dataset");
  add_data_flags(fit, c);
  add_run_flags(fit, c);
  fit->add_option("--family", c.family, "linear, poisson or negbin")
      ->check(CLI::IsMember({"linear", "poisson", "negbin"}));
  fit->add_option("--theta", c.theta, "Negative binomial theta (default: estimated)");
  fit->add_option("--force", c.forced, "Comma-separated columns always included");
  fit->add_option("--beta-draws", c.beta_draws, "Coefficient draws for the BFDR-selected model");
  fit->add_flag("--gamma-draws", c.gamma_draws, "Write gamma_draws.txt.gz");
  fit->add_flag("--cache-dump", c.cache_dump, "Write cache.jsonl");
  fit->add_option("--out", out_dir, "Output directory");

  auto* oracle = app.add_subcommand("oracle-check", "Exact posterior by enumerating all models (p <= 15)");
  add_data_flags(oracle, c);
  add_run_flags(oracle, c);
  oracle->add_option("--family", c.family, "linear, poisson or negbin")
      ->check(CLI::IsMember({"linear", "poisson", "negbin"}));
  oracle->add_option("--theta", c.theta, "Negative binomial theta (default: estimated)");
  oracle->add_option("--force", c.forced, "Comma-separated columns always included");
  oracle->add_option("--out", out_dir, "Output directory");

  auto* sim = app.add_subcommand("simulate", "Run the simulation study grid");
  add_run_flags(sim, c);
  sim->add_option("--scenario", c.scenarios, "Comma-separated: counts, heavy_tails, inliers");
  sim->add_option("--n", c.n_grid, "Comma-separated sample sizes");
  sim->add_option("--replicates", c.replicates, "Replicates per cell");
  sim->add_option("--methods", c.methods, "Comma-separated: qp, poisson, negbin");
  sim->add_option("--jobs", c.jobs, "Worker threads");
  sim->add_flag("--timing", c.timing, "Record wall times in replicates.jsonl");
  sim->add_option("--out", out_dir, "Output directory");

  auto* diag = app.add_subcommand("diagnose", "Mean/variance adequacy and cross-validated WMSE");
  add_data_flags(diag, c);
  add_run_flags(diag, c);
  diag->add_option("--methods", c.methods, "Comma-separated: qp, poisson, negbin");
  diag->add_option("--family", c.family, "Family of the qp method: linear or poisson")
      ->check(CLI::IsMember({"linear", "poisson"}));
  diag->add_option("--rule", c.rule, "Selection rule for the refit: median or bfdr")
      ->check(CLI::IsMember({"median", "bfdr"}));
  diag->add_option("--folds", c.folds, "Cross-validation folds (0 skips)");
  diag->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return QPVS_E_INPUT;
  }

  try {
    if (!manifest.empty()) {
      if (!app.get_subcommands().empty()) input_error("--manifest cannot be combined with a subcommand");
      execute(read_manifest(manifest), out_dir);
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return QPVS_E_INPUT;
    }
    c.subcommand = app.get_subcommands().front()->get_name();
    if (c.subcommand == "diagnose" && !diag->count("--methods")) c.methods = "qp,poisson,negbin";
    execute(c, out_dir);
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
