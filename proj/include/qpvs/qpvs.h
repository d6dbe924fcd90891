/* C interface to the qpvs library.
 *
 * Every function returning qpvs_status reports QPVS_OK on success; on failure
 * qpvs_last_error() returns a message for the calling thread. Handles are
 * opaque and released with the matching *_free function (NULL is accepted).
 */
#ifndef QPVS_H
#define QPVS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define QPVS_API __declspec(dllexport)
#else
#define QPVS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef int qpvs_status;
#define QPVS_OK 0
#define QPVS_E_INTERNAL 1
#define QPVS_E_INPUT 2
#define QPVS_E_NUMERIC 3

QPVS_API const char* qpvs_last_error(void);
QPVS_API const char* qpvs_version(void);

/* ---- datasets ---------------------------------------------------------- */

typedef struct qpvs_dataset qpvs_dataset;

/* Reads a CSV with a header; the column "y" is the response. */
QPVS_API qpvs_status qpvs_dataset_read_csv(const char* path, int add_intercept, int standardize,
                                           qpvs_dataset** out);
/* x is n*p, row-major. names may be NULL (columns become x0, x1, ...). */
QPVS_API qpvs_status qpvs_dataset_create(size_t n, size_t p, const double* y, const double* x,
                                         const char* const* names, qpvs_dataset** out);
QPVS_API void qpvs_dataset_free(qpvs_dataset* d);
QPVS_API size_t qpvs_dataset_n(const qpvs_dataset* d);
QPVS_API size_t qpvs_dataset_p(const qpvs_dataset* d);

/* ---- shared settings ----------------------------------------------------- */

typedef enum { QPVS_FAMILY_LINEAR = 0, QPVS_FAMILY_POISSON = 1, QPVS_FAMILY_NEGBIN = 2 } qpvs_family;
typedef enum { QPVS_DISPERSION_QMLE = 0, QPVS_DISPERSION_L1 = 1, QPVS_DISPERSION_FIXED = 2 } qpvs_dispersion;
typedef enum { QPVS_RULE_MEDIAN = 0, QPVS_RULE_BFDR = 1 } qpvs_rule;

typedef struct {
  double slab_variance; /* 9 */
  int fixed_w;          /* 0: Beta(a, b) prior on w */
  double w;             /* 0.5 */
  double beta_a;        /* 1 */
  double beta_b;        /* 1 */
  size_t sweeps;        /* 3000 */
  size_t burn_in;       /* 1500 */
  uint64_t seed;        /* 1 */
  double fdr_alpha;     /* 0.05 */
  int dispersion;       /* qpvs_dispersion, QMLE */
  double fixed_psi;     /* used with QPVS_DISPERSION_FIXED */
  size_t l1_folds;      /* 5 */
  size_t cache_cap;     /* 0: unbounded */
} qpvs_run_options;

QPVS_API void qpvs_run_options_init(qpvs_run_options* o);

/* ---- fitting ------------------------------------------------------------- */

typedef struct {
  qpvs_run_options run;
  int family;              /* qpvs_family, POISSON */
  double negbin_theta;     /* <= 0: estimated; negative binomial runs use psi = 1 */
  int force_intercept;     /* 1: a column named "(Intercept)" is always included */
  const char* forced;      /* extra comma-separated column names, or NULL */
  size_t beta_draws;       /* 1000 */
} qpvs_fit_options;

QPVS_API void qpvs_fit_options_init(qpvs_fit_options* o);

typedef struct qpvs_fit qpvs_fit;

QPVS_API qpvs_status qpvs_fit_run(const qpvs_dataset* d, const qpvs_fit_options* o, qpvs_fit** out);
QPVS_API void qpvs_fit_free(qpvs_fit* f);
QPVS_API size_t qpvs_fit_p(const qpvs_fit* f);
QPVS_API double qpvs_fit_psi(const qpvs_fit* f);
QPVS_API double qpvs_fit_theta(const qpvs_fit* f);
QPVS_API double qpvs_fit_cache_hit_rate(const qpvs_fit* f);
/* Copies the Rao-Blackwellised inclusion probabilities; len must equal p. */
QPVS_API qpvs_status qpvs_fit_ppi(const qpvs_fit* f, double* out, size_t len);
/* 1 where the rule selects column j; len must equal p. */
QPVS_API qpvs_status qpvs_fit_selected(const qpvs_fit* f, int rule, int* out, size_t len);
/* Writes rb_ppi.csv, cumulative_ppi.csv, selection.json and beta_samples.csv
 * into dir (which must exist); optionally gamma_draws.txt.gz and cache.jsonl. */
QPVS_API qpvs_status qpvs_fit_write(const qpvs_fit* f, const char* dir, int gamma_draws, int cache_dump);

/* Exact posterior by enumeration (p <= 15, fixed w required). ppi_out may be
 * NULL; json_path may be NULL. */
QPVS_API qpvs_status qpvs_oracle_check(const qpvs_dataset* d, const qpvs_fit_options* o, double* ppi_out,
                                       size_t len, const char* json_path);

/* ---- simulation study ---------------------------------------------------- */

typedef struct {
  qpvs_run_options run;
  const char* scenarios; /* comma-separated: counts, heavy_tails, inliers */
  const char* n_grid;    /* comma-separated sample sizes */
  size_t replicates;     /* 50 */
  const char* methods;   /* comma-separated: qp, poisson, negbin */
  size_t jobs;           /* 1 */
  int include_timing;    /* 0: replicate log omits wall times */
} qpvs_simulate_options;

QPVS_API void qpvs_simulate_options_init(qpvs_simulate_options* o);
/* jsonl_path may be NULL. */
QPVS_API qpvs_status qpvs_simulate(const qpvs_simulate_options* o, const char* results_csv, const char* jsonl_path);

/* ---- diagnostics --------------------------------------------------------- */

typedef struct {
  qpvs_run_options run;
  const char* methods; /* comma-separated: qp, poisson, negbin */
  int family;          /* family of the qp method, POISSON */
  int rule;            /* qpvs_rule used for the refit, MEDIAN */
  size_t folds;        /* 10; 0 skips cross-validation */
  int force_intercept; /* 1 */
} qpvs_diagnose_options;

QPVS_API void qpvs_diagnose_options_init(qpvs_diagnose_options* o);
QPVS_API qpvs_status qpvs_diagnose(const qpvs_dataset* d, const qpvs_diagnose_options* o, const char* bins_csv,
                                   const char* summary_json);

#ifdef __cplusplus
}
#endif

#endif
