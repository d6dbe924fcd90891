#pragma once

#include <iosfwd>
#include <string>

#include "qpvs/core.hpp"
#include "qpvs/sampler.hpp"
#include "qpvs/selection.hpp"

namespace qpvs {

struct CsvOptions {
  bool add_intercept = false;
  bool standardize = false;
};

/// Header row required; the column named "y" is the response and every other
/// column is a predictor in file order. add_intercept prepends a column of
/// ones named "(Intercept)"; standardize z-scores non-constant predictors.
Dataset read_dataset_csv(std::istream& in, const CsvOptions& opt = {});
Dataset read_dataset_csv(const std::string& path, const CsvOptions& opt = {});

void write_dataset_csv(std::ostream& os, const Dataset& d);

/// Shortest round-trip decimal form.
std::string format_double(double v);

void write_rb_ppi_csv(std::ostream& os, const Dataset& d, const VectorXd& ppi);
void write_cumulative_ppi_csv(std::ostream& os, const Dataset& d, const SamplerOutput& out);
void write_matrix_csv(std::ostream& os, const std::vector<std::string>& header, const MatrixXd& m);
/// One hex bitstring per sweep.
void write_gamma_draws_hex(std::ostream& os, const SamplerOutput& out);
/// Same content, gzip-compressed.
void write_gamma_draws_gz(const std::string& path, const SamplerOutput& out);

}  // namespace qpvs
