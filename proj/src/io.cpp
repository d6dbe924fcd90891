#include "qpvs/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <zlib.h>

#include "qpvs/error.hpp"

namespace qpvs {

namespace {

// Splits one CSV record; double quotes delimit fields containing commas.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Dataset read_dataset_csv(std::istream& in, const CsvOptions& opt) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(ErrorCode::Parse, "empty CSV input: a header row is required");
  ++line_no;
  std::vector<std::string> header = split_record(line);
  for (auto& h : header) h = trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  std::size_t y_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == "y") {
      if (y_col != header.size()) fail(ErrorCode::DuplicateColumnName, "duplicate column name 'y'");
      y_col = c;
    }
  if (y_col == header.size()) throw Error(ErrorCode::MissingColumn, "CSV has no response column named 'y'", 0, std::nullopt);

  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != y_col) names.push_back(header[c]);
  const std::size_t p_in = names.size();

  std::vector<double> ys, xs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "line " << line_no << " has " << fields.size() << " fields, expected " << header.size();
      throw Error(ErrorCode::Parse, msg.str(), row, std::nullopt);
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string f = trim(fields[c]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      const bool is_y = c == y_col;
      const std::size_t j = c < y_col ? c : c - 1;
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty()) {
        std::ostringstream msg;
        msg << "line " << line_no << ", column '" << header[c] << "': cannot parse '" << f << "' as a number";
        throw Error(ErrorCode::Parse, msg.str(), row, is_y ? std::nullopt : std::optional<std::size_t>(j));
      }
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "line " << line_no << ", column '" << header[c] << "': non-finite value '" << f << "'";
        throw Error(ErrorCode::NonFinite, msg.str(), row, is_y ? std::nullopt : std::optional<std::size_t>(j));
      }
      (is_y ? ys : xs).push_back(v);
    }
    ++row;
  }
  if (row == 0) fail(ErrorCode::InsufficientSamples, "CSV has a header but no data rows");
  if (p_in == 0 && !opt.add_intercept) fail(ErrorCode::InvalidArgument, "CSV has no predictor columns");

  Dataset d;
  d.y = Eigen::Map<VectorXd>(ys.data(), static_cast<Eigen::Index>(row));
  const auto n = static_cast<Eigen::Index>(row);
  MatrixXd raw = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, static_cast<Eigen::Index>(p_in));
  if (opt.standardize && n > 1) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const double mean = raw.col(j).mean();
      const double sd = std::sqrt((raw.col(j).array() - mean).square().sum() / static_cast<double>(n - 1));
      if (sd > 0.0) raw.col(j) = (raw.col(j).array() - mean) / sd;
    }
  }
  if (opt.add_intercept) {
    d.X.resize(n, raw.cols() + 1);
    d.X.col(0).setOnes();
    d.X.rightCols(raw.cols()) = raw;
    d.column_names.push_back("(Intercept)");
  } else {
    d.X = std::move(raw);
  }
  d.column_names.insert(d.column_names.end(), names.begin(), names.end());
  validate_dataset(d);
  return d;
}

Dataset read_dataset_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  return read_dataset_csv(in, opt);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_dataset_csv(std::ostream& os, const Dataset& d) {
  os << 'y';
  for (const auto& name : d.column_names) os << ',' << name;
  os << '\n';
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    os << format_double(d.y[i]);
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) os << ',' << format_double(d.X(i, j));
    os << '\n';
  }
}

void write_rb_ppi_csv(std::ostream& os, const Dataset& d, const VectorXd& ppi) {
  os << "column,name,ppi\n";
  for (Eigen::Index j = 0; j < ppi.size(); ++j)
    os << j << ',' << d.column_names[static_cast<std::size_t>(j)] << ',' << format_double(ppi[j]) << '\n';
}

void write_matrix_csv(std::ostream& os, const std::vector<std::string>& header, const MatrixXd& m) {
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << format_double(m(i, j));
    os << '\n';
  }
}

void write_cumulative_ppi_csv(std::ostream& os, const Dataset& d, const SamplerOutput& out) {
  os << "sweep";
  for (const auto& name : d.column_names) os << ',' << name;
  os << '\n';
  for (Eigen::Index t = 0; t < out.cumulative_ppi.rows(); ++t) {
    os << t + 1;
    for (Eigen::Index j = 0; j < out.cumulative_ppi.cols(); ++j) os << ',' << format_double(out.cumulative_ppi(t, j));
    os << '\n';
  }
}

void write_gamma_draws_hex(std::ostream& os, const SamplerOutput& out) {
  for (const auto& g : out.gamma_draws) os << g.bits.to_hex() << '\n';
}

void write_gamma_draws_gz(const std::string& path, const SamplerOutput& out) {
  std::ostringstream text;
  write_gamma_draws_hex(text, out);
  const std::string s = text.str();
  gzFile f = gzopen(path.c_str(), "wb9");
  if (!f) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  const int written = s.empty() ? 0 : gzwrite(f, s.data(), static_cast<unsigned>(s.size()));
  const int closed = gzclose(f);
  if ((!s.empty() && written <= 0) || closed != Z_OK) fail(ErrorCode::Io, "failed writing '" + path + "'");
}

}  // namespace qpvs
