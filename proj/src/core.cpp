#include "minimax_iv/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

namespace minimax_iv {

namespace {

bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_cell(std::string_view cell, std::size_t row, std::size_t col) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError("non-numeric cell '" + std::string(cell) + "' at row " + std::to_string(row) +
                     ", column " + std::to_string(col));
  }
  return v;
}

struct Header {
  std::size_t p = 0;
  std::size_t q = 0;
};

// Column layout is fixed: y, x0..x{p-1}, z0..z{q-1}.
Header parse_header(std::string_view line) {
  auto cols = split_commas(line);
  if (cols.empty() || trim(cols[0]) != "y") throw ParseError("header must start with column 'y'");
  Header h;
  std::size_t i = 1;
  while (i < cols.size() && trim(cols[i]) == "x" + std::to_string(h.p)) {
    ++h.p;
    ++i;
  }
  while (i < cols.size() && trim(cols[i]) == "z" + std::to_string(h.q)) {
    ++h.q;
    ++i;
  }
  if (i != cols.size())
    throw ParseError("unexpected header column '" + std::string(trim(cols[i])) + "' at column " +
                     std::to_string(i));
  if (h.p == 0) throw ParseError("missing treatment columns x0..");
  if (h.q == 0) throw ParseError("missing instrument columns z0..");
  return h;
}

std::vector<std::vector<double>> read_rows(std::istream& in, std::size_t width) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != width)
      throw ParseError("row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(width));
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) row[c] = parse_cell(cells[c], lineno, c + 1);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Dataset::Dataset(Vector y, Matrix x, Matrix z) : y_(std::move(y)), x_(std::move(x)), z_(std::move(z)) {
  if (y_.size() < 1) throw InvalidInput("dataset must have at least one row");
  if (x_.rows() != y_.size() || z_.rows() != y_.size())
    throw InvalidInput("y, x and z must share the same row count");
  if (x_.cols() < 1 || z_.cols() < 1) throw InvalidInput("x and z need at least one column");
  if (!all_finite(y_) || !all_finite(x_) || !all_finite(z_))
    throw InvalidInput("dataset contains NaN or infinite entries");
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Vector y(m);
  Matrix x(m, p()), z(m, q());
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= n()) throw InvalidInput("subset row index out of range");
    y(i) = y_(r);
    x.row(i) = x_.row(r);
    z.row(i) = z_.row(r);
  }
  return Dataset(std::move(y), std::move(x), std::move(z));
}

bool Dataset::operator==(const Dataset& other) const {
  return y_.size() == other.y_.size() && x_.cols() == other.x_.cols() && z_.cols() == other.z_.cols() &&
         y_ == other.y_ && x_ == other.x_ && z_ == other.z_;
}

void HyperParams::validate() const {
  if (!(lambda >= 0.0) || !(mu >= 0.0)) throw InvalidInput("lambda and mu must be nonnegative");
  if (!(delta > 0.0) || !(u_bound > 0.0) || !(b_bound > 0.0))
    throw InvalidInput("delta, u_bound and b_bound must be strictly positive");
  if (!std::isfinite(lambda) || !std::isfinite(mu) || !std::isfinite(delta) || !std::isfinite(u_bound) ||
      !std::isfinite(b_bound))
    throw InvalidInput("hyperparameters must be finite");
}

Vector Model::predict_rows(const Matrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict(x.row(i).transpose());
  return out;
}

Vector residuals(const Model& model, const Dataset& data) {
  if (model.input_dim() != data.p())
    throw InvalidInput("model expects " + std::to_string(model.input_dim()) + " treatment columns, data has " +
                       std::to_string(data.p()));
  return data.y() - model.predict_rows(data.x());
}

double empirical_moment(const Vector& psi, const Vector& test_values) {
  if (psi.size() != test_values.size()) throw InvalidInput("test function length must equal n");
  if (psi.size() == 0) throw InvalidInput("empty residual vector");
  return psi.dot(test_values) / static_cast<double>(psi.size());
}

double empirical_moment(const Model& model, const Vector& test_values, const Dataset& data) {
  if (test_values.size() != data.n()) throw InvalidInput("test function length must equal n");
  return empirical_moment(residuals(model, data), test_values);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw InvalidInput("dataset '" + path + "' is empty");
  const Header h = parse_header(header_line);
  const std::size_t width = 1 + h.p + h.q;
  auto rows = read_rows(in, width);
  if (rows.empty()) throw InvalidInput("dataset '" + path + "' has no data rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Vector y(n);
  Matrix x(n, static_cast<Eigen::Index>(h.p)), z(n, static_cast<Eigen::Index>(h.q));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    y(i) = r[0];
    for (std::size_t j = 0; j < h.p; ++j) x(i, static_cast<Eigen::Index>(j)) = r[1 + j];
    for (std::size_t j = 0; j < h.q; ++j) z(i, static_cast<Eigen::Index>(j)) = r[1 + h.p + j];
  }
  return Dataset(std::move(y), std::move(x), std::move(z));
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << "y";
  for (Eigen::Index j = 0; j < data.p(); ++j) out << ",x" << j;
  for (Eigen::Index j = 0; j < data.q(); ++j) out << ",z" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << format_double(data.y()(i));
    for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << format_double(data.x()(i, j));
    for (Eigen::Index j = 0; j < data.q(); ++j) out << ',' << format_double(data.z()(i, j));
    out << '\n';
  }
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

Matrix load_treatments_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw InvalidInput("'" + path + "' is empty");
  auto cols = split_commas(header_line);
  std::vector<std::size_t> xcols;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (trim(cols[c]) == "x" + std::to_string(xcols.size())) xcols.push_back(c);
  }
  if (xcols.empty()) throw ParseError("missing treatment columns x0..");
  auto rows = read_rows(in, cols.size());
  if (rows.empty()) throw InvalidInput("'" + path + "' has no data rows");
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(xcols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < xcols.size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][xcols[j]];
  if (!x.allFinite()) throw InvalidInput("treatments contain NaN or infinite entries");
  return x;
}

}  // namespace minimax_iv
