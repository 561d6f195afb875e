#include "univc/io.hpp"

#include "univc/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace univc::io {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& field, const std::string& path, int line) {
  const std::string t = trim(field);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last) {
    throw ParseError(path + ":" + std::to_string(line) + ": expected a number, found '" + t + "'");
  }
  return v;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path + "'");
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

MatrixXd read_matrix_csv(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) row.push_back(parse_number(field, path, lineno));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(rows.front().size()) + " columns, found " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no data");
  MatrixXd A(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) A(i, j) = rows[i][j];
  return A;
}

VectorXd read_column_csv(const std::string& path, const std::string& header) {
  auto in = open_in(path);
  std::string line;
  int lineno = 0;
  bool seen_header = false;
  std::vector<double> vals;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (!seen_header) {
      if (t != header) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": expected header '" + header +
                         "', found '" + t + "'");
      }
      seen_header = true;
      continue;
    }
    if (t.find(',') != std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected a single column");
    vals.push_back(parse_number(t, path, lineno));
  }
  if (!seen_header) throw ParseError(path + ": missing header '" + header + "'");
  if (vals.empty()) throw ParseError(path + ": no data after header");
  return Eigen::Map<VectorXd>(vals.data(), static_cast<Index>(vals.size()));
}

void write_matrix_csv(const std::string& path, const MatrixXd& A) {
  auto out = open_out(path);
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) out << (j ? "," : "") << format_double(A(i, j));
    out << '\n';
  }
}

void write_column_csv(const std::string& path, const std::string& header, const VectorXd& v) {
  auto out = open_out(path);
  out << header << '\n';
  for (Index i = 0; i < v.size(); ++i) out << format_double(v(i)) << '\n';
}

void Table::add(const std::vector<double>& row) {
  std::vector<std::string> cells;
  for (double x : row) cells.push_back(format_double(x));
  add_cells(std::move(cells));
}

void Table::add_cells(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw DimensionMismatchError("table row has the wrong width");
  rows.push_back(std::move(row));
}

std::string Table::to_tsv() const {
  std::ostringstream os;
  for (std::size_t j = 0; j < columns.size(); ++j) os << (j ? "\t" : "") << columns[j];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "\t" : "") << r[j];
    os << '\n';
  }
  return os.str();
}

void write_table(const std::string& path, const Table& t) { write_text(path, t.to_tsv()); }

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

std::string read_text(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

CrossedData read_crossed_long(const std::string& path, const std::vector<std::string>& factors,
                              const std::string& response,
                              const std::vector<std::string>& random) {
  auto in = open_in(path);
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(trim(field));
  }
  if (header.empty()) throw ParseError(path + ": no header");
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(path + ":1: no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> fcol;
  for (const auto& f : factors) fcol.push_back(column(f));
  const std::size_t ycol = column(response);

  const std::size_t F = factors.size();
  CrossedData out;
  out.levels.assign(F, {});
  std::vector<std::map<std::string, Index>> code(F);
  std::vector<std::pair<std::vector<Index>, double>> obs;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) cells.push_back(trim(field));
    if (cells.size() != header.size()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    }
    std::vector<Index> key(F);
    for (std::size_t f = 0; f < F; ++f) {
      const auto [it, inserted] =
          code[f].emplace(cells[fcol[f]], static_cast<Index>(out.levels[f].size()));
      if (inserted) out.levels[f].push_back(cells[fcol[f]]);
      key[f] = it->second;
    }
    obs.emplace_back(std::move(key), parse_number(cells[ycol], path, lineno));
  }
  if (obs.empty()) throw ParseError(path + ": no data rows");

  std::map<std::vector<Index>, std::vector<double>> cell;
  for (auto& [k, v] : obs) cell[k].push_back(v);
  Index cells_expected = 1;
  for (const auto& l : out.levels) cells_expected *= static_cast<Index>(l.size());
  if (static_cast<Index>(cell.size()) != cells_expected)
    throw InvalidDesignError(path + ": the factors are not fully crossed");
  const std::size_t reps = cell.begin()->second.size();
  for (const auto& [k, v] : cell)
    if (v.size() != reps) throw InvalidDesignError(path + ": unbalanced cell counts");

  for (const auto& l : out.levels) out.design.dims.push_back(static_cast<Index>(l.size()));
  if (reps > 1) out.design.dims.push_back(static_cast<Index>(reps));
  for (const auto& r : random) {
    const auto it = std::find(factors.begin(), factors.end(), r);
    if (it == factors.end()) throw UsageError("random factor '" + r + "' is not a factor column");
    out.design.random.push_back(static_cast<Index>(it - factors.begin()));
  }
  out.design.validate();

  out.y.resize(out.design.n());
  Index i = 0;
  for (const auto& [k, v] : cell)
    for (double x : v) out.y(i++) = x;
  return out;
}

}  // namespace univc::io
