#pragma once

// Plain-text formats: CSV matrices, single-column CSV vectors with a header,
// and tab-separated plot-data tables. Parse failures raise ParseError with
// the file name and 1-based line number.

#include "univc/model.hpp"

#include <string>
#include <vector>

namespace univc::io {

MatrixXd read_matrix_csv(const std::string& path);
/// Single column whose first line is `header`.
VectorXd read_column_csv(const std::string& path, const std::string& header);

void write_matrix_csv(const std::string& path, const MatrixXd& A);
void write_column_csv(const std::string& path, const std::string& header, const VectorXd& v);

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(const std::vector<double>& row);
  void add_cells(std::vector<std::string> row);
  std::string to_tsv() const;
};

void write_table(const std::string& path, const Table& t);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

/// Balanced crossed data in long format: a CSV with a header row naming the
/// factor columns and the response column. Levels are numbered in order of
/// first appearance; repeated cells become a trailing non-random replicate
/// factor. The response is returned in the stacked design order.
struct CrossedData {
  VectorXd y;
  CrossedDesign design;
  std::vector<std::vector<std::string>> levels;  // per factor column
};
CrossedData read_crossed_long(const std::string& path, const std::vector<std::string>& factors,
                              const std::string& response,
                              const std::vector<std::string>& random);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace univc::io
