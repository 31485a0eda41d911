#pragma once

#include <string>
#include <vector>

namespace gpecm::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<size_t> line_numbers;  ///< 1-based source line of each row
  size_t dropped_nan_rows = 0;
};

/// Reads a comma-separated numeric table with a header row. Rows containing
/// NaN or empty fields are dropped and counted; unparsable fields throw
/// DataError naming the line.
Table read(const std::string& path);

/// Index of a header column, or -1.
int column(const Table& t, const std::string& name);

std::string format_double(double v);

}  // namespace gpecm::csv
