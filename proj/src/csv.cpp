#include "csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gpecm/error.hpp"

namespace gpecm::csv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Table read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Table t;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (t.header.empty()) {
      t.header = split(line);
      if (!t.header.empty() && t.header[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header[0] = t.header[0].substr(3);
      continue;
    }
    const auto fields = split(line);
    if (fields.size() != t.header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    std::vector<double> row(fields.size());
    bool has_nan = false;
    for (size_t k = 0; k < fields.size(); ++k) {
      const std::string& f = fields[k];
      if (f.empty() || f == "nan" || f == "NaN" || f == "NAN") {
        has_nan = true;
        continue;
      }
      double v = 0.0;
      auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw DataError(path + ":" + std::to_string(line_no) + ": cannot parse '" + f + "' in column " +
                        t.header[k]);
      if (std::isnan(v)) has_nan = true;
      row[k] = v;
    }
    if (has_nan) {
      ++t.dropped_nan_rows;
      continue;
    }
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw DataError(path + ": missing header row");
  return t;
}

int column(const Table& t, const std::string& name) {
  for (size_t k = 0; k < t.header.size(); ++k)
    if (t.header[k] == name) return static_cast<int>(k);
  return -1;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace gpecm::csv
