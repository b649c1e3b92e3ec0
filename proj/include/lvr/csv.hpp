#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lvr::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;
  // 1-based source line of each row, for diagnostics.
  std::vector<std::size_t> lines;

  // Column position by name; throws when absent.
  std::size_t column(const std::string& name) const;
};

// Quotes fields containing separators, quotes or newlines.
std::string format_row(const Row& row);
Row parse_row(const std::string& line);

Table read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Table& table);

// Shortest decimal form with `digits` significant digits.
std::string format_number(double v, int digits = 9);

}  // namespace lvr::csv
