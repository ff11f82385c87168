#pragma once

#include <string>
#include <vector>

namespace mcxtfc {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

/// Writes columns of equal length with '.' decimals, LF endings.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

std::string format_double(double v);

}  // namespace mcxtfc
