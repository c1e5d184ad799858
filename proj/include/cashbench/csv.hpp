#pragma once

#include <string>
#include <vector>

namespace cashbench {

// Minimal CSV with quoting support.  Empty fields are the missing-value
// encoding throughout the project.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;  // -1 if absent
  int require_column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::string& path, const CsvTable& table);
std::string to_csv_string(const CsvTable& table);

// Shortest round-trip decimal representation; deterministic and
// locale-independent.
std::string format_double(double v);

// "" -> missing (returns false); otherwise parses a double.
bool parse_double_field(const std::string& field, double& out);

}  // namespace cashbench
