#pragma once

#include <string>
#include <vector>

namespace flexor::detail {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;  // -1 if absent
};

// Reads a comma-separated UTF-8 file with a header row. Handles quoted
// fields, doubled quotes, and CRLF line endings.
CsvTable read_csv(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

// Parses a decimal number; returns false on any trailing garbage.
bool parse_double(const std::string& cell, double& out);

// Shortest representation that round-trips through parse_double.
std::string format_double(double x);

}  // namespace flexor::detail
