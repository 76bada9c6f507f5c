#include "csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flexor/errors.hpp"

namespace flexor::detail {

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<int>(j);
  }
  return -1;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);

  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!have_header && line.empty()) continue;
    if (!have_header) {
      table.header = split_csv_line(line);
      have_header = true;
      continue;
    }
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    table.rows.push_back(split_csv_line(line));
  }
  if (!have_header) throw SchemaError("empty file, header row required: " + path);
  return table;
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + tmp);
    out << content;
    if (!out) throw Error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("rename failed: " + path);
  }
}

bool parse_double(const std::string& cell, double& out) {
  std::size_t begin = cell.find_first_not_of(" \t");
  if (begin == std::string::npos) return false;
  std::size_t end = cell.find_last_not_of(" \t") + 1;
  const char* first = cell.data() + begin;
  const char* last = cell.data() + end;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace flexor::detail
