#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace edr {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return static_cast<int>(j);
    }
    throw std::runtime_error("csv-missing-column: " + name);
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw std::runtime_error("csv-unterminated-quote");
  fields.push_back(field);
  return fields;
}

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != table.header.size()) {
        throw std::runtime_error("csv-ragged-row: expected " +
                                 std::to_string(table.header.size()) +
                                 " fields, got " + std::to_string(fields.size()));
      }
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw std::runtime_error("csv-empty");
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv-open-failed: " + path);
  return read_csv(in);
}

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

inline std::string write_csv(const CsvTable& table) {
  std::ostringstream out;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j) out << ",";
    out << csv_quote(table.header[j]);
  }
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ",";
      out << csv_quote(row[j]);
    }
    out << "\n";
  }
  return out.str();
}

// "NA" (or empty) marks a missing value
inline bool csv_is_missing(const std::string& field) {
  return field.empty() || field == "NA";
}

inline double csv_to_double(const std::string& field) {
  std::size_t pos = 0;
  const double v = std::stod(field, &pos);
  if (pos != field.size()) throw std::runtime_error("csv-bad-number: " + field);
  return v;
}

}  // namespace edr
