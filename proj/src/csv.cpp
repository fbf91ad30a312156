#include "uqens/csv.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uqens {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::out_of_range("CSV has no column '" + name + "'");
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_escape(fields[i]);
  }
  return line;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quote in CSV line: " + line);
  return fields;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (!line.empty() && line[0] == '#') continue;  // preamble
      if (line.empty()) throw std::invalid_argument("CSV has no header");
      table.header = csv_split(line);
      first = false;
      continue;
    }
    if (line.empty()) continue;
    auto fields = csv_split(line);
    if (fields.size() != table.header.size()) {
      throw std::invalid_argument("CSV row " + std::to_string(table.rows.size() + 1) + " has " +
                                  std::to_string(fields.size()) + " fields, header has " +
                                  std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (first) throw std::invalid_argument("CSV is empty");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string format_csv(const CsvTable& table) {
  std::string out = csv_line(table.header) + '\n';
  for (const auto& row : table.rows) out += csv_line(row) + '\n';
  return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_csv(table);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string format_number(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, r.ptr);
}

std::string format_optional(const std::optional<double>& value) { return value ? format_number(*value) : ""; }

double parse_number(const std::string& text) {
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

}  // namespace uqens
