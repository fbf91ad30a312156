#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uqens {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws when absent.
  std::size_t column(const std::string& name) const;
};

/// Quotes a field when it holds a comma, quote or newline.
std::string csv_escape(const std::string& field);
std::string csv_line(const std::vector<std::string>& fields);
std::vector<std::string> csv_split(const std::string& line);

CsvTable read_csv(const std::filesystem::path& path);
/// Leading lines starting with `#` before the header are skipped.
CsvTable parse_csv(const std::string& text);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string format_csv(const CsvTable& table);

/// Shortest round-trip decimal form; locale independent.
std::string format_number(double value);
std::string format_optional(const std::optional<double>& value);
double parse_number(const std::string& text);

}  // namespace uqens
