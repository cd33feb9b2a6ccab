#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace dualls {

// Shortest text that parses back to the same double; "nan"/"inf"/"-inf" for
// non-finite values.
std::string format_number(double value);
double parse_number(const std::string& text);

// Plain comma-separated table with a header row. Fields never contain commas
// or quotes in the files this library writes.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws InputError if the column is missing.
  std::size_t column(const std::string& name) const;
  std::string to_csv() const;
};

Table read_table(const std::filesystem::path& path);
void write_table(const std::filesystem::path& path, const Table& table);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dualls
