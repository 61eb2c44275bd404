#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace peri::csv {

/// Header plus rows of unquoted comma-separated fields.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  /// Column position by name; throws ParseError if absent.
  std::size_t column(std::string_view name) const;
};

std::vector<std::string> split_line(std::string_view line);

/// Throws ParseError on an empty file or on rows whose width differs from the header.
Table read(const std::filesystem::path& path);

double parse_double(std::string_view text, std::size_t line, std::string_view column);
long long parse_int(std::string_view text, std::size_t line, std::string_view column);

/// Round-trippable decimal form of a double (shortest representation).
std::string format_double(double v);

}  // namespace peri::csv
