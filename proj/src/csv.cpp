#include "peri/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "peri/error.hpp"

namespace peri::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  fail(ErrorKind::ParseError, "missing column '" + std::string(name) + "'");
}

std::vector<std::string> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      std::ostringstream os;
      os << path.string() << " line " << lineno << ": expected " << t.header.size() << " fields, got "
         << fields.size();
      fail(ErrorKind::ParseError, os.str());
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) fail(ErrorKind::ParseError, path.string() + ": empty CSV");
  return t;
}

double parse_double(std::string_view text, std::size_t line, std::string_view column) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    std::ostringstream os;
    os << "line " << line << ", column '" << column << "': not a number: '" << text << "'";
    fail(ErrorKind::ParseError, os.str());
  }
  return v;
}

long long parse_int(std::string_view text, std::size_t line, std::string_view column) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    std::ostringstream os;
    os << "line " << line << ", column '" << column << "': not an integer: '" << text << "'";
    fail(ErrorKind::ParseError, os.str());
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace peri::csv
