#include "peri/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "peri/csv.hpp"
#include "peri/error.hpp"

namespace peri {

namespace {
constexpr const char* kColumns[] = {"case_id", "x0", "y0", "z0", "x1", "y1", "z1"};
const std::vector<std::string> kHeader = {"case_id", "image_path", "x0", "y0", "z0", "x1", "y1", "z1", "label", "split"};
}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "validation") return Split::Validation;
  if (text == "test") return Split::Test;
  fail(ErrorKind::UnknownSplit, "unknown split '" + std::string(text) + "'");
}

std::vector<CaseRecord> read_manifest(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  if (t.header != kHeader) fail(ErrorKind::ParseError, path.string() + ": unexpected manifest header");

  std::vector<CaseRecord> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = t.line_numbers[r];
    CaseRecord rec;
    rec.case_id = row[0];
    if (rec.case_id.empty()) fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": empty case_id");
    rec.image_path = row[1];
    std::int64_t c[6];
    for (int i = 0; i < 6; ++i) c[i] = csv::parse_int(row[2 + i], line, kColumns[1 + i]);
    rec.bbox = {{c[0], c[1], c[2]}, {c[3], c[4], c[5]}};
    for (int a = 0; a < 3; ++a) {
      if (rec.bbox.min[a] < 0 || rec.bbox.min[a] >= rec.bbox.max[a]) {
        std::ostringstream os;
        os << "line " << line << ", column '" << kColumns[1 + a] << "': box must satisfy 0 <= min < max";
        fail(ErrorKind::ParseError, os.str());
      }
    }
    if (row[8] != "0" && row[8] != "1")
      fail(ErrorKind::ParseError, "line " + std::to_string(line) + ", column 'label': expected 0 or 1, got '" +
                                      row[8] + "'");
    rec.label = row[8] == "1" ? 1 : 0;
    try {
      rec.split = parse_split(row[9]);
    } catch (const Error& e) {
      fail(ErrorKind::UnknownSplit, "line " + std::to_string(line) + ": " + e.what());
    }
    if (!seen.insert(rec.case_id).second)
      fail(ErrorKind::DuplicateCaseId, "line " + std::to_string(line) + ": duplicate case_id '" + rec.case_id + "'");
    out.push_back(std::move(rec));
  }
  return out;
}

void write_manifest(const std::vector<CaseRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < kHeader.size(); ++i) out << (i ? "," : "") << kHeader[i];
  out << '\n';
  for (const auto& r : records) {
    out << r.case_id << ',' << r.image_path << ',' << r.bbox.min.x << ',' << r.bbox.min.y << ',' << r.bbox.min.z
        << ',' << r.bbox.max.x << ',' << r.bbox.max.y << ',' << r.bbox.max.z << ',' << r.label << ','
        << to_string(r.split) << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

std::filesystem::path resolve_image_path(const std::filesystem::path& manifest_path, const CaseRecord& record) {
  const std::filesystem::path p(record.image_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

}  // namespace peri
