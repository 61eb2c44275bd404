#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "peri/volume.hpp"

namespace peri {

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);
/// Accepts "train", "validation", "test"; throws UnknownSplit otherwise.
Split parse_split(std::string_view text);

struct CaseRecord {
  std::string case_id;
  std::string image_path;  // as written; relative paths resolve against the manifest directory
  BoundingBox bbox;
  int label = 0;  // 0 benign, 1 malignant
  Split split = Split::Train;
};

/// Cohort manifest CSV with header
/// case_id,image_path,x0,y0,z0,x1,y1,z1,label,split
/// Boxes use inclusive min and exclusive max voxel indices.
std::vector<CaseRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<CaseRecord>& records, const std::filesystem::path& path);

std::filesystem::path resolve_image_path(const std::filesystem::path& manifest_path, const CaseRecord& record);

}  // namespace peri
