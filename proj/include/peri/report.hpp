#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "peri/evaluation.hpp"

namespace peri::report {

struct ReportFiles {
  std::filesystem::path markdown;
  std::vector<std::filesystem::path> svgs;
};

/// AUC against radius with CI whiskers, one line per (model, method, split).
/// Rows whose mask_variant is not "<method>_r<radius>" are skipped.
std::string sweep_svg(const std::vector<eval::EvalRow>& rows);
/// Method-by-classifier table of AUC cells shaded by value.
std::string grid_svg(const std::vector<eval::EvalRow>& rows);
std::string markdown(const std::vector<eval::EvalRow>& rows);

/// Reads evaluation CSVs and writes report.md plus sweep.svg and/or grid.svg
/// (validation rows go to the grid, all other rows to the sweep). Output bytes
/// depend only on the input rows. Throws ParseError on an empty input.
ReportFiles write_report(const std::vector<std::filesystem::path>& csv_paths, const std::filesystem::path& out_dir);

}  // namespace peri::report
