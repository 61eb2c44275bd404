#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace peri::eval {

// Scores are paired with 0/1 labels. Every function below throws SingleClass
// when one of the classes is absent, and DimensionMismatch on length mismatch.

/// Mann-Whitney AUC with 0.5 credit for tied pairs, from midranks in O(n log n).
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocCurve {
  std::vector<double> thresholds;  // +inf first, then unique scores descending
  std::vector<double> fpr;
  std::vector<double> tpr;
};

/// A case is called positive when score >= threshold.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(const RocCurve& curve);

struct AucResult {
  double auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n_boot = 0;
  std::uint64_t seed = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Stratified percentile bootstrap. Replicate b resamples positives then
/// negatives from its own derived stream, so the interval does not depend on
/// the thread count. n_boot >= 100, level in (0, 1).
AucResult bootstrap_ci(std::span<const double> scores, std::span<const int> labels, int n_boot = 2000,
                       double level = 0.95, std::uint64_t seed = 0, int threads = 0);

namespace serial {
AucResult bootstrap_ci(std::span<const double> scores, std::span<const int> labels, int n_boot = 2000,
                       double level = 0.95, std::uint64_t seed = 0);
}  // namespace serial

/// Replicate AUCs in replicate order; exposed for tests and diagnostics.
std::vector<double> bootstrap_replicates(std::span<const double> scores, std::span<const int> labels, int n_boot,
                                         std::uint64_t seed, int threads = 0);

// Report CSV: model,mask_variant,split,auc,ci_low,ci_high,n_pos,n_neg,n_boot,seed

struct EvalRow {
  std::string model;
  std::string mask_variant;
  std::string split;
  AucResult result;
  bool operator==(const EvalRow& o) const;
};

std::string eval_csv_header();
std::string format_eval_row(const EvalRow& row);
void write_eval_csv(const std::filesystem::path& path, std::span<const EvalRow> rows);
/// Throws ParseError for an empty file, a wrong header, or no data rows.
std::vector<EvalRow> read_eval_csv(const std::filesystem::path& path);

}  // namespace peri::eval
