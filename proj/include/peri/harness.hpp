#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "peri/config.hpp"
#include "peri/evaluation.hpp"
#include "peri/manifest.hpp"
#include "peri/models.hpp"
#include "peri/radiomics.hpp"
#include "peri/segmentation.hpp"

namespace peri::harness {

// --- feature table ---------------------------------------------------------------

/// One row of case_id,label,split,mask_variant,<39 features>.
struct FeatureRow {
  std::string case_id;
  int label = 0;
  Split split = Split::Train;
  std::string mask_variant;
  std::vector<double> values;
  bool operator==(const FeatureRow&) const = default;
};

void write_feature_table(const std::filesystem::path& path, const std::vector<FeatureRow>& rows);
/// Throws ParseError on a header that is not the canonical one.
std::vector<FeatureRow> read_feature_table(const std::filesystem::path& path);

/// "<method>_r<radius>", e.g. "knn_r8"; ring-only regions are "<method>-ring_r<radius>".
std::string mask_variant(seg::Method method, double radius_mm, bool ring_only = false);

// --- split audit -----------------------------------------------------------------

enum class Purpose { Train, Select, Evaluate };
std::string_view to_string(Purpose purpose);

/// Log of every time a split's rows are handed to a stage. verify() fails when
/// the test split fed training or model selection.
class SplitAudit {
 public:
  struct Entry {
    std::string stage;
    Split split;
    Purpose purpose;
    std::size_t n_rows;
  };

  void record(std::string stage, Split split, Purpose purpose, std::size_t n_rows);
  const std::vector<Entry>& entries() const { return entries_; }
  /// Throws InvalidArgument naming the offending stage.
  void verify() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<Entry> entries_;
};

// --- per-case pipeline -------------------------------------------------------------

struct CaseFailure {
  std::string case_id;
  std::string method;
  std::string message;
};

/// Segment inside the box, then features of the mask dilated by each radius
/// (with config.ring_only, the dilation minus the nodule for r > 0).
/// `volume` may be any crop holding the box plus the largest radius; the values
/// do not depend on the crop offset.
std::vector<rad::FeatureVector> case_features(const Volume3D& volume, const BoundingBox& bbox, seg::Method method,
                                              const std::vector<double>& radii_mm, const ExperimentConfig& config);

/// The plain nodule-only route on the uncropped volume: segment, then extract.
rad::FeatureVector nodule_features(const Volume3D& volume, const BoundingBox& bbox, seg::Method method,
                                   const ExperimentConfig& config);

/// Content-addressed store of feature vectors, in memory and optionally on disk
/// (one small file per key). Safe for concurrent use.
class FeatureCache {
 public:
  explicit FeatureCache(std::optional<std::filesystem::path> dir = std::nullopt);
  std::optional<std::vector<double>> get(const std::string& key);
  void put(const std::string& key, const std::vector<double>& values);
  std::size_t hits() const { return hits_; }

 private:
  std::optional<std::filesystem::path> dir_;
  std::mutex mutex_;
  std::map<std::string, std::vector<double>> memory_;
  std::size_t hits_ = 0;
};

/// Hex key of (image bytes, box, method, segmentation and feature settings, radius).
std::string feature_cache_key(std::uint64_t image_hash, const BoundingBox& bbox, seg::Method method,
                              const ExperimentConfig& config, double radius_mm);

struct CohortFeatures {
  std::vector<CaseRecord> cases;                        // sorted by case_id
  std::vector<std::vector<std::vector<double>>> values;  // [case][radius] -> features, empty if failed
  std::vector<CaseFailure> failures;
};

/// Features for every case of the manifest at each radius, computed on the
/// configured number of threads. Missing image files are a MissingFile error
/// naming the case; any other per-case error is recorded and the case excluded.
CohortFeatures cohort_features(const ExperimentConfig& config, seg::Method method, const std::vector<double>& radii_mm,
                               FeatureCache* cache = nullptr);

// --- experiments -----------------------------------------------------------------

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string compiler;
  nlohmann::json to_json() const;
};

Provenance make_provenance(const ExperimentConfig& config);

struct GridReport {
  std::vector<eval::EvalRow> cells;  // method-major, classifier-minor; validation split
  seg::Method best_method = seg::Method::Otsu;
  ml::ClassifierKind best_classifier = ml::ClassifierKind::RandomForest;
  std::vector<FeatureRow> features;
  std::vector<CaseFailure> failures;
  SplitAudit audit;
  Provenance provenance;
};

/// Writes grid.csv, grid_features.csv, grid_failures.csv, grid_audit.csv and
/// grid_provenance.json under config.output_dir.
GridReport run_grid(const ExperimentConfig& config);

struct ImportanceRow {
  double radius_mm = 0.0;
  std::size_t rank = 0;
  std::string feature;
  double score = 0.0;
};

struct SweepReport {
  seg::Method method = seg::Method::KNN;
  ml::ClassifierKind classifier = ml::ClassifierKind::Logistic;
  bool ring_only = false;
  std::vector<eval::EvalRow> rows;  // per radius: train then test
  std::vector<FeatureRow> features;
  std::vector<ImportanceRow> importance;  // empty for k-NN
  std::vector<CaseFailure> failures;
  SplitAudit audit;
  Provenance provenance;

  /// AUC of the given split at the given radius; throws InvalidArgument if absent.
  double auc(Split split, double radius_mm) const;
};

/// Writes sweep.csv, sweep_features.csv, sweep_importance.csv,
/// sweep_failures.csv, sweep_audit.csv and sweep_provenance.json.
SweepReport run_expansion_sweep(const ExperimentConfig& config, seg::Method method, ml::ClassifierKind classifier);

/// Method and classifier for the sweep: configured values, else the grid winner.
std::pair<seg::Method, ml::ClassifierKind> sweep_choice(const ExperimentConfig& config, const GridReport* grid);

// --- helpers shared with the command line ------------------------------------------

/// Seeds of the classifier and of the bootstrap, derived from the master seed.
std::uint64_t model_seed(const ExperimentConfig& config);
std::uint64_t bootstrap_seed(const ExperimentConfig& config);

/// Rows of `table` whose split is `split`, as a matrix plus labels.
void split_matrix(const std::vector<FeatureRow>& table, Split split, const std::string& variant, ml::Matrix& x,
                  std::vector<int>& y);

}  // namespace peri::harness
