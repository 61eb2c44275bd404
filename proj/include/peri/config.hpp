#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "peri/models.hpp"
#include "peri/phantom.hpp"
#include "peri/radiomics.hpp"
#include "peri/segmentation.hpp"

namespace peri::harness {

inline constexpr int kConfigVersion = 1;

/// Everything a grid or sweep run depends on. Relative paths are taken as
/// given, i.e. relative to the working directory of the process.
struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int threads = 0;  // 0: OpenMP default; PERITUMOR_THREADS overrides
  seg::Params segmentation;
  rad::FeatureSpec features;
  ml::ModelParams models;
  std::vector<double> radii_mm{0, 2, 4, 6, 8, 10, 12};
  int bootstrap_n = 2000;
  double ci_level = 0.95;
  std::optional<seg::Method> sweep_method;             // unset: grid winner
  std::optional<ml::ClassifierKind> sweep_classifier;  // unset: grid winner
  bool ring_only = false;  // expanded region without the nodule itself (r > 0)
  bool use_cache = true;  // feature cache under output_dir/cache
  nlohmann::json phantom = nlohmann::json::object();  // generator overrides, used by the phantom command only

  /// Throws InvalidArgument / InvalidRange. Radii must be ascending from 0.
  void validate() const;
  /// Headroom around the box for dilation: largest radius plus 2 mm.
  double working_margin_mm() const;
};

/// Full document including every default, in a stable key order.
nlohmann::json to_json(const ExperimentConfig& config);
/// Missing optional keys keep their defaults; "version" and "seed" are
/// required. Throws ParseError or InvalidArgument.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

/// Hex digest of the settings that change results (excludes threads, paths and
/// the cache switch).
std::string config_hash(const ExperimentConfig& config);

/// Default PhantomSpec with the config seed and the "phantom" section applied.
phantom::PhantomSpec phantom_spec(const ExperimentConfig& config);

nlohmann::json to_json(const seg::Params& p);
nlohmann::json to_json(const rad::FeatureSpec& s);
nlohmann::json to_json(const ml::ModelParams& m);

}  // namespace peri::harness
