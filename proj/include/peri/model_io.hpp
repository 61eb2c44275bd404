#pragma once

#include <filesystem>

#include <json.hpp>

#include "peri/models.hpp"

namespace peri::ml {

/// Version written into every saved model document.
inline constexpr int kModelFormatVersion = 1;

// Document layout, version 1:
//   { "format": "peritumoral-model", "version": 1, "classifier": "logistic_regression" | "random_forest" | "knn",
//     "seed": <uint64>,
//     "standardizer": { "names": [...], "mean": [...], "sd": [...], "keep": [0|1, ...] },
//     "model": { ...classifier specific... } }
// logistic: { "w": [...], "b", "lambda", "iterations", "converged" }
// forest:   { "seed", "n_features", "params": {...}, "importance": [...],
//             "trees": [ [ [feature, threshold, left, right, value, n], ... ], ... ] }
// knn:      { "k", "rows", "cols", "x": [row-major], "y": [...] }
// Doubles are written in shortest round-trip form, so a reload is bit-exact.

nlohmann::json to_json(const TrainedPipeline& pipeline);
/// Throws ParseError for a malformed document or an unknown version.
TrainedPipeline pipeline_from_json(const nlohmann::json& doc);

void save_model(const TrainedPipeline& pipeline, const std::filesystem::path& path);
TrainedPipeline load_model(const std::filesystem::path& path);

}  // namespace peri::ml
