#include "peri/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "peri/error.hpp"
#include "peri/rng.hpp"

namespace peri::harness {

using nlohmann::json;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      fail(ErrorKind::ParseError, "unknown key '" + key + "' in " + where);
  }
}

seg::Params seg_from(const json& j) {
  reject_unknown(j,
                 {"n_clusters", "fcm_fuzzifier", "fcm_tol", "fcm_max_iter", "gmm_tol", "gmm_max_iter", "gmm_var_floor",
                  "knn_k", "knn_quantile_low", "knn_quantile_high", "knn_coord_weight", "otsu_bins", "roi_margin_mm",
                  "clip_lo", "clip_hi"},
                 "segmentation");
  seg::Params p;
  read_opt(j, "n_clusters", p.n_clusters);
  read_opt(j, "fcm_fuzzifier", p.fcm_fuzzifier);
  read_opt(j, "fcm_tol", p.fcm_tol);
  read_opt(j, "fcm_max_iter", p.fcm_max_iter);
  read_opt(j, "gmm_tol", p.gmm_tol);
  read_opt(j, "gmm_max_iter", p.gmm_max_iter);
  read_opt(j, "gmm_var_floor", p.gmm_var_floor);
  read_opt(j, "knn_k", p.knn_k);
  read_opt(j, "knn_quantile_low", p.knn_quantile_low);
  read_opt(j, "knn_quantile_high", p.knn_quantile_high);
  read_opt(j, "knn_coord_weight", p.knn_coord_weight);
  read_opt(j, "otsu_bins", p.otsu_bins);
  read_opt(j, "roi_margin_mm", p.roi_margin_mm);
  read_opt(j, "clip_lo", p.clip_lo);
  read_opt(j, "clip_hi", p.clip_hi);
  return p;
}

rad::FeatureSpec features_from(const json& j) {
  reject_unknown(j, {"bin_width", "glcm_distance", "shape", "firstorder", "glcm", "glrlm"}, "features");
  rad::FeatureSpec s;
  read_opt(j, "bin_width", s.bin_width);
  read_opt(j, "glcm_distance", s.glcm_distance);
  read_opt(j, "shape", s.shape);
  read_opt(j, "firstorder", s.firstorder);
  read_opt(j, "glcm", s.glcm);
  read_opt(j, "glrlm", s.glrlm);
  return s;
}

ml::ModelParams models_from(const json& j) {
  reject_unknown(j, {"logistic", "forest", "knn_k"}, "models");
  ml::ModelParams m;
  if (j.contains("logistic")) {
    const json& l = j.at("logistic");
    reject_unknown(l, {"lambda", "grad_tol", "max_iter", "history"}, "models.logistic");
    read_opt(l, "lambda", m.logistic.lambda);
    read_opt(l, "grad_tol", m.logistic.grad_tol);
    read_opt(l, "max_iter", m.logistic.max_iter);
    read_opt(l, "history", m.logistic.history);
  }
  if (j.contains("forest")) {
    const json& f = j.at("forest");
    reject_unknown(f, {"n_trees", "mtry", "min_leaf", "max_depth", "bootstrap"}, "models.forest");
    read_opt(f, "n_trees", m.forest.n_trees);
    read_opt(f, "mtry", m.forest.mtry);
    read_opt(f, "min_leaf", m.forest.min_leaf);
    read_opt(f, "max_depth", m.forest.max_depth);
    read_opt(f, "bootstrap", m.forest.bootstrap);
  }
  read_opt(j, "knn_k", m.knn_k);
  return m;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (radii_mm.empty() || radii_mm.front() != 0.0) fail(ErrorKind::InvalidArgument, "radii must start at 0");
  for (std::size_t i = 1; i < radii_mm.size(); ++i)
    if (!(radii_mm[i] > radii_mm[i - 1])) fail(ErrorKind::InvalidArgument, "radii must be strictly ascending");
  if (bootstrap_n < 100) fail(ErrorKind::InvalidArgument, "bootstrap_n must be >= 100");
  if (!(ci_level > 0.0 && ci_level < 1.0)) fail(ErrorKind::InvalidRange, "ci_level must lie in (0, 1)");
  if (threads < 0) fail(ErrorKind::InvalidArgument, "threads must be >= 0");
  if (models.knn_k < 1 || models.knn_k % 2 == 0) fail(ErrorKind::InvalidArgument, "knn_k must be odd");
  segmentation.validate();
  features.validate();
}

double ExperimentConfig::working_margin_mm() const { return radii_mm.back() + 2.0; }

json to_json(const seg::Params& p) {
  return {{"n_clusters", p.n_clusters},
          {"fcm_fuzzifier", p.fcm_fuzzifier},
          {"fcm_tol", p.fcm_tol},
          {"fcm_max_iter", p.fcm_max_iter},
          {"gmm_tol", p.gmm_tol},
          {"gmm_max_iter", p.gmm_max_iter},
          {"gmm_var_floor", p.gmm_var_floor},
          {"knn_k", p.knn_k},
          {"knn_quantile_low", p.knn_quantile_low},
          {"knn_quantile_high", p.knn_quantile_high},
          {"knn_coord_weight", p.knn_coord_weight},
          {"otsu_bins", p.otsu_bins},
          {"roi_margin_mm", p.roi_margin_mm},
          {"clip_lo", p.clip_lo},
          {"clip_hi", p.clip_hi}};
}

json to_json(const rad::FeatureSpec& s) {
  return {{"bin_width", s.bin_width}, {"glcm_distance", s.glcm_distance}, {"shape", s.shape},
          {"firstorder", s.firstorder}, {"glcm", s.glcm},                   {"glrlm", s.glrlm}};
}

json to_json(const ml::ModelParams& m) {
  return {{"logistic",
           {{"lambda", m.logistic.lambda},
            {"grad_tol", m.logistic.grad_tol},
            {"max_iter", m.logistic.max_iter},
            {"history", m.logistic.history}}},
          {"forest",
           {{"n_trees", m.forest.n_trees},
            {"mtry", m.forest.mtry},
            {"min_leaf", m.forest.min_leaf},
            {"max_depth", m.forest.max_depth},
            {"bootstrap", m.forest.bootstrap}}},
          {"knn_k", m.knn_k}};
}

json to_json(const ExperimentConfig& c) {
  json doc;
  doc["version"] = kConfigVersion;
  doc["manifest"] = c.manifest.generic_string();
  doc["output_dir"] = c.output_dir.generic_string();
  doc["seed"] = c.seed;
  doc["threads"] = c.threads;
  doc["radii_mm"] = c.radii_mm;
  doc["bootstrap_n"] = c.bootstrap_n;
  doc["ci_level"] = c.ci_level;
  doc["segmentation"] = to_json(c.segmentation);
  doc["features"] = to_json(c.features);
  doc["models"] = to_json(c.models);
  json sweep = json::object();
  if (c.sweep_method) sweep["method"] = std::string(seg::to_string(*c.sweep_method));
  if (c.sweep_classifier) sweep["classifier"] = std::string(ml::to_string(*c.sweep_classifier));
  doc["sweep"] = sweep;
  doc["ring_only"] = c.ring_only;
  doc["cache"] = c.use_cache;
  if (!c.phantom.empty()) doc["phantom"] = c.phantom;
  return doc;
}

ExperimentConfig config_from_json(const json& doc) {
  try {
    if (!doc.is_object()) fail(ErrorKind::ParseError, "config must be a JSON object");
    reject_unknown(doc,
                   {"version", "manifest", "output_dir", "seed", "threads", "radii_mm", "bootstrap_n", "ci_level",
                    "segmentation", "features", "models", "sweep", "ring_only", "cache", "phantom"},
                   "config");
    if (!doc.contains("version")) fail(ErrorKind::ParseError, "config has no \"version\"");
    const int version = doc.at("version").get<int>();
    if (version != kConfigVersion)
      fail(ErrorKind::ParseError, "unsupported config version " + std::to_string(version));
    if (!doc.contains("seed")) fail(ErrorKind::InvalidArgument, "config has no \"seed\"");
    ExperimentConfig c;
    c.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("manifest")) c.manifest = doc.at("manifest").get<std::string>();
    if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
    read_opt(doc, "threads", c.threads);
    read_opt(doc, "radii_mm", c.radii_mm);
    read_opt(doc, "bootstrap_n", c.bootstrap_n);
    read_opt(doc, "ci_level", c.ci_level);
    read_opt(doc, "ring_only", c.ring_only);
    read_opt(doc, "cache", c.use_cache);
    if (doc.contains("phantom")) {
      c.phantom = doc.at("phantom");
      if (!c.phantom.is_object()) fail(ErrorKind::ParseError, "\"phantom\" must be an object");
    }
    if (doc.contains("segmentation")) c.segmentation = seg_from(doc.at("segmentation"));
    if (doc.contains("features")) c.features = features_from(doc.at("features"));
    if (doc.contains("models")) c.models = models_from(doc.at("models"));
    if (doc.contains("sweep")) {
      const json& s = doc.at("sweep");
      reject_unknown(s, {"method", "classifier"}, "sweep");
      if (s.contains("method")) c.sweep_method = seg::parse_method(s.at("method").get<std::string>());
      if (s.contains("classifier")) c.sweep_classifier = ml::parse_classifier(s.at("classifier").get<std::string>());
    }
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

std::string config_hash(const ExperimentConfig& config) {
  json doc = to_json(config);
  doc.erase("threads");
  doc.erase("manifest");
  doc.erase("output_dir");
  doc.erase("cache");
  doc.erase("phantom");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng::fnv1a(doc.dump())));
  return buf;
}

phantom::PhantomSpec phantom_spec(const ExperimentConfig& config) {
  phantom::PhantomSpec s;
  s.seed = config.seed;
  const json& j = config.phantom;
  try {
    reject_unknown(j,
                   {"n_cases", "malignant_fraction", "dims", "spacing", "background_mean", "background_sd",
                    "nodule_mean", "nodule_sd", "radius_min", "radius_max", "axis_jitter", "center_jitter",
                    "shell_inner", "shell_outer", "shell_offset", "shell_texture_sd", "texture_correlation",
                    "irregularity_malignant", "irregularity_benign", "lobe_frequency", "psf_sigma", "seed"},
                   "phantom");
    read_opt(j, "n_cases", s.n_cases);
    read_opt(j, "malignant_fraction", s.malignant_fraction);
    if (j.contains("dims")) {
      const auto d = j.at("dims").get<std::vector<std::int64_t>>();
      if (d.size() != 3) fail(ErrorKind::ParseError, "phantom.dims needs three entries");
      s.dims = {d[0], d[1], d[2]};
    }
    if (j.contains("spacing")) {
      const auto sp = j.at("spacing").get<std::vector<double>>();
      if (sp.size() != 3) fail(ErrorKind::ParseError, "phantom.spacing needs three entries");
      s.spacing = {sp[0], sp[1], sp[2]};
    }
    read_opt(j, "background_mean", s.background_mean);
    read_opt(j, "background_sd", s.background_sd);
    read_opt(j, "nodule_mean", s.nodule_mean);
    read_opt(j, "nodule_sd", s.nodule_sd);
    read_opt(j, "radius_min", s.radius_min);
    read_opt(j, "radius_max", s.radius_max);
    read_opt(j, "axis_jitter", s.axis_jitter);
    read_opt(j, "center_jitter", s.center_jitter);
    read_opt(j, "shell_inner", s.shell_inner);
    read_opt(j, "shell_outer", s.shell_outer);
    read_opt(j, "shell_offset", s.shell_offset);
    read_opt(j, "shell_texture_sd", s.shell_texture_sd);
    read_opt(j, "texture_correlation", s.texture_correlation);
    read_opt(j, "irregularity_malignant", s.irregularity_malignant);
    read_opt(j, "irregularity_benign", s.irregularity_benign);
    read_opt(j, "lobe_frequency", s.lobe_frequency);
    read_opt(j, "psf_sigma", s.psf_sigma);
    read_opt(j, "seed", s.seed);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("phantom section: ") + e.what());
  }
  return s;
}

}  // namespace peri::harness
