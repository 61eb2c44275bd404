#include "peri/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "peri/csv.hpp"
#include "peri/error.hpp"
#include "peri/log.hpp"
#include "peri/morphology.hpp"
#include "peri/nifti.hpp"
#include "peri/parallel.hpp"
#include "peri/rng.hpp"

#ifndef PERI_VERSION
#define PERI_VERSION "0.0.0"
#endif

namespace peri::harness {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void write_failures(const std::filesystem::path& path, const std::vector<CaseFailure>& failures) {
  auto out = open_out(path);
  out << "case_id,method,message\n";
  for (const auto& f : failures) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << f.case_id << ',' << f.method << ',' << msg << '\n';
  }
}

void write_json(const std::filesystem::path& path, const json& doc) { open_out(path) << doc.dump(2) << '\n'; }

std::vector<CaseRecord> sorted_manifest(const ExperimentConfig& config) {
  if (config.manifest.empty()) fail(ErrorKind::InvalidArgument, "no manifest given");
  std::vector<CaseRecord> cases = read_manifest(config.manifest);
  std::sort(cases.begin(), cases.end(), [](const auto& a, const auto& b) { return a.case_id < b.case_id; });
  return cases;
}

void require_all_splits(const std::vector<CaseRecord>& cases) {
  bool seen[3] = {false, false, false};
  for (const auto& c : cases) seen[static_cast<int>(c.split)] = true;
  for (Split s : {Split::Train, Split::Validation, Split::Test})
    if (!seen[static_cast<int>(s)])
      fail(ErrorKind::DegenerateInput, "manifest has no " + std::string(to_string(s)) + " cases");
}

std::vector<FeatureRow> table_rows(const CohortFeatures& cf, seg::Method method, const std::vector<double>& radii,
                                   bool ring) {
  std::vector<FeatureRow> rows;
  for (std::size_t r = 0; r < radii.size(); ++r)
    for (std::size_t i = 0; i < cf.cases.size(); ++i) {
      if (cf.values[i].empty()) continue;
      const auto& c = cf.cases[i];
      rows.push_back({c.case_id, c.label, c.split, mask_variant(method, radii[r], ring), cf.values[i][r]});
    }
  return rows;
}

eval::AucResult evaluate(const ml::TrainedPipeline& model, const ml::Matrix& x, const std::vector<int>& y,
                         const ExperimentConfig& config, int threads) {
  const std::vector<double> scores = model.predict(x);
  return eval::bootstrap_ci(scores, y, config.bootstrap_n, config.ci_level, bootstrap_seed(config), threads);
}

void log_failures(const std::vector<CaseFailure>& failures, std::string_view method) {
  if (failures.empty()) return;
  log::warn(std::to_string(failures.size()) + " case(s) excluded for method " + std::string(method));
  for (const auto& f : failures) log::warn("  " + f.case_id + ": " + f.message);
}

}  // namespace

std::uint64_t model_seed(const ExperimentConfig& c) { return rng::derive_seed(c.seed, "model"); }
std::uint64_t bootstrap_seed(const ExperimentConfig& c) { return rng::derive_seed(c.seed, "bootstrap"); }

// --- feature table ---------------------------------------------------------------

std::string mask_variant(seg::Method method, double radius_mm, bool ring_only) {
  return std::string(seg::to_string(method)) + (ring_only ? "-ring" : "") + "_r" + csv::format_double(radius_mm);
}

void write_feature_table(const std::filesystem::path& path, const std::vector<FeatureRow>& rows) {
  auto out = open_out(path);
  out << "case_id,label,split,mask_variant";
  for (const auto& n : rad::feature_names()) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << r.case_id << ',' << r.label << ',' << to_string(r.split) << ',' << r.mask_variant;
    for (double v : r.values) out << ',' << csv::format_double(v);
    out << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

std::vector<FeatureRow> read_feature_table(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  std::vector<std::string> expected{"case_id", "label", "split", "mask_variant"};
  for (const auto& n : rad::feature_names()) expected.push_back(n);
  if (t.header != expected) fail(ErrorKind::ParseError, path.string() + ": not a feature table header");
  std::vector<FeatureRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::size_t line = t.line_numbers[i];
    FeatureRow r;
    r.case_id = f[0];
    r.label = static_cast<int>(csv::parse_int(f[1], line, "label"));
    if (r.label != 0 && r.label != 1) fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": label must be 0 or 1");
    r.split = parse_split(f[2]);
    r.mask_variant = f[3];
    for (std::size_t j = 4; j < f.size(); ++j) r.values.push_back(csv::parse_double(f[j], line, expected[j]));
    rows.push_back(std::move(r));
  }
  return rows;
}

void split_matrix(const std::vector<FeatureRow>& table, Split split, const std::string& variant, ml::Matrix& x,
                  std::vector<int>& y) {
  std::vector<const FeatureRow*> picked;
  for (const auto& r : table)
    if (r.split == split && r.mask_variant == variant) picked.push_back(&r);
  const std::size_t d = picked.empty() ? rad::feature_names().size() : picked.front()->values.size();
  x = ml::Matrix(picked.size(), d);
  y.clear();
  for (std::size_t i = 0; i < picked.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) x.at(i, j) = picked[i]->values[j];
    y.push_back(picked[i]->label);
  }
}

// --- audit -----------------------------------------------------------------------

std::string_view to_string(Purpose purpose) {
  switch (purpose) {
    case Purpose::Train: return "train";
    case Purpose::Select: return "select";
    case Purpose::Evaluate: return "evaluate";
  }
  return "evaluate";
}

void SplitAudit::record(std::string stage, Split split, Purpose purpose, std::size_t n_rows) {
  entries_.push_back({std::move(stage), split, purpose, n_rows});
}

void SplitAudit::verify() const {
  for (const auto& e : entries_)
    if (e.split == Split::Test && e.purpose != Purpose::Evaluate)
      fail(ErrorKind::InvalidArgument, "test split used for " + std::string(to_string(e.purpose)) + " in " + e.stage);
}

void SplitAudit::write(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "stage,split,purpose,n_rows\n";
  for (const auto& e : entries_)
    out << e.stage << ',' << to_string(e.split) << ',' << to_string(e.purpose) << ',' << e.n_rows << '\n';
}

// --- per-case pipeline --------------------------------------------------------------

std::vector<rad::FeatureVector> case_features(const Volume3D& volume, const BoundingBox& bbox, seg::Method method,
                                              const std::vector<double>& radii_mm, const ExperimentConfig& config) {
  const seg::Result s = seg::segment(volume, bbox, method, config.segmentation, 1);
  std::vector<rad::FeatureVector> out;
  std::optional<morph::DistanceMap> distance;
  for (double r : radii_mm) {
    if (r == 0.0) {
      out.push_back(rad::extract(volume, s.mask, config.features, 1));
      continue;
    }
    if (!distance) distance = morph::edt(s.mask, volume.spacing(), 1);
    Mask3D region = morph::dilate_from_distance(s.mask, *distance, r);
    if (config.ring_only)
      for (std::size_t i = 0; i < region.size(); ++i)
        if (s.mask[i]) region.set(i, false);
    out.push_back(rad::extract(volume, region, config.features, 1));
  }
  return out;
}

rad::FeatureVector nodule_features(const Volume3D& volume, const BoundingBox& bbox, seg::Method method,
                                   const ExperimentConfig& config) {
  const seg::Result s = seg::segment(volume, bbox, method, config.segmentation, 1);
  return rad::extract(volume, s.mask, config.features, 1);
}

FeatureCache::FeatureCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) ensure_dir(*dir_);
}

std::optional<std::vector<double>> FeatureCache::get(const std::string& key) {
  std::lock_guard lock(mutex_);
  if (auto it = memory_.find(key); it != memory_.end()) {
    ++hits_;
    return it->second;
  }
  if (!dir_) return std::nullopt;
  std::ifstream in(*dir_ / (key + ".csv"), std::ios::binary);
  if (!in) return std::nullopt;
  std::string line;
  std::getline(in, line);
  std::vector<double> values;
  try {
    for (const auto& f : csv::split_line(line)) values.push_back(csv::parse_double(f, 1, "cache"));
  } catch (const Error&) {
    return std::nullopt;  // unreadable entries are recomputed
  }
  if (values.size() != rad::feature_names().size()) return std::nullopt;
  memory_[key] = values;
  ++hits_;
  return values;
}

void FeatureCache::put(const std::string& key, const std::vector<double>& values) {
  std::lock_guard lock(mutex_);
  memory_[key] = values;
  if (!dir_) return;
  const auto final_path = *dir_ / (key + ".csv");
  const auto tmp = *dir_ / (key + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << csv::format_double(values[i]);
    out << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, final_path, ec);
}

std::string feature_cache_key(std::uint64_t image_hash, const BoundingBox& bbox, seg::Method method,
                              const ExperimentConfig& config, double radius_mm) {
  std::ostringstream s;
  s << hex64(image_hash) << '|' << bbox.min.x << ',' << bbox.min.y << ',' << bbox.min.z << ',' << bbox.max.x << ','
    << bbox.max.y << ',' << bbox.max.z << '|' << seg::to_string(method) << '|' << to_json(config.segmentation).dump()
    << '|' << to_json(config.features).dump() << '|' << csv::format_double(radius_mm)
    << (config.ring_only && radius_mm > 0.0 ? "|ring" : "");
  return hex64(rng::fnv1a(s.str()));
}

CohortFeatures cohort_features(const ExperimentConfig& config, seg::Method method, const std::vector<double>& radii_mm,
                               FeatureCache* cache) {
  CohortFeatures cf;
  cf.cases = sorted_manifest(config);
  std::vector<std::filesystem::path> images;
  for (const auto& c : cf.cases) {
    images.push_back(resolve_image_path(config.manifest, c));
    if (!std::filesystem::is_regular_file(images.back()))
      fail(ErrorKind::MissingFile, "case " + c.case_id + ": image not found at " + images.back().string());
  }
  const std::size_t n = cf.cases.size();
  cf.values.assign(n, {});
  std::vector<std::optional<CaseFailure>> failed(n);
  std::vector<std::uint8_t> clamped(n, 0);
  const double margin = std::max(config.working_margin_mm(), radii_mm.back() + 2.0);

  parallel_for(n, resolve_threads(config.threads), [&](std::size_t i) {
    const CaseRecord& c = cf.cases[i];
    try {
      const std::string bytes = read_file(images[i]);
      const std::uint64_t image_hash = hash_bytes(bytes);
      std::vector<std::string> keys;
      std::vector<std::vector<double>> values(radii_mm.size());
      bool all_cached = cache != nullptr;
      for (std::size_t r = 0; r < radii_mm.size(); ++r) {
        keys.push_back(feature_cache_key(image_hash, c.bbox, method, config, radii_mm[r]));
        if (cache) {
          if (auto hit = cache->get(keys.back())) {
            values[r] = std::move(*hit);
            continue;
          }
        }
        all_cached = false;
      }
      if (!all_cached) {
        const Volume3D volume = nifti::read(images[i]);
        c.bbox.validate(volume.dims());
        bool was_clamped = false;
        const Region region = expand_region(volume.dims(), volume.spacing(), c.bbox, margin, &was_clamped);
        clamped[i] = was_clamped;
        const Volume3D work = extract_region(volume, region);
        const auto fv = case_features(work, to_region_frame(c.bbox, region), method, radii_mm, config);
        for (std::size_t r = 0; r < radii_mm.size(); ++r) {
          if (fv[r].glcm_fallback)
            log::warn("case " + c.case_id + ": no GLCM pairs at r=" + csv::format_double(radii_mm[r]) +
                      ", texture set to zero");
          values[r] = fv[r].values;
          if (cache) cache->put(keys[r], values[r]);
        }
      }
      cf.values[i] = std::move(values);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::MissingFile) throw;
      failed[i] = CaseFailure{c.case_id, std::string(seg::to_string(method)), e.what()};
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i]) cf.failures.push_back(*failed[i]);
    if (clamped[i])
      log::warn("case " + cf.cases[i].case_id + ": working crop clipped at the volume border; the outer shells may be truncated");
  }
  log_failures(cf.failures, seg::to_string(method));
  return cf;
}

// --- experiments ------------------------------------------------------------------

json Provenance::to_json() const {
  return {{"config_hash", config_hash}, {"seed", seed}, {"tool_version", tool_version}, {"compiler", compiler}};
}

Provenance make_provenance(const ExperimentConfig& config) {
  Provenance p;
  p.config_hash = config_hash(config);
  p.seed = config.seed;
  p.tool_version = PERI_VERSION;
#if defined(__clang__)
  p.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  p.compiler = "gcc " __VERSION__;
#else
  p.compiler = "unknown";
#endif
  return p;
}

GridReport run_grid(const ExperimentConfig& config) {
  config.validate();
  ensure_dir(config.output_dir);
  const int threads = resolve_threads(config.threads);
  FeatureCache cache(config.use_cache ? std::optional(config.output_dir / "cache") : std::nullopt);
  require_all_splits(sorted_manifest(config));

  GridReport report;
  report.provenance = make_provenance(config);
  const std::vector<double> radii{0.0};
  const auto& names = rad::feature_names();
  double best = -1.0;
  for (seg::Method method : seg::kAllMethods) {
    log::info("grid: segmenting and extracting with " + std::string(seg::to_string(method)));
    const CohortFeatures cf = cohort_features(config, method, radii, &cache);
    report.failures.insert(report.failures.end(), cf.failures.begin(), cf.failures.end());
    const auto rows = table_rows(cf, method, radii, false);
    report.features.insert(report.features.end(), rows.begin(), rows.end());

    const std::string variant = mask_variant(method, 0.0);
    ml::Matrix x_train, x_val;
    std::vector<int> y_train, y_val;
    split_matrix(rows, Split::Train, variant, x_train, y_train);
    split_matrix(rows, Split::Validation, variant, x_val, y_val);
    for (ml::ClassifierKind kind : ml::kAllClassifiers) {
      const std::string stage = "grid/" + variant + "/" + std::string(ml::to_string(kind));
      report.audit.record(stage, Split::Train, Purpose::Train, x_train.rows);
      const auto model = ml::train_pipeline(kind, x_train, y_train, names, config.models, model_seed(config), threads);
      report.audit.record(stage, Split::Validation, Purpose::Select, x_val.rows);
      const eval::AucResult r = evaluate(model, x_val, y_val, config, threads);
      report.cells.push_back({std::string(ml::to_string(kind)), variant, "validation", r});
      if (r.auc > best) {  // strict: the first cell in row-major order wins ties
        best = r.auc;
        report.best_method = method;
        report.best_classifier = kind;
      }
    }
  }
  report.audit.verify();

  const auto& out = config.output_dir;
  eval::write_eval_csv(out / "grid.csv", report.cells);
  write_feature_table(out / "grid_features.csv", report.features);
  write_failures(out / "grid_failures.csv", report.failures);
  report.audit.write(out / "grid_audit.csv");
  json prov = report.provenance.to_json();
  prov["best"] = {{"method", std::string(seg::to_string(report.best_method))},
                  {"classifier", std::string(ml::to_string(report.best_classifier))}};
  prov["excluded_cases"] = report.failures.size();
  write_json(out / "grid_provenance.json", prov);
  log::info("grid: best validation cell is " + std::string(seg::to_string(report.best_method)) + " + " +
            std::string(ml::to_string(report.best_classifier)) + " (AUC " + csv::format_double(best) + ")");
  return report;
}

std::pair<seg::Method, ml::ClassifierKind> sweep_choice(const ExperimentConfig& config, const GridReport* grid) {
  if (config.sweep_method && config.sweep_classifier) return {*config.sweep_method, *config.sweep_classifier};
  if (!grid) fail(ErrorKind::InvalidArgument, "sweep method and classifier not configured and no grid result given");
  return {config.sweep_method.value_or(grid->best_method), config.sweep_classifier.value_or(grid->best_classifier)};
}

double SweepReport::auc(Split split, double radius_mm) const {
  const std::string variant = mask_variant(method, radius_mm, ring_only);
  for (const auto& r : rows)
    if (r.mask_variant == variant && r.split == to_string(split)) return r.result.auc;
  fail(ErrorKind::InvalidArgument, "no sweep row for " + variant + " / " + std::string(to_string(split)));
}

SweepReport run_expansion_sweep(const ExperimentConfig& config, seg::Method method, ml::ClassifierKind classifier) {
  config.validate();
  ensure_dir(config.output_dir);
  const int threads = resolve_threads(config.threads);
  FeatureCache cache(config.use_cache ? std::optional(config.output_dir / "cache") : std::nullopt);

  SweepReport report;
  report.method = method;
  report.classifier = classifier;
  report.ring_only = config.ring_only;
  report.provenance = make_provenance(config);
  log::info("sweep: " + std::string(seg::to_string(method)) + " segmentation, " + std::string(ml::to_string(classifier)));
  const CohortFeatures cf = cohort_features(config, method, config.radii_mm, &cache);
  require_all_splits(cf.cases);
  report.failures = cf.failures;
  report.features = table_rows(cf, method, config.radii_mm, config.ring_only);
  const auto& names = rad::feature_names();

  for (double radius : config.radii_mm) {
    const std::string variant = mask_variant(method, radius, config.ring_only);
    const std::string stage = "sweep/" + variant + "/" + std::string(ml::to_string(classifier));
    ml::Matrix x_train, x_test;
    std::vector<int> y_train, y_test;
    split_matrix(report.features, Split::Train, variant, x_train, y_train);
    split_matrix(report.features, Split::Test, variant, x_test, y_test);
    report.audit.record(stage, Split::Train, Purpose::Train, x_train.rows);
    const auto model = ml::train_pipeline(classifier, x_train, y_train, names, config.models, model_seed(config), threads);
    report.audit.record(stage, Split::Train, Purpose::Evaluate, x_train.rows);
    report.rows.push_back({std::string(ml::to_string(classifier)), variant, "train",
                           evaluate(model, x_train, y_train, config, threads)});
    report.audit.record(stage, Split::Test, Purpose::Evaluate, x_test.rows);
    report.rows.push_back({std::string(ml::to_string(classifier)), variant, "test",
                           evaluate(model, x_test, y_test, config, threads)});
    if (classifier != ml::ClassifierKind::Knn) {
      const auto ranked = ml::feature_importance(model);
      for (std::size_t k = 0; k < ranked.size(); ++k)
        report.importance.push_back({radius, k + 1, ranked[k].first, ranked[k].second});
    }
  }
  report.audit.verify();

  const auto& out = config.output_dir;
  eval::write_eval_csv(out / "sweep.csv", report.rows);
  write_feature_table(out / "sweep_features.csv", report.features);
  {
    auto f = open_out(out / "sweep_importance.csv");
    f << "radius_mm,rank,feature,score\n";
    for (const auto& r : report.importance)
      f << csv::format_double(r.radius_mm) << ',' << r.rank << ',' << r.feature << ',' << csv::format_double(r.score)
        << '\n';
  }
  write_failures(out / "sweep_failures.csv", report.failures);
  report.audit.write(out / "sweep_audit.csv");
  json prov = report.provenance.to_json();
  prov["method"] = std::string(seg::to_string(method));
  prov["classifier"] = std::string(ml::to_string(classifier));
  prov["excluded_cases"] = report.failures.size();
  write_json(out / "sweep_provenance.json", prov);
  return report;
}

}  // namespace peri::harness
