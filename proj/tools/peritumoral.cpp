// Command line front end: phantom, segment, dilate, extract, train, eval, grid,
// sweep, report. Exit status 0 ok, 1 usage, 2 data error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "peri/config.hpp"
#include "peri/csv.hpp"
#include "peri/error.hpp"
#include "peri/evaluation.hpp"
#include "peri/harness.hpp"
#include "peri/log.hpp"
#include "peri/manifest.hpp"
#include "peri/model_io.hpp"
#include "peri/morphology.hpp"
#include "peri/nifti.hpp"
#include "peri/parallel.hpp"
#include "peri/phantom.hpp"
#include "peri/radiomics.hpp"
#include "peri/report.hpp"
#include "peri/segmentation.hpp"

namespace fs = std::filesystem;
using namespace peri;

namespace {

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config JSON");
  cmd->add_option("--seed", c.seed, "Master seed (overrides the config)");
  cmd->add_option("--threads", c.threads, "Worker threads, 0 for the OpenMP default");
  cmd->add_flag("--quiet", c.quiet, "Only print warnings and errors");
}

harness::ExperimentConfig load(const Common& c, bool need_seed) {
  harness::ExperimentConfig cfg;
  bool have_seed = false;
  if (!c.config.empty()) {
    cfg = harness::load_config(c.config);
    have_seed = true;
  }
  if (c.seed) {
    cfg.seed = *c.seed;
    have_seed = true;
  }
  if (c.threads) cfg.threads = *c.threads;
  if (need_seed && !have_seed) fail(ErrorKind::InvalidArgument, "a seed is required (--seed or a config file)");
  log::set_level(c.quiet ? log::Level::Warn : log::Level::Info);
  return cfg;
}

BoundingBox parse_bbox(const std::string& text) {
  std::vector<std::int64_t> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(csv::parse_int(item, 0, "bbox"));
  if (v.size() != 6) fail(ErrorKind::InvalidArgument, "--bbox needs x0,y0,z0,x1,y1,z1");
  return {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

const CaseRecord& find_case(const std::vector<CaseRecord>& cases, const std::string& id) {
  for (const auto& c : cases)
    if (c.case_id == id) return c;
  fail(ErrorKind::InvalidArgument, "case '" + id + "' is not in the manifest");
}

// Image and box from either --image/--bbox or --manifest/--case.
struct CaseInput {
  std::string image, bbox, manifest, case_id;

  void add(CLI::App* cmd) {
    cmd->add_option("--image", image, "NIfTI image");
    cmd->add_option("--bbox", bbox, "Nodule box x0,y0,z0,x1,y1,z1 (max exclusive)");
    cmd->add_option("--manifest", manifest, "Cohort manifest CSV");
    cmd->add_option("--case", case_id, "Case id within --manifest");
  }

  std::pair<Volume3D, BoundingBox> resolve() const {
    if (!manifest.empty() && !case_id.empty()) {
      const auto cases = read_manifest(manifest);
      const CaseRecord& c = find_case(cases, case_id);
      const fs::path path = resolve_image_path(manifest, c);
      if (!fs::exists(path)) fail(ErrorKind::MissingFile, "case " + c.case_id + ": image not found at " + path.string());
      return {nifti::read(path), c.bbox};
    }
    if (image.empty() || bbox.empty())
      fail(ErrorKind::InvalidArgument, "give --image and --bbox, or --manifest and --case");
    const BoundingBox box = parse_bbox(bbox);
    return {nifti::read(image), box};
  }
};

std::string variant_or_default(const std::string& variant, const std::vector<harness::FeatureRow>& rows) {
  if (!variant.empty()) return variant;
  if (rows.empty()) fail(ErrorKind::ParseError, "feature table has no rows");
  for (const auto& r : rows)
    if (r.mask_variant != rows.front().mask_variant)
      fail(ErrorKind::InvalidArgument, "feature table holds several mask variants; choose one with --variant");
  return rows.front().mask_variant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peritumoral radiomics pipeline: segmentation, expansion, features, classifiers, AUC"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // phantom
  Common phantom_common;
  std::string phantom_out = "cohort";
  std::optional<int> phantom_cases;
  auto* phantom_cmd = app.add_subcommand("phantom", "Generate a synthetic CT cohort with ground-truth masks");
  add_common(phantom_cmd, phantom_common);
  phantom_cmd->add_option("--out", phantom_out, "Output directory");
  phantom_cmd->add_option("--n-cases", phantom_cases, "Number of cases");

  // segment
  Common seg_common;
  CaseInput seg_input;
  std::string seg_method = "knn", seg_out;
  auto* seg_cmd = app.add_subcommand("segment", "Segment one nodule inside its box");
  add_common(seg_cmd, seg_common);
  seg_input.add(seg_cmd);
  seg_cmd->add_option("--method", seg_method, "otsu | fcm | gmm | knn");
  seg_cmd->add_option("--out", seg_out, "Output mask NIfTI")->required();

  // dilate
  Common dil_common;
  std::string dil_mask, dil_out;
  double dil_radius = 0.0;
  auto* dil_cmd = app.add_subcommand("dilate", "Grow a mask by a physical radius");
  add_common(dil_cmd, dil_common);
  dil_cmd->add_option("--mask", dil_mask, "Input mask NIfTI")->required();
  dil_cmd->add_option("--radius-mm", dil_radius, "Radius in mm")->required();
  dil_cmd->add_option("--out", dil_out, "Output mask NIfTI")->required();

  // extract
  Common ext_common;
  std::string ext_image, ext_mask, ext_out, ext_case = "case", ext_split = "train", ext_variant = "custom";
  std::string ext_manifest, ext_method = "knn";
  int ext_label = 0;
  std::vector<double> ext_radii;
  auto* ext_cmd = app.add_subcommand("extract", "Radiomics features for one mask or a whole cohort");
  add_common(ext_cmd, ext_common);
  ext_cmd->add_option("--image", ext_image, "NIfTI image (single-case mode)");
  ext_cmd->add_option("--mask", ext_mask, "Mask NIfTI (single-case mode)");
  ext_cmd->add_option("--case-id", ext_case, "case_id column value (single-case mode)");
  ext_cmd->add_option("--label", ext_label, "label column value (single-case mode)");
  ext_cmd->add_option("--split", ext_split, "split column value (single-case mode)");
  ext_cmd->add_option("--variant", ext_variant, "mask_variant column value (single-case mode)");
  ext_cmd->add_option("--manifest", ext_manifest, "Cohort manifest (cohort mode)");
  ext_cmd->add_option("--method", ext_method, "Segmentation method (cohort mode)");
  ext_cmd->add_option("--radius-mm", ext_radii, "Expansion radii (cohort mode); default from the config");
  ext_cmd->add_option("--out", ext_out, "Output feature table CSV")->required();

  // train
  Common train_common;
  std::string train_features, train_variant, train_classifier = "logreg", train_out;
  auto* train_cmd = app.add_subcommand("train", "Fit a classifier on the train split of a feature table");
  add_common(train_cmd, train_common);
  train_cmd->add_option("--features", train_features, "Feature table CSV")->required();
  train_cmd->add_option("--variant", train_variant, "mask_variant to use");
  train_cmd->add_option("--classifier", train_classifier, "rf | logreg | knn");
  train_cmd->add_option("--out", train_out, "Output model JSON")->required();

  // eval
  Common eval_common;
  std::string eval_model, eval_features, eval_variant, eval_split = "test", eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "AUC with a bootstrap interval for a saved model");
  add_common(eval_cmd, eval_common);
  eval_cmd->add_option("--model", eval_model, "Model JSON")->required();
  eval_cmd->add_option("--features", eval_features, "Feature table CSV")->required();
  eval_cmd->add_option("--variant", eval_variant, "mask_variant to use");
  eval_cmd->add_option("--split", eval_split, "train | validation | test");
  eval_cmd->add_option("--out", eval_out, "Evaluation CSV (stdout when omitted)");

  // grid / sweep
  Common grid_common;
  std::string grid_manifest, grid_out;
  std::optional<int> grid_boot;
  auto* grid_cmd = app.add_subcommand("grid", "Validation AUC for every segmentation x classifier pair");
  add_common(grid_cmd, grid_common);
  grid_cmd->add_option("--manifest", grid_manifest, "Cohort manifest (overrides the config)");
  grid_cmd->add_option("--out", grid_out, "Output directory (overrides the config)");
  grid_cmd->add_option("--bootstrap-n", grid_boot, "Bootstrap replicates");

  Common sweep_common;
  std::string sweep_manifest, sweep_out, sweep_method, sweep_classifier;
  std::optional<int> sweep_boot;
  bool sweep_ring = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "AUC against peritumoral expansion radius");
  add_common(sweep_cmd, sweep_common);
  sweep_cmd->add_option("--manifest", sweep_manifest, "Cohort manifest (overrides the config)");
  sweep_cmd->add_option("--out", sweep_out, "Output directory (overrides the config)");
  sweep_cmd->add_option("--bootstrap-n", sweep_boot, "Bootstrap replicates");
  sweep_cmd->add_option("--method", sweep_method, "Segmentation method; default from config, else the grid winner");
  sweep_cmd->add_option("--classifier", sweep_classifier, "Classifier; default from config, else the grid winner");
  sweep_cmd->add_flag("--ring-only", sweep_ring, "Use the expansion ring without the nodule");

  // report
  Common rep_common;
  std::vector<std::string> rep_csv;
  std::string rep_out = "report";
  auto* rep_cmd = app.add_subcommand("report", "SVG charts and a markdown summary from evaluation CSVs");
  add_common(rep_cmd, rep_common);
  rep_cmd->add_option("--csv", rep_csv, "Evaluation CSVs")->required();
  rep_cmd->add_option("--out", rep_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*phantom_cmd) {
      auto cfg = load(phantom_common, true);
      phantom::PhantomSpec spec = harness::phantom_spec(cfg);
      if (phantom_common.seed) spec.seed = *phantom_common.seed;
      if (phantom_cases) spec.n_cases = *phantom_cases;
      const auto records = phantom::generate_cohort(spec, phantom_out, resolve_threads(cfg.threads));
      log::info("wrote " + std::to_string(records.size()) + " cases to " + phantom_out);
      std::cout << (fs::path(phantom_out) / "manifest.csv").string() << '\n';
    } else if (*seg_cmd) {
      auto cfg = load(seg_common, false);
      const auto [volume, bbox] = seg_input.resolve();
      const auto result = seg::segment(volume, bbox, seg::parse_method(seg_method), cfg.segmentation,
                                       resolve_threads(cfg.threads));
      nifti::write_mask(result.mask, seg_out);
      std::cout << "method," << seg::to_string(result.method) << "\nvoxels," << result.mask.count()
                << "\niterations," << result.iterations << "\nconverged," << (result.converged ? 1 : 0) << '\n';
    } else if (*dil_cmd) {
      auto cfg = load(dil_common, false);
      const Mask3D mask = nifti::read_mask(dil_mask);
      const Mask3D grown = morph::dilate_mm(mask, dil_radius);
      nifti::write_mask(grown, dil_out);
      std::cout << "voxels_in," << mask.count() << "\nvoxels_out," << grown.count() << '\n';
    } else if (*ext_cmd) {
      auto cfg = load(ext_common, false);
      if (!ext_manifest.empty()) {
        cfg.manifest = ext_manifest;
        const std::vector<double> radii = ext_radii.empty() ? cfg.radii_mm : ext_radii;
        const auto method = seg::parse_method(ext_method);
        const auto cf = harness::cohort_features(cfg, method, radii);
        std::vector<harness::FeatureRow> rows;
        for (std::size_t r = 0; r < radii.size(); ++r)
          for (std::size_t i = 0; i < cf.cases.size(); ++i)
            if (!cf.values[i].empty())
              rows.push_back({cf.cases[i].case_id, cf.cases[i].label, cf.cases[i].split,
                              harness::mask_variant(method, radii[r], cfg.ring_only), cf.values[i][r]});
        harness::write_feature_table(ext_out, rows);
      } else {
        if (ext_image.empty() || ext_mask.empty())
          fail(ErrorKind::InvalidArgument, "give --image and --mask, or --manifest");
        const Volume3D volume = nifti::read(ext_image);
        const Mask3D mask = nifti::read_mask(ext_mask);
        const auto fv = rad::extract(volume, mask, cfg.features, resolve_threads(cfg.threads));
        harness::write_feature_table(ext_out, {{ext_case, ext_label, parse_split(ext_split), ext_variant, fv.values}});
      }
    } else if (*train_cmd) {
      auto cfg = load(train_common, true);
      const auto rows = harness::read_feature_table(train_features);
      const std::string variant = variant_or_default(train_variant, rows);
      ml::Matrix x;
      std::vector<int> y;
      harness::split_matrix(rows, Split::Train, variant, x, y);
      const auto model = ml::train_pipeline(ml::parse_classifier(train_classifier), x, y, rad::feature_names(),
                                            cfg.models, harness::model_seed(cfg),
                                            resolve_threads(cfg.threads));
      ml::save_model(model, train_out);
      log::info("trained " + std::string(ml::to_string(model.kind())) + " on " + std::to_string(x.rows) + " rows of " +
                variant);
    } else if (*eval_cmd) {
      auto cfg = load(eval_common, true);
      const auto model = ml::load_model(eval_model);
      const auto rows = harness::read_feature_table(eval_features);
      const std::string variant = variant_or_default(eval_variant, rows);
      const Split split = parse_split(eval_split);
      ml::Matrix x;
      std::vector<int> y;
      harness::split_matrix(rows, split, variant, x, y);
      const auto scores = model.predict(x);
      const auto r = eval::bootstrap_ci(scores, y, cfg.bootstrap_n, cfg.ci_level, harness::bootstrap_seed(cfg),
                                        resolve_threads(cfg.threads));
      const eval::EvalRow row{std::string(ml::to_string(model.kind())), variant, std::string(to_string(split)), r};
      if (eval_out.empty()) {
        std::cout << eval::eval_csv_header() << '\n' << eval::format_eval_row(row) << '\n';
      } else {
        eval::write_eval_csv(eval_out, std::vector<eval::EvalRow>{row});
      }
    } else if (*grid_cmd) {
      auto cfg = load(grid_common, true);
      if (!grid_manifest.empty()) cfg.manifest = grid_manifest;
      if (!grid_out.empty()) cfg.output_dir = grid_out;
      if (grid_boot) cfg.bootstrap_n = *grid_boot;
      const auto report = harness::run_grid(cfg);
      std::cout << (cfg.output_dir / "grid.csv").string() << '\n';
    } else if (*sweep_cmd) {
      auto cfg = load(sweep_common, true);
      if (!sweep_manifest.empty()) cfg.manifest = sweep_manifest;
      if (!sweep_out.empty()) cfg.output_dir = sweep_out;
      if (sweep_boot) cfg.bootstrap_n = *sweep_boot;
      if (sweep_ring) cfg.ring_only = true;
      if (!sweep_method.empty()) cfg.sweep_method = seg::parse_method(sweep_method);
      if (!sweep_classifier.empty()) cfg.sweep_classifier = ml::parse_classifier(sweep_classifier);
      std::optional<harness::GridReport> grid;
      if (!cfg.sweep_method || !cfg.sweep_classifier) {
        log::info("sweep: no method/classifier configured, running the grid to choose them");
        grid = harness::run_grid(cfg);
      }
      const auto [method, classifier] = harness::sweep_choice(cfg, grid ? &*grid : nullptr);
      harness::run_expansion_sweep(cfg, method, classifier);
      std::cout << (cfg.output_dir / "sweep.csv").string() << '\n';
    } else if (*rep_cmd) {
      load(rep_common, false);
      std::vector<fs::path> paths(rep_csv.begin(), rep_csv.end());
      const auto files = report::write_report(paths, rep_out);
      std::cout << files.markdown.string() << '\n';
      for (const auto& s : files.svgs) std::cout << s.string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
