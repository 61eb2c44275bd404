#include <doctest.h>

#include <fstream>
#include <iterator>

#include "peri/config.hpp"
#include "peri/error.hpp"
#include "peri/evaluation.hpp"
#include "peri/harness.hpp"
#include "peri/log.hpp"
#include "peri/morphology.hpp"
#include "peri/nifti.hpp"
#include "peri/phantom.hpp"
#include "peri/report.hpp"
#include "support.hpp"

using namespace peri;
using namespace peri::harness;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

// A 20-case cohort shared by the slower tests.
struct Cohort {
  test::TempDir dir{"harness_cohort"};
  phantom::PhantomSpec spec;
  std::vector<CaseRecord> cases;
  Cohort() {
    log::set_level(log::Level::Quiet);
    spec.n_cases = 20;
    spec.malignant_fraction = 0.5;
    cases = phantom::generate_cohort(spec, dir.path());
  }
  ExperimentConfig config(const std::string& out) const {
    ExperimentConfig c;
    c.manifest = dir / "manifest.csv";
    c.output_dir = dir / out;
    c.seed = 7;
    c.bootstrap_n = 200;
    c.models.forest.n_trees = 25;
    c.models.knn_k = 3;
    return c;
  }
};

Cohort& cohort() {
  static Cohort c;
  return c;
}

}  // namespace

TEST_CASE("config round trip and validation") {
  ExperimentConfig c;
  c.seed = 99;
  c.radii_mm = {0, 3, 6};
  c.sweep_method = seg::Method::FCM;
  c.models.forest.n_trees = 17;
  c.segmentation.knn_k = 9;
  const auto doc = to_json(c);
  const auto back = config_from_json(doc);
  CHECK(to_json(back) == doc);
  CHECK(back.radii_mm == c.radii_mm);
  CHECK(back.sweep_method == seg::Method::FCM);
  CHECK(config_hash(back) == config_hash(c));

  ExperimentConfig t = c;
  t.threads = 8;
  t.output_dir = "elsewhere";
  CHECK(config_hash(t) == config_hash(c));
  t.seed = 100;
  CHECK(config_hash(t) != config_hash(c));

  auto unknown = doc;
  unknown["colour"] = "blue";
  CHECK(kind_of([&] { config_from_json(unknown); }) == ErrorKind::ParseError);
  auto no_seed = doc;
  no_seed.erase("seed");
  CHECK_THROWS_AS(config_from_json(no_seed), Error);
  auto version = doc;
  version["version"] = 2;
  CHECK(kind_of([&] { config_from_json(version); }) == ErrorKind::ParseError);

  ExperimentConfig bad;
  bad.radii_mm = {2, 4};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.radii_mm = {0, 4, 4};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.bootstrap_n = 50;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(ExperimentConfig{}.working_margin_mm() == 14.0);

  test::TempDir dir("config");
  save_config(c, dir / "c.json");
  CHECK(to_json(load_config(dir / "c.json")) == doc);
  CHECK(kind_of([&] { load_config(dir / "missing.json"); }) == ErrorKind::MissingFile);

  ExperimentConfig ph;
  ph.seed = 3;
  ph.phantom = {{"n_cases", 50}, {"shell_offset", 80.0}};
  const auto spec = phantom_spec(ph);
  CHECK(spec.seed == 3);
  CHECK(spec.n_cases == 50);
  CHECK(spec.shell_offset == 80.0);
}

TEST_CASE("mask variant names") {
  CHECK(mask_variant(seg::Method::KNN, 8) == "knn_r8");
  CHECK(mask_variant(seg::Method::Otsu, 0) == "otsu_r0");
  CHECK(mask_variant(seg::Method::GMM, 2.5) == "gmm_r2.5");
  CHECK(mask_variant(seg::Method::FCM, 4, true) == "fcm-ring_r4");
}

TEST_CASE("feature table round trip") {
  test::TempDir dir("table");
  std::vector<double> v(39);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + static_cast<double>(i)) - 0.3;
  const std::vector<FeatureRow> rows{{"case_000", 1, Split::Train, "knn_r0", v},
                                     {"case_001", 0, Split::Test, "knn_r2", v}};
  write_feature_table(dir / "f.csv", rows);
  CHECK(read_feature_table(dir / "f.csv") == rows);
  std::ofstream(dir / "bad.csv") << "a,b\n1,2\n";
  CHECK(kind_of([&] { read_feature_table(dir / "bad.csv"); }) == ErrorKind::ParseError);

  ml::Matrix x;
  std::vector<int> y;
  split_matrix(rows, Split::Test, "knn_r2", x, y);
  CHECK(x.rows == 1);
  CHECK(x.cols == 39);
  CHECK(y == std::vector<int>{0});
}

TEST_CASE("split audit refuses test data outside evaluation") {
  SplitAudit ok;
  ok.record("fit", Split::Train, Purpose::Train, 10);
  ok.record("select", Split::Validation, Purpose::Select, 5);
  ok.record("report", Split::Test, Purpose::Evaluate, 3);
  CHECK_NOTHROW(ok.verify());
  SplitAudit leak = ok;
  leak.record("tune", Split::Test, Purpose::Select, 3);
  CHECK(kind_of([&] { leak.verify(); }) == ErrorKind::InvalidArgument);
  SplitAudit train_leak;
  train_leak.record("fit", Split::Test, Purpose::Train, 3);
  CHECK_THROWS_AS(train_leak.verify(), Error);
}

TEST_CASE("feature cache") {
  test::TempDir dir("cache");
  std::vector<double> v(39, 0.25);
  v[0] = 0.1, v[1] = -2.5e-300, v[2] = 1e300, v[38] = 1.0 / 3.0;
  {
    FeatureCache c(dir.path());
    CHECK(!c.get("k1"));
    c.put("k1", v);
    CHECK(c.get("k1") == v);
    CHECK(c.hits() == 1);
  }
  FeatureCache reopened(dir.path());
  CHECK(reopened.get("k1") == v);
  std::ofstream(dir / "short.csv") << "1,2,3\n";
  CHECK(!reopened.get("short"));
  FeatureCache memory_only;
  memory_only.put("x", v);
  CHECK(memory_only.get("x") == v);

  ExperimentConfig c;
  const BoundingBox b{{1, 2, 3}, {4, 5, 6}};
  const auto k = feature_cache_key(42, b, seg::Method::KNN, c, 8);
  CHECK(k == feature_cache_key(42, b, seg::Method::KNN, c, 8));
  CHECK(k != feature_cache_key(43, b, seg::Method::KNN, c, 8));
  CHECK(k != feature_cache_key(42, b, seg::Method::GMM, c, 8));
  CHECK(k != feature_cache_key(42, b, seg::Method::KNN, c, 6));
  c.features.bin_width = 10;
  CHECK(k != feature_cache_key(42, b, seg::Method::KNN, c, 8));
}

TEST_CASE("radius 0 equals the nodule-only route and crops do not matter") {
  phantom::PhantomSpec spec;
  ExperimentConfig config;
  for (int index : {0, 1, 2}) {
    const auto pc = phantom::make_case(spec, index, index % 2);
    for (auto m : seg::kAllMethods) {
      const auto full = case_features(pc.image, pc.bbox, m, config.radii_mm, config);
      REQUIRE(full.size() == 7);
      CHECK(full[0] == nodule_features(pc.image, pc.bbox, m, config));

      const Region r = expand_region(pc.image.dims(), pc.image.spacing(), pc.bbox, config.working_margin_mm());
      const auto cropped =
          case_features(extract_region(pc.image, r), to_region_frame(pc.bbox, r), m, config.radii_mm, config);
      for (std::size_t i = 0; i < full.size(); ++i) CHECK(cropped[i] == full[i]);
      // dilation grows the region monotonically
      for (std::size_t i = 1; i < full.size(); ++i)
        CHECK(full[i].value("shape.volume_mm3") > full[i - 1].value("shape.volume_mm3"));
    }
  }
}

TEST_CASE("ring-only regions exclude the nodule") {
  phantom::PhantomSpec spec;
  const auto pc = phantom::make_case(spec, 4, 1);
  ExperimentConfig config;
  config.ring_only = true;
  const auto rings = case_features(pc.image, pc.bbox, seg::Method::Otsu, {0, 4}, config);
  const auto seg_mask = seg::segment(pc.image, pc.bbox, seg::Method::Otsu).mask;
  const auto shell = morph::shell_mm(seg_mask, 0, 4);
  CHECK(rings[0].value("shape.volume_mm3") == static_cast<double>(seg_mask.count()));
  CHECK(rings[1].value("shape.volume_mm3") == static_cast<double>(shell.count()));
  CHECK(rings[1] == rad::extract(pc.image, shell));
}

TEST_CASE("cohort features: thread independence, failures and missing files") {
  auto& co = cohort();
  ExperimentConfig c1 = co.config("cf1");
  c1.threads = 1;
  ExperimentConfig c3 = co.config("cf3");
  c3.threads = 3;
  const std::vector<double> radii{0, 4};
  const auto a = cohort_features(c1, seg::Method::GMM, radii);
  const auto b = cohort_features(c3, seg::Method::GMM, radii);
  CHECK(a.values == b.values);
  CHECK(a.failures.empty());
  for (std::size_t i = 1; i < a.cases.size(); ++i) CHECK(a.cases[i - 1].case_id < a.cases[i].case_id);

  FeatureCache cache;
  const auto first = cohort_features(c1, seg::Method::GMM, radii, &cache);
  const auto second = cohort_features(c1, seg::Method::GMM, radii, &cache);
  CHECK(cache.hits() == 2 * co.cases.size());
  CHECK(second.values == first.values);
  CHECK(first.values == a.values);

  // a flat image cannot be segmented: the case is recorded and excluded
  test::TempDir dir("cohort_fail");
  auto records = co.cases;
  for (auto& r : records) r.image_path = std::filesystem::absolute(co.dir / r.image_path);
  const Volume3D flat(co.spec.dims, co.spec.spacing, std::vector<float>(co.spec.dims.count(), -1000.0f));
  nifti::write(flat, dir / "flat.nii", NiftiDatatype::Int16);
  records[3].image_path = dir / "flat.nii";
  write_manifest(records, dir / "manifest.csv");
  ExperimentConfig cf = c1;
  cf.manifest = dir / "manifest.csv";
  const auto with_failure = cohort_features(cf, seg::Method::Otsu, {0});
  REQUIRE(with_failure.failures.size() == 1);
  CHECK(with_failure.failures[0].case_id == records[3].case_id);
  CHECK(with_failure.values[3].empty());
  CHECK(!with_failure.values[2].empty());

  records[5].image_path = dir / "gone.nii";
  write_manifest(records, dir / "manifest.csv");
  try {
    cohort_features(cf, seg::Method::Otsu, {0});
    FAIL("expected MissingFile");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingFile);
    CHECK(std::string(e.what()).find(records[5].case_id) != std::string::npos);
  }
}

TEST_CASE("grid: twelve cells, byte-deterministic, no test split access") {
  auto& co = cohort();
  ExperimentConfig ca = co.config("grid_a");
  ExperimentConfig cb = co.config("grid_b");
  cb.threads = 2;
  cb.use_cache = false;
  const auto ga = run_grid(ca);
  const auto gb = run_grid(cb);
  REQUIRE(ga.cells.size() == 12);
  for (const auto& cell : ga.cells) {
    CHECK(cell.split == "validation");
    CHECK(cell.result.auc >= 0.0);
    CHECK(cell.result.auc <= 1.0);
  }
  CHECK(ga.cells == gb.cells);
  for (const char* f : {"grid.csv", "grid_features.csv", "grid_audit.csv", "grid_failures.csv"})
    CHECK(slurp(ca.output_dir / f) == slurp(cb.output_dir / f));
  CHECK(std::filesystem::exists(ca.output_dir / "grid_provenance.json"));
  CHECK_NOTHROW(ga.audit.verify());
  for (const auto& e : ga.audit.entries()) CHECK(e.split != Split::Test);

  // first maximal cell in method-major order
  double best = -1;
  std::size_t at = 0;
  for (std::size_t i = 0; i < ga.cells.size(); ++i)
    if (ga.cells[i].result.auc > best) best = ga.cells[i].result.auc, at = i;
  CHECK(ga.best_method == seg::kAllMethods[at / 3]);
  CHECK(ga.best_classifier == ml::kAllClassifiers[at % 3]);

  // rerun with a warm cache reproduces the bytes
  run_grid(ca);
  CHECK(slurp(ca.output_dir / "grid.csv") == slurp(cb.output_dir / "grid.csv"));

  // a 200-tree forest separates its own training rows
  ml::Matrix x;
  std::vector<int> y;
  split_matrix(ga.features, Split::Train, "knn_r0", x, y);
  const auto forest = ml::train_pipeline(ml::ClassifierKind::RandomForest, x, y, {}, ml::ModelParams{}, 5);
  CHECK(eval::auc(forest.predict(x), y) >= 0.9);
}

TEST_CASE("sweep rows, radius-0 identity and determinism") {
  auto& co = cohort();
  ExperimentConfig c = co.config("sweep_a");
  const auto grid = run_grid(c);
  const auto s = run_expansion_sweep(c, seg::Method::KNN, ml::ClassifierKind::Logistic);
  REQUIRE(s.rows.size() == 14);
  for (std::size_t i = 0; i < s.rows.size(); i += 2) {
    CHECK(s.rows[i].split == "train");
    CHECK(s.rows[i + 1].split == "test");
    CHECK(s.rows[i].mask_variant == s.rows[i + 1].mask_variant);
  }
  CHECK(s.rows.front().mask_variant == "knn_r0");
  CHECK(s.rows.back().mask_variant == "knn_r12");
  CHECK_NOTHROW(s.auc(Split::Test, 8));
  CHECK_THROWS_AS(s.auc(Split::Validation, 8), Error);
  CHECK(!s.importance.empty());

  // radius-0 feature rows equal the grid's nodule-only rows for the same method
  std::vector<FeatureRow> grid_knn, sweep_r0;
  for (const auto& r : grid.features)
    if (r.mask_variant == "knn_r0") grid_knn.push_back(r);
  for (const auto& r : s.features)
    if (r.mask_variant == "knn_r0") sweep_r0.push_back(r);
  CHECK(grid_knn == sweep_r0);

  CHECK_NOTHROW(s.audit.verify());
  bool test_evaluated = false;
  for (const auto& e : s.audit.entries()) {
    if (e.split == Split::Test) CHECK(e.purpose == Purpose::Evaluate);
    test_evaluated |= e.split == Split::Test;
  }
  CHECK(test_evaluated);

  ExperimentConfig c2 = co.config("sweep_b");
  c2.threads = 3;
  c2.use_cache = false;
  run_expansion_sweep(c2, seg::Method::KNN, ml::ClassifierKind::Logistic);
  for (const char* f : {"sweep.csv", "sweep_features.csv", "sweep_importance.csv", "sweep_audit.csv"})
    CHECK(slurp(c.output_dir / f) == slurp(c2.output_dir / f));

  const auto knn = run_expansion_sweep(c2, seg::Method::Otsu, ml::ClassifierKind::Knn);
  CHECK(knn.importance.empty());

  ExperimentConfig ring = co.config("sweep_ring");
  ring.ring_only = true;
  ring.radii_mm = {0, 4};
  const auto rs = run_expansion_sweep(ring, seg::Method::KNN, ml::ClassifierKind::Logistic);
  CHECK(rs.rows.back().mask_variant == "knn-ring_r4");

  CHECK(sweep_choice(c, &grid) == std::pair{grid.best_method, grid.best_classifier});
  ExperimentConfig fixed = c;
  fixed.sweep_method = seg::Method::FCM;
  fixed.sweep_classifier = ml::ClassifierKind::Knn;
  CHECK(sweep_choice(fixed, &grid) == std::pair{seg::Method::FCM, ml::ClassifierKind::Knn});
}

TEST_CASE("report: structure, determinism, errors") {
  std::vector<eval::EvalRow> rows;
  for (double r : {0, 2, 4, 6, 8, 10, 12})
    for (const char* split : {"train", "test"}) {
      eval::EvalRow row{"logistic_regression", mask_variant(seg::Method::KNN, r), split, {}};
      row.result.auc = 0.6 + r / 40.0;
      row.result.ci_low = row.result.auc - 0.05;
      row.result.ci_high = std::min(1.0, row.result.auc + 0.05);
      row.result.n_boot = 2000;
      rows.push_back(row);
    }
  const std::string svg = report::sweep_svg(rows);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(occurrences(svg, "class=\"xtick\"") == 7);
  CHECK(occurrences(svg, "class=\"whisker\"") == 14);
  CHECK(occurrences(svg, "class=\"series\"") == 2);
  CHECK(report::sweep_svg(rows) == svg);

  std::vector<eval::EvalRow> grid;
  for (auto m : seg::kAllMethods)
    for (auto k : ml::kAllClassifiers) {
      eval::EvalRow row{std::string(ml::to_string(k)), mask_variant(m, 0), "validation", {}};
      row.result.auc = 0.7;
      grid.push_back(row);
    }
  CHECK(occurrences(report::grid_svg(grid), "class=\"cell\"") == 12);

  test::TempDir dir("report");
  eval::write_eval_csv(dir / "sweep.csv", rows);
  eval::write_eval_csv(dir / "grid.csv", grid);
  const auto files = report::write_report({dir / "sweep.csv", dir / "grid.csv"}, dir / "out");
  CHECK(std::filesystem::exists(files.markdown));
  CHECK(files.svgs.size() == 2);
  const std::string md = slurp(files.markdown);
  report::write_report({dir / "sweep.csv", dir / "grid.csv"}, dir / "out2");
  CHECK(slurp(dir / "out2" / "report.md") == md);
  CHECK(slurp(dir / "out2" / "sweep.svg") == slurp(dir / "out" / "sweep.svg"));

  std::ofstream(dir / "empty.csv").close();
  CHECK(kind_of([&] { report::write_report({dir / "empty.csv"}, dir / "out3"); }) == ErrorKind::ParseError);
  CHECK_THROWS_AS(report::write_report({}, dir / "out4"), Error);
}
