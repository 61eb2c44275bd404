#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sys/wait.h>

#include "peri/csv.hpp"
#include "peri/evaluation.hpp"
#include "peri/harness.hpp"
#include "peri/manifest.hpp"
#include "peri/nifti.hpp"
#include "support.hpp"

using namespace peri;

namespace {

struct Run {
  int code;
  std::string err;
  std::string out;
};

// Runs the command line tool inside `dir`, capturing stdout and stderr.
Run cli(const std::filesystem::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + std::string(PERI_CLI_PATH) + "' " + args +
                          " >stdout.txt 2>stderr.txt";
  const int status = std::system(cmd.c_str());
  auto slurp = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp("stderr.txt"), slurp("stdout.txt")};
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  test::TempDir dir("cli_usage");
  auto r = cli(dir.path(), "grid --no-such-flag");
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(cli(dir.path(), "").code == 1);
  CHECK(cli(dir.path(), "frobnicate").code == 1);
  CHECK(cli(dir.path(), "grid --manifest m.csv").code == 1);  // no seed anywhere
  CHECK(cli(dir.path(), "segment --image a.nii --bbox 1,2,3 --out m.nii").code == 1);
  CHECK(cli(dir.path(), "--help").code == 0);
}

TEST_CASE("end-to-end commands on a small phantom") {
  test::TempDir dir("cli_e2e");
  const auto& d = dir.path();
  REQUIRE(cli(d, "phantom --seed 7 --n-cases 20 --out cohort --quiet").code == 0);
  REQUIRE(std::filesystem::exists(d / "cohort" / "manifest.csv"));
  const auto cases = read_manifest(d / "cohort" / "manifest.csv");
  REQUIRE(cases.size() == 20);

  SUBCASE("segment, dilate, extract, train, eval") {
    REQUIRE(cli(d, "segment --manifest cohort/manifest.csv --case case_000 --method knn --out seg.nii").code == 0);
    const auto seg_mask = nifti::read_mask(d / "seg.nii");
    CHECK(seg_mask.count() > 0);
    const auto& c0 = cases[0];
    const std::string box = std::to_string(c0.bbox.min.x) + "," + std::to_string(c0.bbox.min.y) + "," +
                            std::to_string(c0.bbox.min.z) + "," + std::to_string(c0.bbox.max.x) + "," +
                            std::to_string(c0.bbox.max.y) + "," + std::to_string(c0.bbox.max.z);
    REQUIRE(cli(d, "segment --image cohort/" + c0.image_path + " --bbox " + box +
                       " --method knn --out seg2.nii")
                .code == 0);
    CHECK(nifti::read_mask(d / "seg2.nii") == seg_mask);

    REQUIRE(cli(d, "dilate --mask seg.nii --radius-mm 4 --out grown.nii").code == 0);
    CHECK(nifti::read_mask(d / "grown.nii").count() > seg_mask.count());

    REQUIRE(cli(d, "extract --image cohort/" + c0.image_path +
                       " --mask grown.nii --case-id case_000 --label 1 --split test --variant knn_r4 --out one.csv")
                .code == 0);
    const auto one = harness::read_feature_table(d / "one.csv");
    REQUIRE(one.size() == 1);
    CHECK(one[0].mask_variant == "knn_r4");

    REQUIRE(cli(d, "extract --seed 7 --manifest cohort/manifest.csv --method knn --radius-mm 0 4 --out feats.csv")
                .code == 0);
    const auto table = harness::read_feature_table(d / "feats.csv");
    CHECK(table.size() == 40);

    REQUIRE(cli(d, "train --seed 7 --features feats.csv --variant knn_r4 --classifier logreg --out model.json").code ==
            0);
    REQUIRE(cli(d, "eval --seed 7 --model model.json --features feats.csv --variant knn_r4 --split test --out e.csv")
                .code == 0);
    const auto rows = eval::read_eval_csv(d / "e.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].result.auc >= 0.0);
    CHECK(rows[0].result.auc <= 1.0);
    const auto printed = cli(d, "eval --seed 7 --model model.json --features feats.csv --variant knn_r4");
    CHECK(printed.code == 0);
    CHECK(printed.out.rfind(eval::eval_csv_header(), 0) == 0);

    // a NaN feature value turns into a NaN score
    std::ifstream in(d / "feats.csv");
    std::string all((std::istreambuf_iterator<char>(in)), {});
    const auto field = all.find(',', all.find(",train,knn_r4,") + 1 + std::string("train,knn_r4").size());
    all.replace(field + 1, all.find(',', field + 1) - field - 1, "nan");
    std::ofstream(d / "bad_feats.csv") << all;
    CHECK(cli(d, "eval --seed 7 --model model.json --features bad_feats.csv --variant knn_r4 --split train").code == 3);
  }

  SUBCASE("grid, sweep and report through a config file") {
    std::ofstream(d / "c.json") << R"({"version": 1, "seed": 7, "manifest": "cohort/manifest.csv",
      "output_dir": "out", "bootstrap_n": 200, "radii_mm": [0, 4, 8],
      "models": {"forest": {"n_trees": 20}, "knn_k": 3}})";
    REQUIRE(cli(d, "grid --config c.json --quiet").code == 0);
    CHECK(std::filesystem::exists(d / "out" / "grid.csv"));
    CHECK(eval::read_eval_csv(d / "out" / "grid.csv").size() == 12);
    REQUIRE(cli(d, "sweep --config c.json --method knn --classifier logreg --quiet").code == 0);
    CHECK(eval::read_eval_csv(d / "out" / "sweep.csv").size() == 6);
    REQUIRE(cli(d, "report --csv out/grid.csv out/sweep.csv --out rep").code == 0);
    CHECK(std::filesystem::exists(d / "rep" / "report.md"));
    CHECK(std::filesystem::exists(d / "rep" / "sweep.svg"));
    CHECK(std::filesystem::exists(d / "rep" / "grid.svg"));

    std::ofstream(d / "bad.json") << R"({"version": 1, "seed": 7, "colour": "red"})";
    CHECK(cli(d, "grid --config bad.json").code == 2);
    std::ofstream(d / "empty.csv").close();
    CHECK(cli(d, "report --csv empty.csv --out rep2").code == 2);
  }

  SUBCASE("missing image names the case") {
    std::filesystem::remove(d / "cohort" / cases[3].image_path);
    const auto r = cli(d, "grid --seed 7 --manifest cohort/manifest.csv --out out2 --bootstrap-n 100");
    CHECK(r.code == 2);
    CHECK(r.err.find(cases[3].case_id) != std::string::npos);
  }
}
