#include <doctest.h>

#include "support.hpp"
#include "winseg/pipeline.hpp"

#include <fstream>

using namespace winseg;
namespace fs = std::filesystem;

// Frozen end-to-end regression: one-shot, reference memory alone, reference
// encoder, toy dataset. The recorded value is floored to three decimals.
TEST_CASE("one-shot segmentation on the toy dataset does not regress") {
  const fs::path root = winseg::testing::scratch_dir("e2e");
  winseg::testing::write_toy_dataset(root);
  const DatasetManifest manifest = load_manifest(root, DatasetLayout::MVTec);

  RunConfig cfg;
  cfg.shots = {1};
  cfg.seeds = {0};
  cfg.use_language = false;
  const auto reports = run_eval(manifest, winseg::testing::reference_encoder(), cfg);
  const double pixel_auroc = reports.at(0).report.table.at("toy_part").at("pixel_auroc").mean;
  MESSAGE("pixel AUROC " << pixel_auroc);

  std::ifstream in(fs::path(WINSEG_TEST_DATA) / "e2e_baseline.json");
  REQUIRE(in);
  const auto baseline = nlohmann::json::parse(in);
  CHECK(pixel_auroc >= baseline.at("pixel_auroc").get<double>());
  CHECK(pixel_auroc >= 0.7);
  fs::remove_all(root);
}
