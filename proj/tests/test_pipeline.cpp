#include <doctest.h>

#include "support.hpp"
#include "winseg/pipeline.hpp"

using namespace winseg;
namespace fs = std::filesystem;
using winseg::testing::random_image;
using winseg::testing::reference_encoder;

TEST_CASE("scale lists") {
  const ScaleSet all = parse_scales("2,3,img");
  CHECK(all.use_small);
  CHECK(all.use_mid);
  CHECK(all.use_image);
  CHECK(all.small_kernel == 2);
  CHECK(all.mid_kernel == 3);
  const ScaleSet swapped = parse_scales("4,2");
  CHECK(swapped.small_kernel == 2);
  CHECK(swapped.mid_kernel == 4);
  CHECK_FALSE(swapped.use_image);
  const ScaleSet one = parse_scales("3");
  CHECK(one.use_small);
  CHECK(one.small_kernel == 3);
  CHECK_FALSE(one.use_mid);
  const ScaleSet image = parse_scales("image");
  CHECK(image.use_image);
  CHECK_FALSE(image.use_small);
  for (const char* bad : {"", "2,3,4", "x", "0", "2,,3", "2.5"}) CHECK_THROWS_AS(parse_scales(bad), ConfigError);
  for (const char* text : {"2,3,img", "2,3", "3", "img", "2,img"}) CHECK(format_scales(parse_scales(text)) == text);
}

TEST_CASE("run configuration") {
  const EncoderConfig& enc = reference_encoder().config();
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate(enc));
  const auto j = cfg.to_json();
  CHECK(j["scales"] == "2,3,img");
  CHECK(j["tau"] == 0.01);
  CHECK(j["fusion_weight"] == 0.5);
  CHECK(j["shots"] == nlohmann::json::array({0, 1, 2, 4}));
  CHECK(j["seeds"] == nlohmann::json::array({0, 1, 2, 3, 4}));

  cfg.scales = parse_scales("3");
  cfg.use_language = false;
  cfg.fusion_weight = 0.25;
  const FewShotConfig fs = cfg.few_shot();
  CHECK(fs.use_patch);
  CHECK(fs.use_small);
  CHECK_FALSE(fs.use_mid);
  CHECK_FALSE(fs.use_language);
  CHECK(fs.fusion_weight == 0.25);

  auto broken = [&](auto mutate) {
    RunConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(enc), Error);
  };
  broken([](RunConfig& c) { c.temperature = 0.0; });
  broken([](RunConfig& c) { c.fusion_weight = 1.5; });
  broken([](RunConfig& c) { c.shots = {}; });
  broken([](RunConfig& c) { c.shots = {-1}; });
  broken([](RunConfig& c) { c.seeds = {}; });
  broken([](RunConfig& c) { c.jobs = 0; });
  broken([](RunConfig& c) { c.scales.mid_kernel = 16; });
}

TEST_CASE("prompt overrides") {
  RunConfig cfg;
  CHECK(run_prompts(cfg, "metal nut").normal[0].find("metal nut") != std::string::npos);
  cfg.object = "gadget";
  const PromptSets p = run_prompts(cfg, "metal nut");
  CHECK(p.normal[0].find("gadget") != std::string::npos);
  CHECK(p.normal.size() == 154);
  CHECK(p.anomaly.size() == 88);
  cfg.object.clear();
  CHECK(run_prompts(cfg, "").normal[0].find("object") != std::string::npos);
}

TEST_CASE("tiling predictions keep the preprocessed size") {
  const auto& enc = reference_encoder();
  const RunConfig cfg;
  const ClassPrototypes protos = run_prototypes(cfg, enc, "widget");
  std::mt19937_64 rng(91);
  const ImageTensor square = random_image(rng, 240, 240);
  const MergedPrediction sq = predict_zero_shot(enc, square, protos, cfg.scales);
  const ZeroShotMaps maps = multiscale_zero_shot_map(enc, square, protos, cfg.scales);
  CHECK((sq.map - upsample_map(maps.combined, 240, 240)).abs().maxCoeff() < 1e-12);
  CHECK(sq.score == doctest::Approx(maps.image_score));

  const ImageTensor wide = random_image(rng, 240, 360);
  const TiledImage tiles = tile_image(wide, 240);
  REQUIRE(tiles.tiles.size() == 2);
  CHECK((tiles.tiles[1].planes[0] == wide.planes[0].block(0, 120, 240, 240)).all());
  const MergedPrediction w = predict_zero_shot(enc, wide, protos, cfg.scales);
  CHECK(w.map.rows() == 240);
  CHECK(w.map.cols() == 360);
  CHECK(w.map.minCoeff() >= 0.0);
  CHECK(w.map.maxCoeff() <= 1.0);
  const MergedPrediction left = predict_zero_shot(enc, tiles.tiles[0], protos, cfg.scales);
  CHECK((w.map.leftCols(120) - left.map.leftCols(120)).abs().maxCoeff() < 1e-12);

  const std::vector<ImageTensor> refs{random_image(rng, 240, 240)};
  const ReferenceMemory mem = build_memory_from_images(refs, enc, cfg.scales);
  CHECK(mem.shots == 1);
  const MergedPrediction f = predict_few_shot(enc, square, mem, protos, cfg.scales, cfg.few_shot());
  const FusedScores direct = score_plus(enc, square, mem, protos, cfg.scales, cfg.few_shot());
  CHECK((f.map - direct.segmentation).abs().maxCoeff() < 1e-12);
  CHECK(f.score == doctest::Approx(direct.score));

  const std::vector<ImageTensor> wide_refs{wide};
  const ReferenceMemory two_tiles = build_memory_from_images(wide_refs, enc, cfg.scales);
  CHECK(two_tiles.shots == 1);
  CHECK(two_tiles.patch_bank.rows() == 2 * 225);
}

TEST_CASE("evaluation protocol on a toy dataset") {
  const fs::path root = winseg::testing::scratch_dir("pipeline_eval");
  winseg::testing::ToyDatasetSpec spec;
  spec.train_normals = 3;
  spec.test_normals = 3;
  spec.test_defects = 3;
  winseg::testing::write_toy_dataset(root, spec);
  const DatasetManifest manifest = load_manifest(root, DatasetLayout::MVTec);
  const auto& enc = reference_encoder();

  RunConfig cfg;
  cfg.shots = {0, 1};
  cfg.seeds = {0, 1, 2};
  const auto serial = run_eval(manifest, enc, cfg);
  cfg.jobs = 4;
  const auto parallel = run_eval(manifest, enc, cfg);
  REQUIRE(serial.size() == 2);
  CHECK(serial[0].shots == 0);
  CHECK(serial[1].shots == 1);

  const EvalReport& zero = serial[0].report;
  CHECK(zero.categories == std::vector<std::string>{"toy_part", "Mean"});
  for (const char* m : kMetricNames) {
    const MetricSummary& s = zero.table.at("toy_part").at(m);
    CHECK(s.std == 0.0);
    CHECK(s.per_seed.size() == 3);
    CHECK(s.mean >= 0.0);
    CHECK(s.mean <= 1.0);
    CHECK(zero.table.at("Mean").at(m).mean == s.mean);
  }
  CHECK(serial[0].reference_hashes.empty());
  REQUIRE(serial[1].reference_hashes.at("toy_part").size() == 3);
  CHECK(serial[1].reference_hashes.at("toy_part").at(0) ==
        hash_ids(sample_references(manifest, "toy_part", 1, 0)));

  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(shot_report_json(serial[s], cfg, enc).dump() != "");
    CHECK(serial[s].report.to_json() == parallel[s].report.to_json());
  }
  const auto j = shot_report_json(serial[1], cfg, enc);
  CHECK(j.contains("Mean"));
  CHECK(j["_run"]["shots"] == 1);
  CHECK(j["_run"]["encoder"] == enc.fingerprint());
  CHECK(j["_run"]["references"]["toy_part"].size() == 3);
  CHECK(j["_run"]["config"]["jobs"] == 4);

  cfg.categories = {"missing"};
  CHECK_THROWS_AS(run_eval(manifest, enc, cfg), ManifestError);
  fs::remove_all(root);
}

TEST_CASE("bench rows") {
  const auto& enc = reference_encoder();
  const RunConfig cfg;
  std::mt19937_64 rng(92);
  const auto rows = run_bench(enc, random_image(rng, 240, 240), run_prototypes(cfg, enc, "widget"), cfg.scales, 1);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "patch-token");
  CHECK(rows[1].name == "winclip");
  CHECK(rows[1].tokens == 980 + 1690 + 226);
  CHECK(rows[3].name == "image-tiling");
  CHECK(rows[3].tokens == (196 + 169 + 1) * 226);
  CHECK_THROWS_AS(run_bench(enc, random_image(rng, 240, 240), run_prototypes(cfg, enc, "w"), cfg.scales, 0),
                  ContractError);
}
