#include <doctest.h>

#include "cli.hpp"
#include "support.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace winseg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

int count_lines(const std::string& s, const std::string& prefix) {
  std::istringstream in(s);
  int n = 0;
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0;
  return n;
}

}  // namespace

TEST_CASE("prompts command") {
  const Result r = run_cli({"prompts", "--object", "bottle"});
  CHECK(r.code == 0);
  CHECK(count_lines(r.out, "normal\t") == 154);
  CHECK(count_lines(r.out, "anomaly\t") == 88);
  CHECK(r.out.find("bottle") != std::string::npos);
}

TEST_CASE("score command writes a heatmap at the input size") {
  const fs::path dir = winseg::testing::scratch_dir("cli_score");
  std::mt19937_64 rng(101);
  RgbImage img = winseg::testing::texture_image(rng, 300);
  RgbImage wide{300, 200, {}};
  for (int r = 0; r < 300; ++r)
    for (int c = 0; c < 200; ++c)
      for (int ch = 0; ch < 3; ++ch) wide.pixels.push_back(img.at(r, c, ch));
  write_png_rgb(dir / "q.png", wide);

  const Result r = run_cli({"score", "--image", (dir / "q.png").string(), "--heatmap", (dir / "h.png").string(),
                            "--model", "reference:1", "--object", "widget"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["score"].get<double>() >= 0.0);
  CHECK(j["score"].get<double>() <= 1.0);
  CHECK(j["_run"]["config"]["model"] == "reference:1");
  const auto heat = read_png_gray16(dir / "h.png");
  CHECK(heat.rows() == 300);
  CHECK(heat.cols() == 200);

  const Result again = run_cli({"score", "--image", (dir / "q.png").string(), "--model", "reference:1", "--object",
                                "widget"});
  CHECK(nlohmann::json::parse(again.out)["score"] == j["score"]);
  fs::remove_all(dir);
}

TEST_CASE("errors and exit codes") {
  const Result usage = run_cli({"score"});
  CHECK(usage.code == 2);
  const auto e = nlohmann::json::parse(usage.err);
  CHECK(e["exit_code"] == 2);
  CHECK(e.contains("message"));

  CHECK(run_cli({"score", "--image", "x.png", "--scales", "2,3,4"}).code == 2);
  CHECK(run_cli({"score", "--image", "x.png", "--tau", "0"}).code == 2);
  CHECK(run_cli({"eval", "--root", "r", "--out", "o", "--seeds", "a-b"}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);

  const Result missing = run_cli({"score", "--image", "/nonexistent/q.png", "--model", "reference:0"});
  CHECK(missing.code == 1);
  CHECK(nlohmann::json::parse(missing.err)["exit_code"] == 1);
  CHECK(run_cli({"score", "--image", "q.png", "--model", "/nonexistent/model"}).code == 1);
  CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("model directory comes from the environment") {
  const fs::path dir = winseg::testing::scratch_dir("cli_env");
  std::mt19937_64 rng(102);
  write_png_rgb(dir / "q.png", winseg::testing::texture_image(rng, 240));
  ::setenv("WINSEG_MODEL_DIR", "reference:5", 1);
  const Result env = run_cli({"score", "--image", (dir / "q.png").string()});
  ::unsetenv("WINSEG_MODEL_DIR");
  REQUIRE(env.code == 0);
  CHECK(nlohmann::json::parse(env.out)["_run"]["config"]["model"] == "reference:5");
  const Result def = run_cli({"score", "--image", (dir / "q.png").string()});
  CHECK(nlohmann::json::parse(def.out)["_run"]["config"]["model"] == "reference:0");
  fs::remove_all(dir);
}

TEST_CASE("fewshot and eval commands") {
  const fs::path dir = winseg::testing::scratch_dir("cli_eval");
  winseg::testing::ToyDatasetSpec spec;
  spec.train_normals = 2;
  spec.test_normals = 2;
  spec.test_defects = 2;
  winseg::testing::write_toy_dataset(dir / "data", spec);
  const std::string query = (dir / "data" / "toy_part" / "test" / "square" / "000.png").string();

  const Result sampled = run_cli({"fewshot", "--image", query, "--root", (dir / "data").string(), "--category",
                                  "toy_part", "--k", "1", "--seeds", "3", "--save-memory",
                                  (dir / "mem.wctf").string(), "--heatmap-dir", (dir / "heat").string()});
  REQUIRE(sampled.code == 0);
  const auto s = nlohmann::json::parse(sampled.out);
  CHECK(s["memory"]["shots"] == 1);
  CHECK(s["memory"]["seed"] == 3);
  CHECK(s["memory"]["image_ids"].size() == 1);
  CHECK(fs::exists(dir / "heat" / "000_heatmap.png"));

  const Result loaded = run_cli({"fewshot", "--image", query, "--memory", (dir / "mem.wctf").string(), "--object",
                                 "toy part"});
  REQUIRE(loaded.code == 0);
  CHECK(nlohmann::json::parse(loaded.out)["results"][0]["score"] == s["results"][0]["score"]);
  CHECK(run_cli({"fewshot", "--image", query}).code == 2);

  const Result eval = run_cli({"eval", "--root", (dir / "data").string(), "--out", (dir / "out").string(), "--shots",
                               "0,1", "--seeds", "0-1", "--jobs", "2"});
  REQUIRE(eval.code == 0);
  for (const char* name : {"eval_shot0.json", "eval_shot0.csv", "eval_shot1.json", "eval_shot1.csv"})
    CHECK(fs::exists(dir / "out" / name));
  std::ifstream in(dir / "out" / "eval_shot1.json");
  const auto report = nlohmann::json::parse(in);
  CHECK(report["toy_part"]["pixel_auroc"]["per_seed"].size() == 2);
  CHECK(report["_run"]["config"]["seeds"] == nlohmann::json::array({0, 1}));
  CHECK(report["_run"]["references"]["toy_part"].contains("1"));
  fs::remove_all(dir);
}

TEST_CASE("bench command") {
  const fs::path dir = winseg::testing::scratch_dir("cli_bench");
  const Result r = run_cli({"bench", "--repeats", "1", "--out", (dir / "bench.json").string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["rows"].size() == 4);
  CHECK(j["tiling_over_winclip"].get<double>() >= 2.0);
  CHECK(fs::exists(dir / "bench.json"));
  fs::remove_all(dir);
}
