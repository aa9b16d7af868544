#include <doctest.h>

#include "oracles.hpp"
#include "support.hpp"
#include "winseg/metrics.hpp"

#include <numeric>
#include <set>

using namespace winseg;
using namespace winseg::testing;
using winseg::testing::uniform;
using winseg::testing::uniform_int;

namespace {

LabeledScores make(std::vector<double> scores, std::vector<std::uint8_t> labels) {
  return {std::move(scores), std::move(labels)};
}

}  // namespace

TEST_CASE("AUROC examples") {
  CHECK(auroc(make({0.2, 0.8}, {0, 1})) == 1.0);
  CHECK(auroc(make({0.5, 0.5, 0.5}, {0, 1, 1})) == 0.5);
  CHECK(auroc(make({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0})) == 0.75);
  CHECK_THROWS_AS(auroc(make({0.1, 0.2}, {1, 1})), DegenerateInputError);
  CHECK_THROWS_AS(auroc(make({0.1}, {1, 0})), ContractError);
  CHECK_THROWS_AS(auroc(make({NAN, 0.2}, {1, 0})), ContractError);
}

TEST_CASE("AUPR examples") {
  CHECK(aupr(make({0.1, 0.9}, {0, 1})) == 1.0);
  CHECK(aupr(make({0.3, 0.9}, {1, 0})) == 0.5);
  CHECK(aupr(make({0.3, 0.9, 0.4}, {1, 1, 1})) == 1.0);
  CHECK_THROWS_AS(aupr(make({0.3, 0.9}, {0, 0})), DegenerateInputError);
}

TEST_CASE("F1-max examples") {
  const F1Max f = f1_max(make({0.9, 0.8, 0.7}, {1, 0, 1}));
  CHECK(f.score == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(f.threshold == 0.7);
  CHECK(f1_max(make({0.1, 0.9}, {0, 1})).score == 1.0);
  const F1Max top = f1_max(make({0.95, 0.2, 0.3}, {1, 0, 0}));
  CHECK(top.score == 1.0);
  CHECK(top.threshold == 0.95);
  // Thresholds 0.9 and 0.6 both reach F1 = 2/3; the smaller one is reported.
  const F1Max tie = f1_max(make({0.9, 0.8, 0.7, 0.6}, {1, 0, 0, 1}));
  CHECK(tie.score == doctest::Approx(2.0 / 3.0));
  CHECK(tie.threshold == 0.6);
  CHECK_THROWS_AS(f1_max(make({0.3}, {0})), DegenerateInputError);
}

TEST_CASE("image metrics match brute-force oracles on random instances") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const LabeledScores d = random_instance(rng);
    CHECK(std::abs(auroc(d) - auroc_oracle(d)) < 1e-12);
    CHECK(std::abs(aupr(d) - aupr_oracle(d)) < 1e-12);
    const F1Max got = f1_max(d), want = f1_oracle(d);
    CHECK(std::abs(got.score - want.score) < 1e-12);
    CHECK(got.threshold == want.threshold);
  }
}

TEST_CASE("image metrics are rank statistics") {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 100; ++trial) {
    const LabeledScores d = random_instance(rng);
    const LabeledScores t = monotone_transform(d, rng);
    CHECK(auroc(t) == auroc(d));
    CHECK(aupr(t) == aupr(d));
    CHECK(f1_max(t).score == f1_max(d).score);
  }
}

TEST_CASE("AUROC of negated tie-free scores is the complement") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    LabeledScores d = random_instance(rng);
    for (auto& s : d.scores) s = uniform(rng);
    LabeledScores neg = d;
    for (auto& s : neg.scores) s = -s;
    CHECK(std::abs(auroc(d) + auroc(neg) - 1.0) < 1e-12);
  }
}

TEST_CASE("pixel AUROC and F1 pool all pixels") {
  ScoreMap pred(2, 1);
  pred << 0.4, 0.6;
  BinaryMask m(2, 1);
  m << 1, 0;
  const std::vector<SegPair> flip{{pred, m}};
  CHECK(pixel_auroc(flip) == 0.0);
  const std::vector<SegPair> exact{{m.cast<double>(), m}};
  CHECK(pixel_auroc(exact) == 1.0);
  CHECK(pixel_f1_max(exact).score == 1.0);
  const std::vector<SegPair> flat{{ScoreMap::Constant(2, 1, 0.3), m}};
  CHECK(pixel_auroc(flat) == 0.5);
  const std::vector<SegPair> bad{{ScoreMap::Zero(2, 2), m}};
  CHECK_THROWS_AS(pixel_auroc(bad), ContractError);
}

TEST_CASE("region labeling uses 8-connectivity") {
  Map2D<int> labels;
  CHECK(label_regions(mask4({{0, 0}, {1, 1}, {2, 2}}), labels) == 1);
  CHECK(label_regions(mask4({{0, 0}, {0, 2}, {3, 3}}), labels) == 3);
  CHECK(labels(0, 2) == 2);
  CHECK(label_regions(BinaryMask::Zero(4, 4), labels) == 0);
}

TEST_CASE("PRO on hand-built 4x4 instances") {
  const BinaryMask one = mask4({{1, 1}, {1, 2}, {2, 1}, {2, 2}});
  const std::vector<SegPair> perfect{{one.cast<double>(), one}};
  CHECK(pro(perfect) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(pro_oracle(perfect, 0.3, 200) - 1.0) < 1e-9);

  // Constant prediction: the curve jumps straight from (0,0) to (1,1).
  const std::vector<SegPair> flat{{ScoreMap::Constant(4, 4, 0.5), one}};
  CHECK(std::abs(pro(flat) - 0.15) < 1e-9);
  CHECK(std::abs(pro_oracle(flat, 0.3, 200) - 0.15) < 1e-9);

  // Region A always hit before any false positive; region B only at the lowest threshold.
  const BinaryMask two = mask4({{0, 0}, {0, 1}, {3, 2}, {3, 3}});
  ScoreMap s = ScoreMap::Constant(4, 4, 0.5);
  s(0, 0) = s(0, 1) = 1.0;
  s(3, 2) = s(3, 3) = 0.0;
  const std::vector<SegPair> half{{s, two}};
  CHECK(std::abs(pro(half) - 0.5) < 1e-9);
  CHECK(std::abs(pro_oracle(half, 0.3, 200) - 0.5) < 1e-9);
}

TEST_CASE("PRO matches the sweep oracle on two-region 4x4 instances") {
  std::mt19937_64 rng(54);
  const std::vector<BinaryMask> masks{mask4({{0, 0}, {0, 1}, {1, 0}, {3, 3}}), mask4({{0, 3}, {2, 0}, {3, 0}}),
                                      mask4({{0, 0}, {3, 3}}), mask4({{1, 0}, {1, 1}, {1, 3}, {2, 3}})};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SegPair> pairs;
    const int images = uniform_int(rng, 1, 3);
    for (int i = 0; i < images; ++i) {
      ScoreMap s(4, 4);
      for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = trial % 2 ? std::round(uniform(rng) * 4) / 4 : uniform(rng);
      pairs.push_back({s, masks[static_cast<std::size_t>(uniform_int(rng, 0, 3))]});
    }
    for (double limit : {0.3, 1.0}) CHECK(std::abs(pro(pairs, limit, 200) - pro_oracle(pairs, limit, 200)) < 1e-9);
    CHECK(std::abs(pro(pairs, 0.3, 17) - pro_oracle(pairs, 0.3, 17)) < 1e-9);
    const double v = pro(pairs);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("PRO input errors") {
  const std::vector<SegPair> none{{ScoreMap::Zero(4, 4), BinaryMask::Zero(4, 4)}};
  CHECK_THROWS_AS(pro(none), DegenerateInputError);
  const std::vector<SegPair> all{{ScoreMap::Zero(2, 2), BinaryMask::Ones(2, 2)}};
  CHECK_THROWS_AS(pro(all), DegenerateInputError);
  const std::vector<SegPair> ok{{ScoreMap::Zero(4, 4), mask4({{0, 0}})}};
  CHECK_THROWS_AS(pro(ok, 0.0), ContractError);
}

TEST_CASE("aggregating seeds") {
  const std::vector<RunFragment> single{{{"bottle", {{"image_auroc", 93.1}}}}};
  EvalReport r = aggregate_runs(single);
  CHECK(r.table["bottle"]["image_auroc"].mean == 93.1);
  CHECK(r.table["bottle"]["image_auroc"].std == 0.0);

  const std::vector<RunFragment> two{{{"a", {{"m", 90.0}}}, {"b", {{"m", 80.0}}}},
                                     {{"a", {{"m", 94.0}}}, {"b", {{"m", 82.0}}}}};
  r = aggregate_runs(two);
  CHECK(r.table["a"]["m"].mean == 92.0);
  CHECK(r.table["a"]["m"].std == 2.0);
  CHECK(r.table[kMeanRow]["m"].per_seed == std::vector<double>{85.0, 88.0});
  CHECK(r.table[kMeanRow]["m"].mean == 86.5);
  CHECK(r.table[kMeanRow]["m"].std == 1.5);
  CHECK(r.categories == std::vector<std::string>{"a", "b", kMeanRow});

  const std::vector<RunFragment> mismatched{{{"a", {{"m", 1.0}}}}, {{"b", {{"m", 1.0}}}}};
  CHECK_THROWS_AS(aggregate_runs(mismatched), ContractError);
  CHECK_THROWS_AS(aggregate_runs(std::span<const RunFragment>{}), ContractError);
}

TEST_CASE("fifteen categories give fifteen rows plus the mean") {
  const std::vector<std::string> names{"bottle", "cable",  "capsule", "carpet", "grid",
                                       "hazelnut", "leather", "metal_nut", "pill", "screw",
                                       "tile",   "toothbrush", "transistor", "wood", "zipper"};
  RunFragment f;
  for (std::size_t i = 0; i < names.size(); ++i) f[names[i]] = {{"image_auroc", 0.5 + 0.01 * double(i)}};
  const std::vector<RunFragment> runs{f};
  const EvalReport r = aggregate_runs(runs, names);
  REQUIRE(r.categories.size() == 16);
  CHECK(r.categories.front() == "bottle");
  CHECK(r.categories[14] == "zipper");
  CHECK(r.categories.back() == kMeanRow);
  const auto j = r.to_json();
  CHECK(j.size() == 16);
  CHECK(j["bottle"]["image_auroc"]["per_seed"].size() == 1);
  CHECK(j["Mean"]["image_auroc"]["std"] == 0.0);
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("category,image_auroc_mean,image_auroc_std", 0) == 0);
  CHECK(csv.find("population") != std::string::npos);
}
