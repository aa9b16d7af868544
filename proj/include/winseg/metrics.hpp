#pragma once

#include "winseg/types.hpp"

#include <json.hpp>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace winseg {

// Parallel scores and labels (1 = anomalous, 0 = normal).
struct LabeledScores {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  void validate() const;
};

struct SegPair {
  ScoreMap prediction;
  BinaryMask mask;
};

struct F1Max {
  double score = 0.0;
  double threshold = 0.0;
};

// Probability that a random anomalous score exceeds a random normal one, ties
// counted one half.
double auroc(const LabeledScores& data);

// Average precision: sum over descending distinct thresholds of
// (R_i - R_{i-1}) * P_i.
double aupr(const LabeledScores& data);

// Best F1 over distinct-score thresholds (predict anomalous when score >= t);
// the smallest maximizing threshold is reported.
F1Max f1_max(const LabeledScores& data);

// Pooled-pixel versions.
LabeledScores pool_pixels(std::span<const SegPair> pairs);
double pixel_auroc(std::span<const SegPair> pairs);
F1Max pixel_f1_max(std::span<const SegPair> pairs);

// Area under the per-region-overlap curve up to fpr_limit, normalized by
// fpr_limit. Regions are 8-connected components of the ground truth masks;
// thresholds are n_thresholds evenly spaced values from the maximum down to
// the minimum score (predict anomalous when score >= t), and the curve starts
// at (0, 0).
double pro(std::span<const SegPair> pairs, double fpr_limit = 0.3, int n_thresholds = 200);

// Connected components of a binary mask, 8-connectivity. Labels start at 1;
// background is 0. Returns the number of components.
int label_regions(const BinaryMask& mask, Map2D<int>& labels);

// Metric values of one seed: category -> metric -> value.
using RunFragment = std::map<std::string, std::map<std::string, double>>;

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds
  std::vector<double> per_seed;
};

struct EvalReport {
  std::vector<std::string> categories;  // dataset order, then "Mean"
  std::vector<std::string> metrics;
  std::map<std::string, std::map<std::string, MetricSummary>> table;

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

inline constexpr char kMeanRow[] = "Mean";

// Aggregates per-seed fragments; the "Mean" row averages categories within
// each seed first, then summarizes over seeds. `category_order`, when given,
// fixes the row order.
EvalReport aggregate_runs(std::span<const RunFragment> per_seed, std::span<const std::string> category_order = {});

}  // namespace winseg
