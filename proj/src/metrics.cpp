#include "winseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

namespace winseg {

namespace {

std::size_t count_positive(const LabeledScores& d) {
  return static_cast<std::size_t>(std::count(d.labels.begin(), d.labels.end(), std::uint8_t{1}));
}

std::vector<std::size_t> order_descending(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// Calls fn(threshold, tp, fp) once per distinct score, from high to low, with
// the counts of samples scoring >= threshold.
template <typename Fn>
void sweep_thresholds(const LabeledScores& d, Fn&& fn) {
  const auto idx = order_descending(d.scores);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double t = d.scores[idx[i]];
    while (i < idx.size() && d.scores[idx[i]] == t) {
      (d.labels[idx[i]] ? tp : fp) += 1;
      ++i;
    }
    fn(t, tp, fp);
  }
}

void require_positive(const LabeledScores& d, const char* metric) {
  d.validate();
  if (count_positive(d) == 0) throw DegenerateInputError(std::string(metric) + " needs at least one anomalous sample");
}

}  // namespace

void LabeledScores::validate() const {
  if (scores.empty() || scores.size() != labels.size())
    throw ContractError("scores and labels must be non-empty and of equal length");
  for (double s : scores)
    if (!std::isfinite(s)) throw ContractError("scores must be finite");
  for (auto l : labels)
    if (l > 1) throw ContractError("labels must be 0 (normal) or 1 (anomalous)");
}

double auroc(const LabeledScores& data) {
  data.validate();
  const std::size_t n_pos = count_positive(data);
  const std::size_t n_neg = data.labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateInputError("AUROC needs both normal and anomalous samples");

  // Mann-Whitney U with mid-ranks; every rank sum is an exact half-integer.
  std::vector<std::size_t> idx(data.scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return data.scores[a] < data.scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < idx.size() && data.scores[idx[j]] == data.scores[idx[i]]) pos_in_group += data.labels[idx[j++]];
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mid_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

double aupr(const LabeledScores& data) {
  require_positive(data, "AUPR");
  const double n_pos = static_cast<double>(count_positive(data));
  double area = 0.0;
  double prev_recall = 0.0;
  sweep_thresholds(data, [&](double, std::size_t tp, std::size_t fp) {
    const double recall = static_cast<double>(tp) / n_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  });
  return area;
}

F1Max f1_max(const LabeledScores& data) {
  require_positive(data, "F1-max");
  const std::size_t n_pos = count_positive(data);
  F1Max best{-1.0, 0.0};
  sweep_thresholds(data, [&](double t, std::size_t tp, std::size_t fp) {
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + n_pos);
    if (f1 >= best.score) best = {f1, t};
  });
  return best;
}

LabeledScores pool_pixels(std::span<const SegPair> pairs) {
  LabeledScores out;
  std::size_t total = 0;
  for (const auto& p : pairs) total += static_cast<std::size_t>(p.mask.size());
  out.scores.reserve(total);
  out.labels.reserve(total);
  for (const auto& p : pairs) {
    if (p.prediction.rows() != p.mask.rows() || p.prediction.cols() != p.mask.cols())
      throw ContractError("prediction and mask dimensions differ");
    for (Eigen::Index i = 0; i < p.mask.size(); ++i) {
      out.scores.push_back(p.prediction.data()[i]);
      out.labels.push_back(p.mask.data()[i] ? 1 : 0);
    }
  }
  return out;
}

double pixel_auroc(std::span<const SegPair> pairs) { return auroc(pool_pixels(pairs)); }

F1Max pixel_f1_max(std::span<const SegPair> pairs) { return f1_max(pool_pixels(pairs)); }

int label_regions(const BinaryMask& mask, Map2D<int>& labels) {
  const auto rows = static_cast<int>(mask.rows());
  const auto cols = static_cast<int>(mask.cols());
  labels = Map2D<int>::Zero(rows, cols);
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (!mask(r, c) || labels(r, c)) continue;
      labels(r, c) = ++next;
      stack.assign(1, {r, c});
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy;
            const int nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= rows || nx >= cols || !mask(ny, nx) || labels(ny, nx)) continue;
            labels(ny, nx) = next;
            stack.emplace_back(ny, nx);
          }
      }
    }
  return next;
}

double pro(std::span<const SegPair> pairs, double fpr_limit, int n_thresholds) {
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw ContractError("PRO integration limit must lie in (0, 1]");
  if (n_thresholds < 1) throw ContractError("PRO needs at least one threshold");

  // Per pixel: score and global region id (-1 for normal pixels).
  std::vector<double> scores;
  std::vector<int> region;
  std::vector<std::size_t> region_size;
  for (const auto& p : pairs) {
    if (p.prediction.rows() != p.mask.rows() || p.prediction.cols() != p.mask.cols())
      throw ContractError("prediction and mask dimensions differ");
    Map2D<int> labels;
    const int n = label_regions(p.mask, labels);
    const int base = static_cast<int>(region_size.size());
    region_size.resize(region_size.size() + static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      const double s = p.prediction.data()[i];
      if (!std::isfinite(s)) throw ContractError("scores must be finite");
      scores.push_back(s);
      const int l = labels.data()[i];
      region.push_back(l ? base + l - 1 : -1);
      if (l) ++region_size[static_cast<std::size_t>(base + l - 1)];
    }
  }
  if (region_size.empty()) throw DegenerateInputError("PRO needs at least one ground-truth region");
  const auto n_normal =
      static_cast<std::size_t>(std::count(region.begin(), region.end(), -1));
  if (n_normal == 0) throw DegenerateInputError("PRO needs at least one normal pixel");

  const auto idx = order_descending(scores);
  const double hi = scores[idx.front()];
  const double lo = scores[idx.back()];

  std::vector<std::size_t> hits(region_size.size(), 0);
  std::size_t fp = 0;
  std::size_t cursor = 0;
  std::vector<std::pair<double, double>> curve{{0.0, 0.0}};
  for (int k = 0; k < n_thresholds; ++k) {
    const double t = n_thresholds == 1 ? lo : hi + (lo - hi) * static_cast<double>(k) / (n_thresholds - 1);
    while (cursor < idx.size() && scores[idx[cursor]] >= t) {
      const int r = region[idx[cursor]];
      if (r < 0)
        ++fp;
      else
        ++hits[static_cast<std::size_t>(r)];
      ++cursor;
    }
    double overlap = 0.0;
    for (std::size_t r = 0; r < hits.size(); ++r)
      overlap += static_cast<double>(hits[r]) / static_cast<double>(region_size[r]);
    curve.emplace_back(static_cast<double>(fp) / static_cast<double>(n_normal),
                       overlap / static_cast<double>(hits.size()));
  }

  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto [x0, y0] = curve[i - 1];
    auto [x1, y1] = curve[i];
    if (x0 >= fpr_limit) break;
    if (x1 > fpr_limit) {
      y1 = y0 + (y1 - y0) * (fpr_limit - x0) / (x1 - x0);
      x1 = fpr_limit;
    }
    area += 0.5 * (x1 - x0) * (y0 + y1);
  }
  return area / fpr_limit;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& cat : categories) {
    auto& row = j[cat];
    row = nlohmann::ordered_json::object();
    for (const auto& m : metrics) {
      const auto& s = table.at(cat).at(m);
      row[m] = {{"mean", s.mean}, {"std", s.std}, {"per_seed", s.per_seed}};
    }
  }
  return j;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "category";
  for (const auto& m : metrics) os << ',' << m << "_mean," << m << "_std";
  os << '\n';
  char buf[64];
  for (const auto& cat : categories) {
    os << cat;
    for (const auto& m : metrics) {
      const auto& s = table.at(cat).at(m);
      std::snprintf(buf, sizeof(buf), ",%.10g,%.10g", s.mean, s.std);
      os << buf;
    }
    os << '\n';
  }
  os << "# std is the population standard deviation over seeds\n";
  return os.str();
}

EvalReport aggregate_runs(std::span<const RunFragment> per_seed, std::span<const std::string> category_order) {
  if (per_seed.empty()) throw ContractError("no runs to aggregate");
  const RunFragment& first = per_seed.front();
  if (first.empty()) throw ContractError("run has no categories");

  EvalReport report;
  for (const auto& [m, v] : first.begin()->second) report.metrics.push_back(m);
  if (category_order.empty()) {
    for (const auto& [cat, row] : first) report.categories.push_back(cat);
  } else {
    report.categories.assign(category_order.begin(), category_order.end());
  }

  const std::set<std::string> metric_set(report.metrics.begin(), report.metrics.end());
  for (const auto& run : per_seed) {
    if (run.size() != report.categories.size()) throw ContractError("runs cover different category sets");
    for (const auto& cat : report.categories) {
      const auto it = run.find(cat);
      if (it == run.end()) throw ContractError("run is missing category '" + cat + "'");
      std::set<std::string> ms;
      for (const auto& [m, v] : it->second) ms.insert(m);
      if (ms != metric_set) throw ContractError("category '" + cat + "' has a different metric set");
    }
  }

  auto summarize = [](std::vector<double> values) {
    MetricSummary s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / n);
    if (std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end()) {
      s.mean = values.front();
      s.std = 0.0;
    }
    s.per_seed = std::move(values);
    return s;
  };

  for (const auto& cat : report.categories)
    for (const auto& m : report.metrics) {
      std::vector<double> values;
      for (const auto& run : per_seed) values.push_back(run.at(cat).at(m));
      report.table[cat][m] = summarize(std::move(values));
    }
  for (const auto& m : report.metrics) {
    std::vector<double> values;
    for (const auto& run : per_seed) {
      double sum = 0.0;
      for (const auto& cat : report.categories) sum += run.at(cat).at(m);
      values.push_back(sum / static_cast<double>(report.categories.size()));
    }
    report.table[kMeanRow][m] = summarize(std::move(values));
  }
  report.categories.push_back(kMeanRow);
  return report;
}

}  // namespace winseg
