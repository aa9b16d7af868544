#include "winseg/windows.hpp"

#include "winseg/image.hpp"

#include <algorithm>
#include <cmath>

namespace winseg {

void ScaleSet::validate(GridSize grid) const {
  const int limit = std::min(grid.rows, grid.cols);
  for (int k : {small_kernel, mid_kernel})
    if (k < 1 || k > limit) throw ContractError("window kernel " + std::to_string(k) + " outside [1, " + std::to_string(limit) + "]");
  if (!use_small && !use_mid && !use_image) throw ContractError("scale set enables no scale");
}

std::vector<int> ScaleSet::active_kernels() const {
  std::vector<int> ks;
  if (use_small) ks.push_back(small_kernel);
  if (use_mid) ks.push_back(mid_kernel);
  return ks;
}

WindowPlan gen_windows(GridSize grid, int kernel) {
  if (kernel < 1 || kernel > std::min(grid.rows, grid.cols))
    throw ContractError("kernel " + std::to_string(kernel) + " does not fit grid " + std::to_string(grid.rows) + "x" +
                        std::to_string(grid.cols));
  WindowPlan plan{grid, kernel, {grid.rows - kernel + 1, grid.cols - kernel + 1}, {}};
  plan.masks.reserve(static_cast<std::size_t>(plan.positions.count()));
  for (int r = 0; r < plan.positions.rows; ++r)
    for (int c = 0; c < plan.positions.cols; ++c) plan.masks.push_back(WindowMask::square(grid, r, c, kernel));
  return plan;
}

ScoreMap window_scores(const FeatureMap& features, const ClassPrototypes& prototypes) {
  if (features.dim() != prototypes.anomaly.size())
    throw ContractError("feature dimension " + std::to_string(features.dim()) + " != prototype dimension " +
                        std::to_string(prototypes.anomaly.size()));
  const Eigen::MatrixXd f = features.vectors.cast<double>();
  const Eigen::VectorXd s_anomaly = f * prototypes.anomaly.cast<double>();
  const Eigen::VectorXd s_normal = f * prototypes.normal.cast<double>();
  ScoreMap out(features.grid.rows, features.grid.cols);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    const double n = f.row(i).norm();
    if (std::abs(n - 1.0) > 1e-4) throw ContractError("window feature is not unit norm");
    out.data()[i] = binary_softmax(s_anomaly(i), s_normal(i), prototypes.temperature);
  }
  return out;
}

ScoreMap harmonic_mean_maps(std::span<const ScoreMap> maps) {
  if (maps.empty()) throw ContractError("no maps to combine");
  ScoreMap inv_sum = ScoreMap::Zero(maps.front().rows(), maps.front().cols());
  for (const auto& m : maps) {
    if (m.rows() != inv_sum.rows() || m.cols() != inv_sum.cols()) throw ContractError("map shapes differ");
    inv_sum += 1.0 / m.max(kHarmonicEpsilon);
  }
  return static_cast<double>(maps.size()) / inv_sum;
}

ZeroShotMaps multiscale_zero_shot_map(const Encoder& encoder, const ImageTensor& img,
                                      const ClassPrototypes& prototypes, const ScaleSet& scales) {
  const GridSize grid = encoder.config().grid;
  scales.validate(grid);
  ZeroShotMaps out;
  for (int k : scales.active_kernels()) {
    const WindowPlan plan = gen_windows(grid, k);
    const FeatureMap features = encoder.encode_windows_batched(img, plan.masks);
    out.components.push_back(harmonic_aggregate(window_scores(features, prototypes), plan));
  }
  out.image_score = zero_shot_score(encoder.encode_image_global(img), prototypes);
  if (scales.use_image) out.components.push_back(ScoreMap::Constant(grid.rows, grid.cols, out.image_score));
  out.combined = harmonic_mean_maps(out.components);
  return out;
}

ScoreMap upsample_map(const ScoreMap& map, int rows, int cols) {
  if (rows < map.rows() || cols < map.cols()) throw ContractError("upsample target smaller than the map");
  return resize_bilinear(map, rows, cols).max(0.0).min(1.0);
}

double zero_shot_classify(const Encoder& encoder, const ImageTensor& img, const ClassPrototypes& prototypes,
                          const CropScheme& scheme) {
  const int res = encoder.config().input_resolution;
  auto score_of = [&](const ImageTensor& view) {
    const ImageTensor input =
        (view.height() == res && view.width() == res) ? view : resize_bicubic(view, res, res);
    return zero_shot_score(encoder.encode_image_global(input), prototypes);
  };
  if (scheme.kind == CropScheme::Kind::Single) return score_of(img);

  if (!(scheme.scale > 0.0 && scheme.scale <= 1.0)) throw ContractError("crop scale must lie in (0, 1]");
  const int h = img.height();
  const int w = img.width();
  const int ch = std::max(1, static_cast<int>(std::lround(h * scheme.scale)));
  const int cw = std::max(1, static_cast<int>(std::lround(w * scheme.scale)));
  const int anchors[5][2] = {{(h - ch) / 2, (w - cw) / 2}, {0, 0}, {0, w - cw}, {h - ch, 0}, {h - ch, w - cw}};
  double total = 0.0;
  for (const auto& a : anchors) total += score_of(crop(img, a[0], a[1], ch, cw));
  return total / 5.0;
}

ScoreMap patch_token_map(const Encoder& encoder, const ImageTensor& img, const ClassPrototypes& prototypes) {
  return window_scores(encoder.encode_patches(img), prototypes);
}

}  // namespace winseg
