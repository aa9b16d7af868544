#pragma once

#include "winseg/encoder.hpp"
#include "winseg/prompt.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace winseg {

// Clamp floor applied to window scores before harmonic averaging.
inline constexpr double kHarmonicEpsilon = 1e-8;

// All k x k windows at stride 1 whose top-left anchors keep them inside the grid.
struct WindowPlan {
  GridSize grid;
  int kernel = 0;
  GridSize positions;  // (rows - k + 1, cols - k + 1)
  std::vector<WindowMask> masks;  // row-major over positions
};

struct ScaleSet {
  int small_kernel = 2;
  int mid_kernel = 3;
  bool use_small = true;
  bool use_mid = true;
  bool use_image = true;

  void validate(GridSize grid) const;
  std::vector<int> active_kernels() const;
};

// Crops for image-level zero-shot scoring: the whole image, or (FiveCrop) the
// center and four corner crops at `scale` linear size.
struct CropScheme {
  enum class Kind { Single, FiveCrop };
  Kind kind = Kind::Single;
  double scale = 0.9;
};

WindowPlan gen_windows(GridSize grid, int kernel);

// Zero-shot score of every window embedding; shape = feature grid.
ScoreMap window_scores(const FeatureMap& features, const ClassPrototypes& prototypes);

// Per-patch harmonic mean of the scores of all windows covering the patch.
template <typename Derived>
ScoreMap harmonic_aggregate(const Eigen::DenseBase<Derived>& scores, const WindowPlan& plan) {
  if (scores.rows() != plan.positions.rows || scores.cols() != plan.positions.cols)
    throw ContractError("window score grid does not match the window plan");
  ScoreMap inv_sum = ScoreMap::Zero(plan.grid.rows, plan.grid.cols);
  ScoreMap count = ScoreMap::Zero(plan.grid.rows, plan.grid.cols);
  for (const auto& m : plan.masks) {
    const double s = std::clamp(static_cast<double>(scores(m.row, m.col)), kHarmonicEpsilon, 1.0);
    for (int p : m.patches) {
      inv_sum(p / plan.grid.cols, p % plan.grid.cols) += 1.0 / s;
      count(p / plan.grid.cols, p % plan.grid.cols) += 1.0;
    }
  }
  if ((count == 0.0).any()) throw CoverageError("some patches are not covered by any window");
  return count / inv_sum;
}

// Pixel-wise unweighted harmonic mean of equally shaped maps.
ScoreMap harmonic_mean_maps(std::span<const ScoreMap> maps);

struct ZeroShotMaps {
  ScoreMap combined;                 // patch grid
  std::vector<ScoreMap> components;  // one per active scale, small -> mid -> image
  double image_score = 0.0;          // zero-shot score of the global embedding
};

// Window-scale maps (harmonic aggregation per kernel) plus the constant
// image-scale map, combined by harmonic mean.
ZeroShotMaps multiscale_zero_shot_map(const Encoder& encoder, const ImageTensor& img,
                                      const ClassPrototypes& prototypes, const ScaleSet& scales);

// Bilinear upsampling of a patch-grid map to pixels, clamped to [0, 1].
ScoreMap upsample_map(const ScoreMap& map, int rows, int cols);

// Mean zero-shot score over the crops of `scheme`, each resized to the
// encoder resolution.
double zero_shot_classify(const Encoder& encoder, const ImageTensor& img, const ClassPrototypes& prototypes,
                          const CropScheme& scheme = {});

// Zero-shot score of every penultimate patch token.
ScoreMap patch_token_map(const Encoder& encoder, const ImageTensor& img, const ClassPrototypes& prototypes);

}  // namespace winseg
