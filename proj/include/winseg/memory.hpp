#pragma once

#include "winseg/windows.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace winseg {

// Feature banks harvested from K normal reference images, image-major and
// row-major within an image. Rows are unit vectors.
struct ReferenceMemory {
  Eigen::MatrixXf patch_bank;
  Eigen::MatrixXf small_bank;
  Eigen::MatrixXf mid_bank;

  int shots = 0;
  std::vector<std::string> image_ids;
  std::uint64_t seed = 0;
  std::string encoder_fingerprint;
  ScaleSet scales;
};

struct FewShotConfig {
  bool use_patch = true;
  bool use_small = true;
  bool use_mid = true;
  bool use_language = true;
  double fusion_weight = 0.5;  // weight of the reference-based map in the final segmentation
  CropScheme crops;
};

struct FusedScores {
  ScoreMap segmentation;  // query tensor resolution
  double score = 0.0;     // image-level anomaly score

  ScoreMap patch_map;      // association maps aligned to the patch grid
  ScoreMap small_map;
  ScoreMap mid_map;
  ScoreMap vision_map;     // mean of the enabled association maps
  ScoreMap zero_shot_map;  // language-guided multi-scale map (empty when disabled)
  double language_score = 0.0;
};

ReferenceMemory build_memory(std::span<const ImageTensor> refs, const Encoder& encoder, const ScaleSet& scales);

// Per position: min over the bank of (1 - cos) / 2.
ScoreMap associate(const FeatureMap& features, const Eigen::Ref<const Eigen::MatrixXf>& bank);

// Pixel-wise arithmetic mean of equally shaped maps.
ScoreMap fuse_scales(std::span<const ScoreMap> maps);
ScoreMap fuse_scales(const ScoreMap& patch, const ScoreMap& small, const ScoreMap& mid);

FusedScores score_plus(const Encoder& encoder, const ImageTensor& query, const ReferenceMemory& memory,
                       const ClassPrototypes& prototypes, const ScaleSet& scales,
                       const FewShotConfig& config = {});

ScoreMap segment_plus(const Encoder& encoder, const ImageTensor& query, const ReferenceMemory& memory,
                      const ClassPrototypes& prototypes, const ScaleSet& scales,
                       const FewShotConfig& config = {});

double classify_plus(const Encoder& encoder, const ImageTensor& query, const ReferenceMemory& memory,
                     const ClassPrototypes& prototypes, const ScaleSet& scales,
                       const FewShotConfig& config = {});

void save_memory(const ReferenceMemory& memory, const std::filesystem::path& path);
ReferenceMemory load_memory(const std::filesystem::path& path);

}  // namespace winseg
