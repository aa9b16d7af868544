#pragma once

#include "winseg/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace winseg {

// 8-bit interleaved RGB image.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  std::uint8_t& at(int row, int col, int ch) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
  std::uint8_t at(int row, int col, int ch) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
};

// PNG (any bit depth / color type) or JPEG, by file signature.
RgbImage read_image(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);
// Ground-truth mask: any decodable image, binarized at > 127 on the first channel.
BinaryMask read_mask(const std::filesystem::path& path);
void write_png_gray8(const std::filesystem::path& path, const Map2D<std::uint8_t>& image);

// 16-bit grayscale heatmap, pixel = round-half-up(score * 65535).
void export_heatmap(const ScoreMap& map, const std::filesystem::path& path);
Map2D<std::uint16_t> read_png_gray16(const std::filesystem::path& path);
std::uint16_t heatmap_value(double score);

// ---- datasets --------------------------------------------------------------

enum class DatasetLayout { MVTec, VisA };

struct TestSample {
  std::filesystem::path image;
  bool anomalous = false;
  std::filesystem::path mask;  // empty for normal samples
};

struct CategoryData {
  std::string name;
  std::string object_label;
  std::vector<std::filesystem::path> train_normal;
  std::vector<TestSample> test;
};

struct DatasetManifest {
  std::filesystem::path root;
  DatasetLayout layout = DatasetLayout::MVTec;
  std::vector<CategoryData> categories;

  const CategoryData& category(const std::string& name) const;
};

// MVTec: <cat>/train/good/*, <cat>/test/<defect>/*, <cat>/ground_truth/<defect>/<stem>_mask.png.
// VisA: split_csv/1cls.csv with columns object,split,label,image,mask.
DatasetManifest load_manifest(const std::filesystem::path& root, DatasetLayout layout);
DatasetLayout parse_layout(const std::string& name);

// ---- preprocessing ---------------------------------------------------------

struct PreprocessSpec {
  int target_short_edge = 240;
  std::array<float, 3> mean{0.48145466f, 0.4578275f, 0.40821073f};
  std::array<float, 3> std{0.26862954f, 0.26130258f, 0.27577711f};

  void validate(int patch_size) const;
};

struct PreprocessedImage {
  ImageTensor tensor;
  int original_height = 0;
  int original_width = 0;
};

// Scale to [0, 1], standardize per channel, then bicubic-resize so the shorter
// edge equals target_short_edge (aspect ratio preserved, long edge rounded).
PreprocessedImage preprocess(const RgbImage& image, const PreprocessSpec& spec = {});
PreprocessedImage preprocess(const std::filesystem::path& path, const PreprocessSpec& spec = {});
// Output dims (rows, cols) for an input of the given dims.
std::pair<int, int> preprocessed_dims(int height, int width, int target_short_edge);

// ---- tiling ------------------------------------------------------------------

struct TileBox {
  int top = 0;
  int left = 0;
  int size = 0;
};

struct TilePlan {
  int height = 0;
  int width = 0;
  std::vector<TileBox> tiles;
};

// Square tiles of the shorter edge along the longer edge; stride at most
// 0.8 * short edge, anchors evenly spaced (floored) from 0 to long - short.
TilePlan plan_tiles(int height, int width);

struct TilePrediction {
  ScoreMap map;  // tile-sized pixel map
  double score = 0.0;
};

struct MergedPrediction {
  ScoreMap map;
  double score = 0.0;
};

// Per-pixel mean over covering tiles; mean of tile scores.
MergedPrediction merge_tile_predictions(std::span<const TilePrediction> predictions, const TilePlan& plan);

// ---- reference sampling ----------------------------------------------------

// K distinct indices in [0, n) drawn uniformly without replacement by a
// partial Fisher-Yates shuffle driven by std::mt19937_64(seed), with unbiased
// bounded draws by rejection. Returned in draw order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

// Image ids (paths relative to the dataset root) of K sampled normal train
// images, sorted.
std::vector<std::string> sample_references(const DatasetManifest& manifest, const std::string& category,
                                           std::size_t k, std::uint64_t seed);

// FNV-1a 64 over the newline-joined ids, hex encoded.
std::string hash_ids(const std::vector<std::string>& ids);

}  // namespace winseg
