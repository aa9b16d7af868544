#pragma once

#include "winseg/data.hpp"
#include "winseg/prompt.hpp"
#include "winseg/reference_encoder.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include <unistd.h>

namespace winseg::testing {

inline double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Modulo draw: slightly biased, but identical on every standard library.
inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline Eigen::VectorXf random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  Eigen::VectorXf v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v.normalized();
}

inline ImageTensor random_image(std::mt19937_64& rng, int rows, int cols) {
  ImageTensor img = ImageTensor::zeros(rows, cols);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& plane : img.planes)
    for (Eigen::Index i = 0; i < plane.size(); ++i) plane.data()[i] = n(rng);
  return img;
}

// Shared reference encoder with the default compact profile.
inline const ReferenceEncoder& reference_encoder() {
  static const ReferenceEncoder encoder(7);
  return encoder;
}

// Text encoder returning fixed vectors per prompt.
class TableTextEncoder final : public TextEncoder {
 public:
  std::map<std::string, Eigen::VectorXf> table;
  Eigen::VectorXf encode_text(std::string_view prompt) const override {
    const auto it = table.find(std::string(prompt));
    if (it == table.end()) throw EncoderError("unknown prompt '" + std::string(prompt) + "'");
    return it->second;
  }
};

inline RgbImage texture_image(std::mt19937_64& rng, int size) {
  RgbImage img{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size * 3)};
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const int stripe = ((r / 8 + c / 8) % 2) * 12;
      for (int ch = 0; ch < 3; ++ch)
        img.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(110 + stripe + ch * 6 + uniform_int(rng, -6, 6), 0, 255));
    }
  return img;
}

struct ToyDatasetSpec {
  std::string category = "toy_part";
  int size = 240;
  int train_normals = 4;
  int test_normals = 8;
  int test_defects = 8;
  std::uint64_t seed = 11;
};

// MVTec-layout dataset: uniform textured normals and copies carrying one
// high-contrast square defect each, with masks.
inline void write_toy_dataset(const std::filesystem::path& root, const ToyDatasetSpec& spec = {}) {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(spec.seed);
  const fs::path cat = root / spec.category;
  fs::create_directories(cat / "train" / "good");
  fs::create_directories(cat / "test" / "good");
  fs::create_directories(cat / "test" / "square");
  fs::create_directories(cat / "ground_truth" / "square");
  auto name = [](int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d.png", i);
    return std::string(buf);
  };
  for (int i = 0; i < spec.train_normals; ++i) write_png_rgb(cat / "train" / "good" / name(i), texture_image(rng, spec.size));
  for (int i = 0; i < spec.test_normals; ++i) write_png_rgb(cat / "test" / "good" / name(i), texture_image(rng, spec.size));
  for (int i = 0; i < spec.test_defects; ++i) {
    RgbImage img = texture_image(rng, spec.size);
    Map2D<std::uint8_t> mask = Map2D<std::uint8_t>::Zero(spec.size, spec.size);
    const int side = uniform_int(rng, spec.size / 8, spec.size / 4);
    const int top = uniform_int(rng, 0, spec.size - side);
    const int left = uniform_int(rng, 0, spec.size - side);
    const bool dark = i % 2 == 0;
    for (int r = top; r < top + side; ++r)
      for (int c = left; c < left + side; ++c) {
        img.at(r, c, 0) = dark ? 10 : 250;
        img.at(r, c, 1) = dark ? 10 : 30;
        img.at(r, c, 2) = dark ? 10 : 30;
        mask(r, c) = 255;
      }
    write_png_rgb(cat / "test" / "square" / name(i), img);
    const std::string stem = name(i).substr(0, 3);
    write_png_gray8(cat / "ground_truth" / "square" / (stem + "_mask.png"), mask);
  }
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("winseg_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace winseg::testing
