#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace winseg {

// Row-major 2-D array indexed (row, col); the layout of every map and image plane.
template <typename Scalar>
using Map2D = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Patch- or pixel-grid of anomaly scores.
using ScoreMap = Map2D<double>;
using BinaryMask = Map2D<std::uint8_t>;

struct GridSize {
  int rows = 0;
  int cols = 0;

  int count() const { return rows * cols; }
  bool operator==(const GridSize&) const = default;
};

// Errors. Every failure raised by the library derives from winseg::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define WINSEG_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

WINSEG_DEFINE_ERROR(ContractError);
WINSEG_DEFINE_ERROR(SlotError);
WINSEG_DEFINE_ERROR(ConfigError);
WINSEG_DEFINE_ERROR(CoverageError);
WINSEG_DEFINE_ERROR(DegenerateInputError);
WINSEG_DEFINE_ERROR(EncoderError);
WINSEG_DEFINE_ERROR(IoError);
WINSEG_DEFINE_ERROR(ManifestError);

#undef WINSEG_DEFINE_ERROR

// A grid of unit feature vectors, one row of `vectors` per grid position in
// row-major order. origin is "penultimate" for patch tokens or "window:<k>".
struct FeatureMap {
  GridSize grid;
  Eigen::MatrixXf vectors;
  std::string origin;

  Eigen::Index dim() const { return vectors.cols(); }
  auto at(int row, int col) const { return vectors.row(static_cast<Eigen::Index>(row) * grid.cols + col); }
};

// Channels-first standardized image, planes in RGB order.
struct ImageTensor {
  std::array<Map2D<float>, 3> planes;

  int height() const { return static_cast<int>(planes[0].rows()); }
  int width() const { return static_cast<int>(planes[0].cols()); }

  static ImageTensor zeros(int height, int width) {
    ImageTensor t;
    for (auto& p : t.planes) p = Map2D<float>::Zero(height, width);
    return t;
  }
  static ImageTensor constant(int height, int width, float value) {
    ImageTensor t;
    for (auto& p : t.planes) p = Map2D<float>::Constant(height, width, value);
    return t;
  }
};

}  // namespace winseg
