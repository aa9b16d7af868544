#include "winseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace winseg {

namespace {

double bicubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  int first = 0;
  std::vector<double> weights;
};

// Filter taps for each output coordinate along one axis.
std::vector<Taps> precompute(int in_size, int out_size) {
  const double scale = double(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = 2.0 * filter_scale;
  std::vector<Taps> taps(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(center - support + 0.5));
    const int hi = std::min(in_size, static_cast<int>(center + support + 0.5));
    auto& t = taps[static_cast<std::size_t>(i)];
    t.first = lo;
    double total = 0.0;
    for (int x = lo; x < hi; ++x) {
      const double w = bicubic((x - center + 0.5) / filter_scale);
      t.weights.push_back(w);
      total += w;
    }
    if (total != 0.0)
      for (auto& w : t.weights) w /= total;
  }
  return taps;
}

}  // namespace

template <typename Scalar>
Map2D<Scalar> resize_bicubic(const Map2D<Scalar>& src, int out_rows, int out_cols) {
  if (out_rows <= 0 || out_cols <= 0 || src.size() == 0) throw ContractError("resize: empty image or target");
  const auto in_rows = static_cast<int>(src.rows());
  const auto in_cols = static_cast<int>(src.cols());

  Map2D<double> horizontal(in_rows, out_cols);
  if (in_cols == out_cols) {
    horizontal = src.template cast<double>();
  } else {
    const auto taps = precompute(in_cols, out_cols);
    for (int r = 0; r < in_rows; ++r)
      for (int c = 0; c < out_cols; ++c) {
        const auto& t = taps[static_cast<std::size_t>(c)];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * src(r, t.first + static_cast<int>(k));
        horizontal(r, c) = acc;
      }
  }

  Map2D<Scalar> out(out_rows, out_cols);
  if (in_rows == out_rows) {
    out = horizontal.template cast<Scalar>();
    return out;
  }
  const auto taps = precompute(in_rows, out_rows);
  for (int r = 0; r < out_rows; ++r) {
    const auto& t = taps[static_cast<std::size_t>(r)];
    for (int c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * horizontal(t.first + static_cast<int>(k), c);
      out(r, c) = static_cast<Scalar>(acc);
    }
  }
  return out;
}

template Map2D<float> resize_bicubic(const Map2D<float>&, int, int);
template Map2D<double> resize_bicubic(const Map2D<double>&, int, int);

ImageTensor resize_bicubic(const ImageTensor& img, int out_rows, int out_cols) {
  ImageTensor out;
  for (std::size_t c = 0; c < 3; ++c) out.planes[c] = resize_bicubic(img.planes[c], out_rows, out_cols);
  return out;
}

ImageTensor crop(const ImageTensor& img, int top, int left, int rows, int cols) {
  if (top < 0 || left < 0 || rows <= 0 || cols <= 0 || top + rows > img.height() || left + cols > img.width())
    throw ContractError("crop box outside image");
  ImageTensor out;
  for (std::size_t c = 0; c < 3; ++c) out.planes[c] = img.planes[c].block(top, left, rows, cols);
  return out;
}

ScoreMap resize_bilinear(const ScoreMap& src, int out_rows, int out_cols) {
  if (out_rows <= 0 || out_cols <= 0 || src.size() == 0) throw ContractError("resize: empty map or target");
  const auto in_rows = static_cast<int>(src.rows());
  const auto in_cols = static_cast<int>(src.cols());
  auto sample = [](int i, int in, int out, int& lo, int& hi, double& frac) {
    double u = (i + 0.5) * double(in) / out - 0.5;
    u = std::clamp(u, 0.0, double(in - 1));
    lo = static_cast<int>(std::floor(u));
    hi = std::min(lo + 1, in - 1);
    frac = u - lo;
  };
  ScoreMap out(out_rows, out_cols);
  for (int r = 0; r < out_rows; ++r) {
    int r0, r1;
    double fr;
    sample(r, in_rows, out_rows, r0, r1, fr);
    for (int c = 0; c < out_cols; ++c) {
      int c0, c1;
      double fc;
      sample(c, in_cols, out_cols, c0, c1, fc);
      const double top = (1.0 - fc) * src(r0, c0) + fc * src(r0, c1);
      const double bottom = (1.0 - fc) * src(r1, c0) + fc * src(r1, c1);
      out(r, c) = (1.0 - fr) * top + fr * bottom;
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& src, int out_rows, int out_cols) {
  if (out_rows <= 0 || out_cols <= 0 || src.size() == 0) throw ContractError("resize: empty mask or target");
  BinaryMask out(out_rows, out_cols);
  for (int r = 0; r < out_rows; ++r) {
    const int sr = std::min(static_cast<int>((r + 0.5) * src.rows() / out_rows), static_cast<int>(src.rows()) - 1);
    for (int c = 0; c < out_cols; ++c) {
      const int sc = std::min(static_cast<int>((c + 0.5) * src.cols() / out_cols), static_cast<int>(src.cols()) - 1);
      out(r, c) = src(sr, sc);
    }
  }
  return out;
}

}  // namespace winseg
