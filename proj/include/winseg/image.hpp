#pragma once

#include "winseg/types.hpp"

namespace winseg {

// Pillow-compatible separable bicubic resampling (a = -0.5, support widened
// by the scale factor when downsampling).
template <typename Scalar>
Map2D<Scalar> resize_bicubic(const Map2D<Scalar>& src, int out_rows, int out_cols);

ImageTensor resize_bicubic(const ImageTensor& img, int out_rows, int out_cols);

// Sub-rectangle [top, top+rows) x [left, left+cols).
ImageTensor crop(const ImageTensor& img, int top, int left, int rows, int cols);

// Bilinear resize treating each source cell as a sample at its center
// (half-pixel alignment, edge clamped).
ScoreMap resize_bilinear(const ScoreMap& src, int out_rows, int out_cols);

// Nearest-neighbour resize of a binary mask, same center alignment.
BinaryMask resize_nearest(const BinaryMask& src, int out_rows, int out_cols);

}  // namespace winseg
