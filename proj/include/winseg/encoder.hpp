#pragma once

#include "winseg/types.hpp"

#include <atomic>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace winseg {

// Shape profile of a vision-language encoder. d_image and d_text are the tower
// widths; every embedding the encoder returns lives in the joint embed_dim space.
struct EncoderConfig {
  int input_resolution = 240;
  int patch_size = 16;
  GridSize grid{15, 15};
  int d_image = 896;
  int d_text = 640;
  int embed_dim = 640;

  void validate() const;
  int num_patches() const { return grid.count(); }
};

// Square k x k block of patches anchored at its top-left patch (row, col).
struct WindowMask {
  int row = 0;
  int col = 0;
  int kernel = 0;
  std::vector<int> patches;  // row-major patch indices, ascending

  static WindowMask square(GridSize grid, int row, int col, int kernel);
  static WindowMask full(GridSize grid);
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Eigen::VectorXf encode_text(std::string_view prompt) const = 0;
};

// Image + text encoder. Loaded encoders are immutable; every method is safe to
// call concurrently. token_work() counts transformer tokens processed by image
// forwards since construction or the last reset.
class Encoder : public TextEncoder {
 public:
  virtual const EncoderConfig& config() const = 0;
  virtual std::string fingerprint() const = 0;

  virtual Eigen::VectorXf encode_image_global(const ImageTensor& img) const = 0;
  virtual FeatureMap encode_patches(const ImageTensor& img) const = 0;
  virtual Eigen::VectorXf encode_window(const ImageTensor& img, const WindowMask& mask) const = 0;
  virtual FeatureMap encode_windows_batched(const ImageTensor& img,
                                            std::span<const WindowMask> masks) const = 0;

  std::uint64_t token_work() const { return token_work_.load(std::memory_order_relaxed); }
  void reset_token_work() const { token_work_.store(0, std::memory_order_relaxed); }

 protected:
  void add_token_work(std::uint64_t n) const { token_work_.fetch_add(n, std::memory_order_relaxed); }

  // Shared argument checks for implementations.
  void check_image(const ImageTensor& img) const;
  void check_mask(const WindowMask& mask) const;
  // Output grid for a batch of windows sharing one kernel: the full sliding
  // plan when the batch is exactly that plan, else 1 x n.
  GridSize batch_grid(std::span<const WindowMask> masks) const;

 private:
  mutable std::atomic<std::uint64_t> token_work_{0};
};

// Resolves "reference:<seed>" or a model directory (see README) to an encoder.
std::unique_ptr<Encoder> load_encoder(const std::string& spec);

}  // namespace winseg
