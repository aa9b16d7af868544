#pragma once

#include "winseg/encoder.hpp"
#include "winseg/transformer.hpp"

#include <cstdint>

namespace winseg {

// Small CLIP-shaped encoder with fixed pseudo-random weights. Its image tower
// is a real ViT (patch embedding, class token, positional embeddings, pre-LN
// transformer, output projection), so window locality and the dropped-patch
// shortcut are exercised for real. Text is tokenized as raw bytes between
// start/end markers, capped at kTextContext tokens.
class ReferenceEncoder final : public Encoder {
 public:
  static constexpr int kTextContext = 64;

  struct Shape {
    int heads = 4;
    int vision_layers = 2;
    int text_layers = 1;
    int mlp_ratio = 4;
  };

  // Compact default profile: 240 px, 16 px patches, 15 x 15 grid, narrow towers.
  static EncoderConfig default_config();

  explicit ReferenceEncoder(std::uint64_t seed) : ReferenceEncoder(seed, default_config()) {}
  ReferenceEncoder(std::uint64_t seed, EncoderConfig config) : ReferenceEncoder(seed, std::move(config), Shape()) {}
  ReferenceEncoder(std::uint64_t seed, EncoderConfig config, Shape shape);

  const EncoderConfig& config() const override { return config_; }
  std::string fingerprint() const override;

  Eigen::VectorXf encode_text(std::string_view prompt) const override;
  Eigen::VectorXf encode_image_global(const ImageTensor& img) const override;
  FeatureMap encode_patches(const ImageTensor& img) const override;
  Eigen::VectorXf encode_window(const ImageTensor& img, const WindowMask& mask) const override;
  FeatureMap encode_windows_batched(const ImageTensor& img, std::span<const WindowMask> masks) const override;

  // Window embedding from the full token sequence with attention restricted to
  // the class token and the masked-in patches. Same result as encode_window,
  // computed without dropping tokens.
  Eigen::VectorXf encode_window_masked_attention(const ImageTensor& img, const WindowMask& mask) const;

 private:
  using Matrix = Transformer<float>::Matrix;
  using RowVector = Transformer<float>::Vector;

  // Patch embeddings plus positional embeddings, one row per patch.
  Matrix embed_patches(const ImageTensor& img) const;
  Matrix class_row() const;
  Eigen::VectorXf project_unit(const Eigen::Ref<const RowVector>& token) const;

  std::uint64_t seed_;
  EncoderConfig config_;
  Shape shape_;

  Matrix patch_embed_;  // 3*p*p x d_image
  RowVector class_embed_;
  Matrix vision_pos_;  // (1 + patches) x d_image
  LayerNorm<float> ln_pre_, ln_post_;
  Transformer<float> vision_;
  Matrix vision_proj_;  // d_image x embed_dim

  Matrix token_embed_;  // 258 x d_text
  Matrix text_pos_;     // kTextContext x d_text
  Transformer<float> text_;
  LayerNorm<float> ln_final_;
  Matrix text_proj_;  // d_text x embed_dim
};

}  // namespace winseg
