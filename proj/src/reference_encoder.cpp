#include "winseg/reference_encoder.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace winseg {

namespace {

constexpr int kStartToken = 256;
constexpr int kEndToken = 257;
constexpr int kVocab = 258;

template <typename Matrix>
Matrix causal_bias(Eigen::Index n) {
  Matrix bias = Matrix::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = r + 1; c < n; ++c) bias(r, c) = -std::numeric_limits<float>::infinity();
  return bias;
}

}  // namespace

EncoderConfig ReferenceEncoder::default_config() {
  EncoderConfig c;
  c.input_resolution = 240;
  c.patch_size = 16;
  c.grid = {15, 15};
  c.d_image = 64;
  c.d_text = 64;
  c.embed_dim = 32;
  return c;
}

ReferenceEncoder::ReferenceEncoder(std::uint64_t seed, EncoderConfig config, Shape shape)
    : seed_(seed), config_(config), shape_(shape) {
  config_.validate();
  if (config_.d_image % shape_.heads != 0 || config_.d_text % shape_.heads != 0)
    throw ConfigError("reference encoder: tower widths must be divisible by the head count");

  WeightSource src(seed);
  const int p = config_.patch_size;
  const int patch_in = 3 * p * p;
  const int wi = config_.d_image;
  const int wt = config_.d_text;

  patch_embed_ = src.matrix<float>(patch_in, wi, std::sqrt(3.0 / patch_in));
  class_embed_ = src.matrix<float>(1, wi, 1.0);
  vision_pos_ = src.matrix<float>(1 + config_.num_patches(), wi, 0.1);
  ln_pre_ = {RowVector::Ones(wi), RowVector::Zero(wi)};
  vision_ = Transformer<float>::random(wi, shape_.heads, shape_.vision_layers, shape_.mlp_ratio, src);
  ln_post_ = {RowVector::Ones(wi), RowVector::Zero(wi)};
  vision_proj_ = src.matrix<float>(wi, config_.embed_dim, std::sqrt(3.0 / wi));

  token_embed_ = src.matrix<float>(kVocab, wt, 1.0);
  text_pos_ = src.matrix<float>(kTextContext, wt, 0.1);
  text_ = Transformer<float>::random(wt, shape_.heads, shape_.text_layers, shape_.mlp_ratio, src);
  ln_final_ = {RowVector::Ones(wt), RowVector::Zero(wt)};
  text_proj_ = src.matrix<float>(wt, config_.embed_dim, std::sqrt(3.0 / wt));
}

std::string ReferenceEncoder::fingerprint() const {
  std::ostringstream os;
  os << "reference:seed=" << seed_ << ";res=" << config_.input_resolution << ";patch=" << config_.patch_size
     << ";grid=" << config_.grid.rows << "x" << config_.grid.cols << ";width=" << config_.d_image << "/"
     << config_.d_text << ";embed=" << config_.embed_dim << ";heads=" << shape_.heads << ";layers="
     << shape_.vision_layers << "/" << shape_.text_layers;
  return os.str();
}

Eigen::VectorXf ReferenceEncoder::encode_text(std::string_view prompt) const {
  const auto n = static_cast<Eigen::Index>(prompt.size()) + 2;
  if (n > kTextContext)
    throw EncoderError("prompt needs " + std::to_string(n) + " tokens, context is " + std::to_string(kTextContext) +
                       ": '" + std::string(prompt) + "'");
  Matrix x(n, config_.d_text);
  x.row(0) = token_embed_.row(kStartToken);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(prompt.size()); ++i)
    x.row(i + 1) = token_embed_.row(static_cast<unsigned char>(prompt[static_cast<std::size_t>(i)]));
  x.row(n - 1) = token_embed_.row(kEndToken);
  x += text_pos_.topRows(n);

  const Matrix bias = causal_bias<Matrix>(n);
  const Matrix y = ln_final_(text_.forward(std::move(x), n, &bias));
  Eigen::VectorXf out = (y.row(n - 1) * text_proj_).transpose();
  return out.normalized();
}

ReferenceEncoder::Matrix ReferenceEncoder::embed_patches(const ImageTensor& img) const {
  const int p = config_.patch_size;
  const GridSize g = config_.grid;
  Matrix raw(g.count(), 3 * p * p);
  for (int gr = 0; gr < g.rows; ++gr)
    for (int gc = 0; gc < g.cols; ++gc) {
      auto row = raw.row(gr * g.cols + gc);
      Eigen::Index k = 0;
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x) row(k++) = img.planes[static_cast<std::size_t>(ch)](gr * p + y, gc * p + x);
    }
  Matrix tokens = raw * patch_embed_;
  tokens += vision_pos_.bottomRows(g.count());
  return ln_pre_(tokens);
}

ReferenceEncoder::Matrix ReferenceEncoder::class_row() const {
  Matrix row = class_embed_ + vision_pos_.row(0);
  return ln_pre_(row);
}

Eigen::VectorXf ReferenceEncoder::project_unit(const Eigen::Ref<const RowVector>& token) const {
  const Matrix normed = ln_post_(Matrix(token));
  Eigen::VectorXf out = (normed * vision_proj_).transpose();
  return out.normalized();
}

Eigen::VectorXf ReferenceEncoder::encode_image_global(const ImageTensor& img) const {
  return encode_window(img, WindowMask::full(config_.grid));
}

FeatureMap ReferenceEncoder::encode_patches(const ImageTensor& img) const {
  check_image(img);
  const Eigen::Index n = config_.num_patches() + 1;
  Matrix x(n, config_.d_image);
  x.row(0) = class_row();
  x.bottomRows(n - 1) = embed_patches(img);
  add_token_work(static_cast<std::uint64_t>(n));
  const Matrix y = ln_post_(vision_.forward(std::move(x), n).bottomRows(n - 1));
  Matrix projected = y * vision_proj_;
  projected.rowwise().normalize();
  return {config_.grid, projected, "penultimate"};
}

Eigen::VectorXf ReferenceEncoder::encode_window(const ImageTensor& img, const WindowMask& mask) const {
  check_image(img);
  check_mask(mask);
  const Matrix patches = embed_patches(img);
  const auto n = static_cast<Eigen::Index>(mask.patches.size()) + 1;
  Matrix x(n, config_.d_image);
  x.row(0) = class_row();
  for (Eigen::Index i = 1; i < n; ++i) x.row(i) = patches.row(mask.patches[static_cast<std::size_t>(i - 1)]);
  add_token_work(static_cast<std::uint64_t>(n));
  const Matrix y = vision_.forward(std::move(x), n);
  return project_unit(y.row(0));
}

Eigen::VectorXf ReferenceEncoder::encode_window_masked_attention(const ImageTensor& img,
                                                                 const WindowMask& mask) const {
  check_image(img);
  check_mask(mask);
  const Eigen::Index n = config_.num_patches() + 1;
  Matrix x(n, config_.d_image);
  x.row(0) = class_row();
  x.bottomRows(n - 1) = embed_patches(img);

  Matrix bias = Matrix::Constant(n, n, -std::numeric_limits<float>::infinity());
  bias.col(0).setZero();
  for (int p : mask.patches) bias.col(p + 1).setZero();
  add_token_work(static_cast<std::uint64_t>(n));
  const Matrix y = vision_.forward(std::move(x), n, &bias);
  return project_unit(y.row(0));
}

FeatureMap ReferenceEncoder::encode_windows_batched(const ImageTensor& img, std::span<const WindowMask> masks) const {
  check_image(img);
  const GridSize out_grid = batch_grid(masks);
  const Matrix patches = embed_patches(img);
  const Matrix cls = class_row();

  const auto block = static_cast<Eigen::Index>(masks.front().patches.size()) + 1;
  for (const auto& m : masks)
    if (static_cast<Eigen::Index>(m.patches.size()) + 1 != block)
      throw ContractError("batched windows must cover equal patch counts");

  const auto batch = static_cast<Eigen::Index>(masks.size());
  Matrix x(batch * block, config_.d_image);
  for (Eigen::Index w = 0; w < batch; ++w) {
    const auto& m = masks[static_cast<std::size_t>(w)];
    x.row(w * block) = cls;
    for (Eigen::Index i = 1; i < block; ++i) x.row(w * block + i) = patches.row(m.patches[static_cast<std::size_t>(i - 1)]);
  }
  add_token_work(static_cast<std::uint64_t>(batch * block));
  const Matrix y = vision_.forward(std::move(x), block);

  Matrix cls_out(batch, config_.d_image);
  for (Eigen::Index w = 0; w < batch; ++w) cls_out.row(w) = y.row(w * block);
  Matrix projected = ln_post_(cls_out) * vision_proj_;
  projected.rowwise().normalize();
  return {out_grid, projected, "window:" + std::to_string(masks.front().kernel)};
}

}  // namespace winseg
