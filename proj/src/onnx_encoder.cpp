#include "winseg/onnx_encoder.hpp"

#include "winseg/tokenizer.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#ifdef WINSEG_HAVE_ONNXRUNTIME
#include <onnxruntime_cxx_api.h>

#include <array>
#include <mutex>
#include <optional>
#endif

namespace winseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[maybe_unused]] std::uint64_t fnv1a(std::uint64_t h, const std::string& bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

ModelDirConfig read_model_config(const fs::path& dir) {
  const fs::path cfg_path = dir / "config.json";
  if (!fs::exists(cfg_path)) throw ConfigError("model directory '" + dir.string() + "' has no config.json");
  for (const char* graph : {"text.onnx", "image.onnx"})
    if (!fs::exists(dir / graph)) throw ConfigError("model directory '" + dir.string() + "' has no " + graph);

  ModelDirConfig out;
  out.dir = dir;
  try {
    const json j = json::parse(read_file(cfg_path));
    auto& e = out.encoder;
    e.input_resolution = j.at("input_resolution").get<int>();
    e.patch_size = j.at("patch_size").get<int>();
    const auto grid = j.at("grid");
    e.grid = {grid.at(0).get<int>(), grid.at(1).get<int>()};
    e.d_image = j.at("d_image").get<int>();
    e.d_text = j.at("d_text").get<int>();
    e.embed_dim = j.value("embed_dim", e.d_text);
    if (j.contains("tokenizer")) {
      const auto& t = j.at("tokenizer");
      out.tokenizer.type = t.value("type", out.tokenizer.type);
      out.tokenizer.vocab = t.value("vocab", std::string{});
      out.tokenizer.context_length = t.value("context_length", out.tokenizer.context_length);
    }
    out.opset = j.value("opset", 0);
  } catch (const json::exception& ex) {
    throw ConfigError("malformed " + cfg_path.string() + ": " + ex.what());
  }
  out.encoder.validate();
  if (out.tokenizer.type != "clip_bpe" && out.tokenizer.type != "bytes")
    throw ConfigError("unsupported tokenizer type '" + out.tokenizer.type + "'");
  if (out.tokenizer.type == "clip_bpe" && out.tokenizer.vocab.empty())
    throw ConfigError("clip_bpe tokenizer needs a 'vocab' merges file");
  return out;
}

#ifndef WINSEG_HAVE_ONNXRUNTIME

bool onnx_backend_available() { return false; }

std::unique_ptr<Encoder> load_onnx_encoder(const fs::path& dir) {
  read_model_config(dir);
  throw ConfigError("model directory '" + dir.string() +
                    "' needs the ONNX backend; rebuild with -DWINSEG_WITH_ONNXRUNTIME=ON");
}

#else

namespace {

class OnnxEncoder final : public Encoder {
 public:
  explicit OnnxEncoder(ModelDirConfig cfg)
      : cfg_(std::move(cfg)),
        env_(ORT_LOGGING_LEVEL_WARNING, "winseg"),
        text_(env_, (cfg_.dir / "text.onnx").c_str(), Ort::SessionOptions{}),
        image_(env_, (cfg_.dir / "image.onnx").c_str(), Ort::SessionOptions{}),
        memory_(Ort::MemoryInfo::CreateCpu(OrtArenaAllocator, OrtMemTypeDefault)) {
    if (cfg_.tokenizer.type == "clip_bpe")
      tokenizer_.emplace(ClipTokenizer::from_file((cfg_.dir / cfg_.tokenizer.vocab).string(),
                                                  cfg_.tokenizer.context_length));
    std::uint64_t h = 1469598103934665603ULL;
    for (const char* f : {"config.json", "text.onnx", "image.onnx"}) h = fnv1a(h, read_file(cfg_.dir / f));
    std::ostringstream os;
    os << "onnx:" << std::hex << h;
    fingerprint_ = os.str();
  }

  const EncoderConfig& config() const override { return cfg_.encoder; }
  std::string fingerprint() const override { return fingerprint_; }

  Eigen::VectorXf encode_text(std::string_view prompt) const override {
    std::vector<std::int64_t> ids;
    if (tokenizer_) {
      ids = tokenizer_->encode_padded(prompt);
    } else {
      const auto ctx = static_cast<std::size_t>(cfg_.tokenizer.context_length);
      if (prompt.size() + 2 > ctx) throw EncoderError("prompt exceeds context: '" + std::string(prompt) + "'");
      ids.push_back(256);
      for (char c : prompt) ids.push_back(static_cast<unsigned char>(c));
      ids.push_back(257);
      ids.resize(ctx, 0);
    }
    const std::array<std::int64_t, 2> shape{1, static_cast<std::int64_t>(ids.size())};
    Ort::Value input = Ort::Value::CreateTensor<std::int64_t>(memory_, ids.data(), ids.size(), shape.data(), 2);
    const char* in_names[] = {"input_ids"};
    const char* out_names[] = {"text_embeds"};
    auto outputs = run(text_, in_names, &input, 1, out_names, 1, prompt);
    const float* data = outputs[0].GetTensorData<float>();
    Eigen::VectorXf v = Eigen::Map<const Eigen::VectorXf>(data, cfg_.encoder.embed_dim);
    return v.normalized();
  }

  Eigen::VectorXf encode_image_global(const ImageTensor& img) const override {
    return encode_window(img, WindowMask::full(cfg_.encoder.grid));
  }

  FeatureMap encode_patches(const ImageTensor& img) const override {
    const WindowMask full = WindowMask::full(cfg_.encoder.grid);
    auto [embeds, patches] = forward(img, std::span<const WindowMask>(&full, 1));
    patches.rowwise().normalize();
    return {cfg_.encoder.grid, patches, "penultimate"};
  }

  Eigen::VectorXf encode_window(const ImageTensor& img, const WindowMask& mask) const override {
    check_mask(mask);
    auto [embeds, patches] = forward(img, std::span<const WindowMask>(&mask, 1));
    return embeds.row(0).transpose().normalized();
  }

  FeatureMap encode_windows_batched(const ImageTensor& img, std::span<const WindowMask> masks) const override {
    const GridSize out_grid = batch_grid(masks);
    auto [embeds, patches] = forward(img, masks);
    embeds.rowwise().normalize();
    return {out_grid, embeds, "window:" + std::to_string(masks.front().kernel)};
  }

 private:
  using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  std::vector<Ort::Value> run(Ort::Session& session, const char* const* in_names, const Ort::Value* inputs,
                              std::size_t n_in, const char* const* out_names, std::size_t n_out,
                              std::string_view what) const {
    try {
      return session.Run(Ort::RunOptions{nullptr}, in_names, inputs, n_in, out_names, n_out);
    } catch (const Ort::Exception& ex) {
      throw EncoderError("onnx inference failed for '" + std::string(what) + "': " + ex.what());
    }
  }

  // Class-token embeddings (B x E) and kept patch embeddings of the first
  // window ((N) x E) for a batch of equally sized windows.
  std::pair<Eigen::MatrixXf, Eigen::MatrixXf> forward(const ImageTensor& img,
                                                      std::span<const WindowMask> masks) const {
    check_image(img);
    const int res = cfg_.encoder.input_resolution;
    std::vector<float> pixels(static_cast<std::size_t>(3) * res * res);
    for (int c = 0; c < 3; ++c)
      std::copy_n(img.planes[static_cast<std::size_t>(c)].data(), res * res,
                  pixels.begin() + static_cast<std::ptrdiff_t>(c) * res * res);

    const auto n_keep = static_cast<std::int64_t>(masks.front().patches.size());
    std::vector<std::int64_t> keep;
    keep.reserve(masks.size() * static_cast<std::size_t>(n_keep));
    for (const auto& m : masks) {
      if (static_cast<std::int64_t>(m.patches.size()) != n_keep)
        throw ContractError("batched windows must cover equal patch counts");
      keep.insert(keep.end(), m.patches.begin(), m.patches.end());
    }

    const std::array<std::int64_t, 4> pixel_shape{1, 3, res, res};
    const std::array<std::int64_t, 2> keep_shape{static_cast<std::int64_t>(masks.size()), n_keep};
    std::array<Ort::Value, 2> inputs{
        Ort::Value::CreateTensor<float>(memory_, pixels.data(), pixels.size(), pixel_shape.data(), 4),
        Ort::Value::CreateTensor<std::int64_t>(memory_, keep.data(), keep.size(), keep_shape.data(), 2)};
    const char* in_names[] = {"pixel_values", "keep_indices"};
    const char* out_names[] = {"image_embeds", "patch_embeds"};
    auto outputs = run(image_, in_names, inputs.data(), 2, out_names, 2, "image");
    add_token_work(static_cast<std::uint64_t>(masks.size()) * static_cast<std::uint64_t>(n_keep + 1));

    const auto e = static_cast<Eigen::Index>(cfg_.encoder.embed_dim);
    const auto b = static_cast<Eigen::Index>(masks.size());
    Eigen::MatrixXf embeds = Eigen::Map<const RowMatrix>(outputs[0].GetTensorData<float>(), b, e);
    Eigen::MatrixXf patches = Eigen::Map<const RowMatrix>(outputs[1].GetTensorData<float>(), n_keep, e);
    return {std::move(embeds), std::move(patches)};
  }

  ModelDirConfig cfg_;
  Ort::Env env_;
  mutable Ort::Session text_;
  mutable Ort::Session image_;
  Ort::MemoryInfo memory_;
  std::optional<ClipTokenizer> tokenizer_;
  std::string fingerprint_;
};

}  // namespace

bool onnx_backend_available() { return true; }

std::unique_ptr<Encoder> load_onnx_encoder(const fs::path& dir) {
  try {
    return std::make_unique<OnnxEncoder>(read_model_config(dir));
  } catch (const Ort::Exception& ex) {
    throw EncoderError("cannot load ONNX graphs from '" + dir.string() + "': " + ex.what());
  }
}

#endif

}  // namespace winseg
