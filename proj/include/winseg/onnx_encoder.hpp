#pragma once

#include "winseg/encoder.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace winseg {

struct TokenizerSpec {
  std::string type = "clip_bpe";  // "clip_bpe" or "bytes"
  std::string vocab;              // merges file, relative to the model directory
  int context_length = 77;
};

// Parsed `config.json` of a model interchange directory.
struct ModelDirConfig {
  std::filesystem::path dir;
  EncoderConfig encoder;
  TokenizerSpec tokenizer;
  int opset = 0;
};

// Reads and validates config.json and checks that text.onnx and image.onnx
// are present. Works whether or not the ONNX backend is compiled in.
ModelDirConfig read_model_config(const std::filesystem::path& dir);

bool onnx_backend_available();

// Loads the ONNX graphs of a model directory. Throws ConfigError when the
// library was built without ONNX Runtime.
std::unique_ptr<Encoder> load_onnx_encoder(const std::filesystem::path& dir);

}  // namespace winseg
