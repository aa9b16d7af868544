#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace winseg {

// WCTF1 tensor container:
//   "WCTF1" | u64 LE manifest length | manifest JSON | payload
// The manifest maps tensor name -> {"dtype": "f32", "shape": [...], "offset": n}
// with offsets in bytes from the payload start; payload values are
// little-endian IEEE-754 f32 in row-major order. The reserved manifest key
// "__meta__" carries free-form JSON metadata.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  std::int64_t element_count() const;
};

struct TensorContainer {
  std::map<std::string, Tensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr char kContainerMagic[] = "WCTF1";
inline constexpr char kContainerMetaKey[] = "__meta__";

void write_container(const std::filesystem::path& path, const TensorContainer& container);
TensorContainer read_container(const std::filesystem::path& path);

}  // namespace winseg
