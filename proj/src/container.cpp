#include "winseg/container.hpp"

#include "winseg/types.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

namespace winseg {

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::int64_t Tensor::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

void write_container(const std::filesystem::path& path, const TensorContainer& container) {
  nlohmann::json manifest = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : container.tensors) {
    if (name == kContainerMetaKey) throw ContractError("tensor name '__meta__' is reserved");
    if (t.element_count() != static_cast<std::int64_t>(t.values.size()))
      throw ContractError("tensor '" + name + "' shape does not match its value count");
    manifest[name] = {{"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}};
    offset += 4 * t.values.size();
  }
  if (!container.metadata.empty()) manifest[kContainerMetaKey] = container.metadata;
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os.write(kContainerMagic, 5);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : container.tensors)
    for (float v : t.values) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                             static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
      os.write(bytes, 4);
    }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 13 || std::memcmp(bytes.data(), kContainerMagic, 5) != 0)
    throw IoError("'" + path.string() + "' is not a WCTF1 container");
  const std::uint64_t manifest_len = get_u64(bytes.data() + 5);
  if (13 + manifest_len > bytes.size()) throw IoError("'" + path.string() + "' has a truncated manifest");
  const std::size_t payload = 13 + manifest_len;

  TensorContainer out;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 13, bytes.begin() + static_cast<std::ptrdiff_t>(payload));
    for (const auto& [name, entry] : manifest.items()) {
      if (name == kContainerMetaKey) {
        out.metadata = entry;
        continue;
      }
      if (entry.at("dtype").get<std::string>() != "f32")
        throw IoError("tensor '" + name + "' has unsupported dtype");
      Tensor t;
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = static_cast<std::uint64_t>(t.element_count());
      if (payload + offset + 4 * count > bytes.size()) throw IoError("tensor '" + name + "' runs past end of file");
      t.values.resize(count);
      const unsigned char* p = bytes.data() + payload + offset;
      for (std::uint64_t i = 0; i < count; ++i, p += 4) {
        const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                                   (std::uint32_t(p[3]) << 24);
        t.values[i] = std::bit_cast<float>(bits);
      }
      out.tensors.emplace(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("bad manifest in '" + path.string() + "': " + ex.what());
  }
  return out;
}

}  // namespace winseg
