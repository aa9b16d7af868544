#include "winseg/encoder.hpp"

#include "winseg/onnx_encoder.hpp"
#include "winseg/reference_encoder.hpp"

#include <filesystem>
#include <string>

namespace winseg {

void EncoderConfig::validate() const {
  if (input_resolution <= 0 || patch_size <= 0 || grid.rows <= 0 || grid.cols <= 0 || d_image <= 0 || d_text <= 0 ||
      embed_dim <= 0)
    throw ConfigError("encoder config: all dimensions must be positive");
  if (patch_size * grid.rows != input_resolution || patch_size * grid.cols != input_resolution)
    throw ConfigError("encoder config: input_resolution " + std::to_string(input_resolution) +
                      " != patch_size " + std::to_string(patch_size) + " x grid " + std::to_string(grid.rows) + "x" +
                      std::to_string(grid.cols));
}

WindowMask WindowMask::square(GridSize grid, int row, int col, int kernel) {
  if (kernel < 1 || row < 0 || col < 0 || row + kernel > grid.rows || col + kernel > grid.cols)
    throw ContractError("window mask out of grid: anchor (" + std::to_string(row) + "," + std::to_string(col) +
                        ") kernel " + std::to_string(kernel));
  WindowMask m{row, col, kernel, {}};
  m.patches.reserve(static_cast<std::size_t>(kernel) * kernel);
  for (int r = row; r < row + kernel; ++r)
    for (int c = col; c < col + kernel; ++c) m.patches.push_back(r * grid.cols + c);
  return m;
}

WindowMask WindowMask::full(GridSize grid) {
  WindowMask m{0, 0, std::max(grid.rows, grid.cols), {}};
  m.patches.resize(static_cast<std::size_t>(grid.count()));
  for (int i = 0; i < grid.count(); ++i) m.patches[static_cast<std::size_t>(i)] = i;
  return m;
}

void Encoder::check_image(const ImageTensor& img) const {
  const int res = config().input_resolution;
  if (img.height() != res || img.width() != res)
    throw ConfigError("image tensor is " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                      ", encoder expects " + std::to_string(res) + "x" + std::to_string(res));
}

void Encoder::check_mask(const WindowMask& mask) const {
  if (mask.patches.empty()) throw ContractError("empty window mask");
  const int n = config().num_patches();
  int prev = -1;
  for (int p : mask.patches) {
    if (p < 0 || p >= n) throw ContractError("window mask index " + std::to_string(p) + " outside grid");
    if (p <= prev) throw ContractError("window mask indices must be strictly ascending");
    prev = p;
  }
}

GridSize Encoder::batch_grid(std::span<const WindowMask> masks) const {
  if (masks.empty()) throw ContractError("no window masks");
  const int k = masks.front().kernel;
  for (const auto& m : masks) {
    if (m.kernel != k) throw ContractError("batched windows must share one kernel");
    check_mask(m);
  }
  const GridSize g = config().grid;
  const GridSize plan{g.rows - k + 1, g.cols - k + 1};
  if (plan.rows > 0 && plan.cols > 0 && static_cast<int>(masks.size()) == plan.count()) {
    bool ordered = true;
    for (int i = 0; i < plan.count() && ordered; ++i) {
      const auto& m = masks[static_cast<std::size_t>(i)];
      ordered = m.row == i / plan.cols && m.col == i % plan.cols;
    }
    if (ordered) return plan;
  }
  return {1, static_cast<int>(masks.size())};
}

std::unique_ptr<Encoder> load_encoder(const std::string& spec) {
  constexpr std::string_view prefix = "reference:";
  if (spec.starts_with(prefix)) {
    const std::string seed_text = spec.substr(prefix.size());
    std::size_t used = 0;
    unsigned long long seed = 0;
    try {
      seed = std::stoull(seed_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != seed_text.size()) throw ConfigError("bad reference encoder seed in '" + spec + "'");
    return std::make_unique<ReferenceEncoder>(seed);
  }
  if (spec == "reference") return std::make_unique<ReferenceEncoder>(0);
  if (std::filesystem::is_directory(spec)) return load_onnx_encoder(spec);
  throw ConfigError("model '" + spec + "' is neither reference:<seed> nor a model directory");
}

}  // namespace winseg
