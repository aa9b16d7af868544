#include "winseg/memory.hpp"

#include "winseg/container.hpp"
#include "winseg/image.hpp"

#include <algorithm>

namespace winseg {

namespace {

void append_rows(Eigen::MatrixXf& bank, const Eigen::MatrixXf& rows) {
  const Eigen::Index old = bank.rows();
  if (old == 0) {
    bank = rows;
    return;
  }
  bank.conservativeResize(old + rows.rows(), Eigen::NoChange);
  bank.bottomRows(rows.rows()) = rows;
}

Tensor to_tensor(const Eigen::MatrixXf& m) {
  Tensor t{{m.rows(), m.cols()}, {}};
  t.values.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.values.data(), m.rows(),
                                                                                    m.cols()) = m;
  return t;
}

Eigen::MatrixXf from_tensor(const Tensor& t, const std::string& name) {
  if (t.shape.size() != 2) throw IoError("memory bank '" + name + "' is not 2-D");
  return Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.values.data(), t.shape[0], t.shape[1]);
}

ScoreMap to_patch_grid(const ScoreMap& m, GridSize grid) {
  if (m.rows() == grid.rows && m.cols() == grid.cols) return m;
  return resize_bilinear(m, grid.rows, grid.cols).max(0.0).min(1.0);
}

}  // namespace

ReferenceMemory build_memory(std::span<const ImageTensor> refs, const Encoder& encoder, const ScaleSet& scales) {
  if (refs.empty()) throw ContractError("reference set is empty");
  const GridSize grid = encoder.config().grid;
  scales.validate(grid);
  const WindowPlan small = gen_windows(grid, scales.small_kernel);
  const WindowPlan mid = gen_windows(grid, scales.mid_kernel);

  ReferenceMemory mem;
  for (const auto& img : refs) {
    append_rows(mem.patch_bank, encoder.encode_patches(img).vectors);
    append_rows(mem.small_bank, encoder.encode_windows_batched(img, small.masks).vectors);
    append_rows(mem.mid_bank, encoder.encode_windows_batched(img, mid.masks).vectors);
  }
  mem.shots = static_cast<int>(refs.size());
  mem.encoder_fingerprint = encoder.fingerprint();
  mem.scales = scales;
  return mem;
}

ScoreMap associate(const FeatureMap& features, const Eigen::Ref<const Eigen::MatrixXf>& bank) {
  if (bank.rows() == 0) throw ContractError("reference bank is empty");
  if (bank.cols() != features.dim())
    throw ContractError("feature dimension " + std::to_string(features.dim()) + " != bank dimension " +
                        std::to_string(bank.cols()));
  const Eigen::MatrixXd sims = features.vectors.cast<double>() * bank.cast<double>().transpose();
  ScoreMap out(features.grid.rows, features.grid.cols);
  for (Eigen::Index i = 0; i < sims.rows(); ++i)
    out.data()[i] = std::clamp(0.5 * (1.0 - sims.row(i).maxCoeff()), 0.0, 1.0);
  return out;
}

ScoreMap fuse_scales(std::span<const ScoreMap> maps) {
  if (maps.empty()) throw ContractError("no maps to fuse");
  ScoreMap sum = ScoreMap::Zero(maps.front().rows(), maps.front().cols());
  for (const auto& m : maps) {
    if (m.rows() != sum.rows() || m.cols() != sum.cols()) throw ContractError("fused maps differ in shape");
    sum += m;
  }
  return sum / static_cast<double>(maps.size());
}

ScoreMap fuse_scales(const ScoreMap& patch, const ScoreMap& small, const ScoreMap& mid) {
  const ScoreMap maps[] = {patch, small, mid};
  return fuse_scales(maps);
}

FusedScores score_plus(const Encoder& encoder, const ImageTensor& query, const ReferenceMemory& memory,
                       const ClassPrototypes& prototypes, const ScaleSet& scales,
                       const FewShotConfig& config) {
  if (!config.use_patch && !config.use_small && !config.use_mid)
    throw ContractError("few-shot config enables no reference bank");
  if (!(config.fusion_weight >= 0.0 && config.fusion_weight <= 1.0))
    throw ContractError("fusion weight must lie in [0, 1]");
  const GridSize grid = encoder.config().grid;
  if (scales.small_kernel != memory.scales.small_kernel || scales.mid_kernel != memory.scales.mid_kernel)
    throw ContractError("window kernels differ from those the memory was built with");
  if (!memory.encoder_fingerprint.empty() && memory.encoder_fingerprint != encoder.fingerprint())
    throw ContractError("memory was built with encoder '" + memory.encoder_fingerprint + "'");

  FusedScores out;
  std::vector<ScoreMap> parts;
  if (config.use_patch) {
    out.patch_map = associate(encoder.encode_patches(query), memory.patch_bank);
    parts.push_back(out.patch_map);
  }
  if (config.use_small) {
    const WindowPlan plan = gen_windows(grid, scales.small_kernel);
    out.small_map = to_patch_grid(associate(encoder.encode_windows_batched(query, plan.masks), memory.small_bank), grid);
    parts.push_back(out.small_map);
  }
  if (config.use_mid) {
    const WindowPlan plan = gen_windows(grid, scales.mid_kernel);
    out.mid_map = to_patch_grid(associate(encoder.encode_windows_batched(query, plan.masks), memory.mid_bank), grid);
    parts.push_back(out.mid_map);
  }
  out.vision_map = fuse_scales(parts);
  const double vision_max = out.vision_map.maxCoeff();

  ScoreMap patch_level = out.vision_map;
  if (config.use_language) {
    out.zero_shot_map = multiscale_zero_shot_map(encoder, query, prototypes, scales).combined;
    out.language_score = zero_shot_classify(encoder, query, prototypes, config.crops);
    patch_level = config.fusion_weight * out.vision_map + (1.0 - config.fusion_weight) * out.zero_shot_map;
    out.score = 0.5 * (out.language_score + vision_max);
  } else {
    out.score = vision_max;
  }
  out.segmentation = upsample_map(patch_level, query.height(), query.width());
  return out;
}

ScoreMap segment_plus(const Encoder& encoder, const ImageTensor& query, const ReferenceMemory& memory,
                      const ClassPrototypes& prototypes, const ScaleSet& scales,
                       const FewShotConfig& config) {
  return score_plus(encoder, query, memory, prototypes, scales, config).segmentation;
}

double classify_plus(const Encoder& encoder, const ImageTensor& query, const ReferenceMemory& memory,
                     const ClassPrototypes& prototypes, const ScaleSet& scales,
                       const FewShotConfig& config) {
  return score_plus(encoder, query, memory, prototypes, scales, config).score;
}

void save_memory(const ReferenceMemory& memory, const std::filesystem::path& path) {
  TensorContainer c;
  c.tensors.emplace("patch", to_tensor(memory.patch_bank));
  c.tensors.emplace("window_small", to_tensor(memory.small_bank));
  c.tensors.emplace("window_mid", to_tensor(memory.mid_bank));
  c.metadata = {{"banks", {"patch", "window_small", "window_mid"}},
                {"K", memory.shots},
                {"seed", memory.seed},
                {"image_ids", memory.image_ids},
                {"encoder", memory.encoder_fingerprint},
                {"small_kernel", memory.scales.small_kernel},
                {"mid_kernel", memory.scales.mid_kernel}};
  write_container(path, c);
}

ReferenceMemory load_memory(const std::filesystem::path& path) {
  const TensorContainer c = read_container(path);
  ReferenceMemory m;
  try {
    m.patch_bank = from_tensor(c.tensors.at("patch"), "patch");
    m.small_bank = from_tensor(c.tensors.at("window_small"), "window_small");
    m.mid_bank = from_tensor(c.tensors.at("window_mid"), "window_mid");
    const auto& meta = c.metadata;
    m.shots = meta.at("K").get<int>();
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.image_ids = meta.at("image_ids").get<std::vector<std::string>>();
    m.encoder_fingerprint = meta.at("encoder").get<std::string>();
    m.scales.small_kernel = meta.at("small_kernel").get<int>();
    m.scales.mid_kernel = meta.at("mid_kernel").get<int>();
  } catch (const std::out_of_range&) {
    throw IoError("'" + path.string() + "' is missing a memory bank");
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("'" + path.string() + "' has malformed memory metadata: " + ex.what());
  }
  return m;
}

}  // namespace winseg
