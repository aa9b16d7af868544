#include "winseg/data.hpp"

#include "winseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace winseg {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::string object_label_for(std::string name) {
  std::replace(name.begin(), name.end(), '_', ' ');
  return name;
}

CategoryData load_mvtec_category(const fs::path& dir) {
  CategoryData cat;
  cat.name = dir.filename().string();
  cat.object_label = object_label_for(cat.name);
  cat.train_normal = sorted_images(dir / "train" / "good");

  const fs::path gt_root = dir / "ground_truth";
  std::vector<std::string> missing;
  bool needs_gt = false;
  for (const auto& defect_dir : sorted_subdirs(dir / "test")) {
    const std::string defect = defect_dir.filename().string();
    for (const auto& img : sorted_images(defect_dir)) {
      TestSample s{img, defect != "good", {}};
      if (s.anomalous) {
        needs_gt = true;
        s.mask = gt_root / defect / (img.stem().string() + "_mask.png");
        if (!fs::exists(s.mask)) missing.push_back(s.mask.string());
      }
      cat.test.push_back(std::move(s));
    }
  }
  if (needs_gt && !fs::is_directory(gt_root))
    throw ManifestError("category '" + cat.name + "' has anomalous test images but no ground_truth directory");
  if (!missing.empty()) {
    std::string msg = "category '" + cat.name + "' is missing masks:";
    for (const auto& m : missing) msg += " " + m;
    throw ManifestError(msg);
  }
  return cat;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(cell);
  return cells;
}

DatasetManifest load_visa(const fs::path& root) {
  const fs::path csv = root / "split_csv" / "1cls.csv";
  std::ifstream in(csv);
  if (!in) throw ManifestError("VisA split file not found: " + csv.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ManifestError("VisA split file lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_obj = column("object"), c_split = column("split"), c_label = column("label"),
                    c_img = column("image"), c_mask = column("mask");

  DatasetManifest m{root, DatasetLayout::VisA, {}};
  std::vector<std::string> missing;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < header.size()) throw ManifestError("short row in " + csv.string() + ": " + line);
    const std::string& obj = cells[c_obj];
    auto it = std::find_if(m.categories.begin(), m.categories.end(), [&](const auto& c) { return c.name == obj; });
    if (it == m.categories.end()) {
      m.categories.push_back({obj, object_label_for(obj), {}, {}});
      it = std::prev(m.categories.end());
    }
    const bool anomalous = cells[c_label] != "normal";
    const fs::path image = root / cells[c_img];
    if (cells[c_split] == "train") {
      if (!anomalous) it->train_normal.push_back(image);
    } else {
      TestSample s{image, anomalous, {}};
      if (anomalous) {
        if (cells[c_mask].empty() || !fs::exists(root / cells[c_mask]))
          missing.push_back(cells[c_mask].empty() ? cells[c_img] + " (no mask)" : cells[c_mask]);
        else
          s.mask = root / cells[c_mask];
      }
      it->test.push_back(std::move(s));
    }
  }
  if (!missing.empty()) {
    std::string msg = "VisA manifest is missing masks:";
    for (const auto& x : missing) msg += " " + x;
    throw ManifestError(msg);
  }
  return m;
}

}  // namespace

const CategoryData& DatasetManifest::category(const std::string& name) const {
  for (const auto& c : categories)
    if (c.name == name) return c;
  throw ManifestError("no category '" + name + "' under " + root.string());
}

DatasetLayout parse_layout(const std::string& name) {
  if (name == "mvtec") return DatasetLayout::MVTec;
  if (name == "visa") return DatasetLayout::VisA;
  throw ConfigError("unknown dataset layout '" + name + "' (expected mvtec or visa)");
}

DatasetManifest load_manifest(const fs::path& root, DatasetLayout layout) {
  if (!fs::is_directory(root)) throw ManifestError("dataset root '" + root.string() + "' does not exist");
  if (layout == DatasetLayout::VisA) return load_visa(root);
  DatasetManifest m{root, layout, {}};
  for (const auto& dir : sorted_subdirs(root))
    if (fs::is_directory(dir / "train") && fs::is_directory(dir / "test")) m.categories.push_back(load_mvtec_category(dir));
  if (m.categories.empty()) throw ManifestError("no MVTec-style categories under '" + root.string() + "'");
  return m;
}

void PreprocessSpec::validate(int patch_size) const {
  if (target_short_edge <= 0) throw ConfigError("target short edge must be positive");
  if (patch_size > 0 && target_short_edge % patch_size != 0)
    throw ConfigError("target short edge " + std::to_string(target_short_edge) + " is not a multiple of patch size " +
                      std::to_string(patch_size));
  for (float s : std)
    if (!(s > 0.0f)) throw ConfigError("channel std must be positive");
}

std::pair<int, int> preprocessed_dims(int height, int width, int target_short_edge) {
  if (height <= 0 || width <= 0) throw ContractError("image has no pixels");
  if (height <= width) {
    const auto cols = static_cast<int>(std::lround(double(width) * target_short_edge / height));
    return {target_short_edge, std::max(cols, target_short_edge)};
  }
  const auto rows = static_cast<int>(std::lround(double(height) * target_short_edge / width));
  return {std::max(rows, target_short_edge), target_short_edge};
}

PreprocessedImage preprocess(const RgbImage& image, const PreprocessSpec& spec) {
  spec.validate(0);
  if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * 3)
    throw ContractError("RGB buffer size does not match its dimensions");
  ImageTensor standardized;
  for (int ch = 0; ch < 3; ++ch) {
    auto& plane = standardized.planes[static_cast<std::size_t>(ch)];
    plane.resize(image.height, image.width);
    const float mean = spec.mean[static_cast<std::size_t>(ch)];
    const float sd = spec.std[static_cast<std::size_t>(ch)];
    for (int r = 0; r < image.height; ++r)
      for (int c = 0; c < image.width; ++c) plane(r, c) = (image.at(r, c, ch) / 255.0f - mean) / sd;
  }
  const auto [rows, cols] = preprocessed_dims(image.height, image.width, spec.target_short_edge);
  PreprocessedImage out;
  out.original_height = image.height;
  out.original_width = image.width;
  out.tensor = (rows == image.height && cols == image.width) ? std::move(standardized)
                                                              : resize_bicubic(standardized, rows, cols);
  return out;
}

PreprocessedImage preprocess(const fs::path& path, const PreprocessSpec& spec) {
  return preprocess(read_image(path), spec);
}

TilePlan plan_tiles(int height, int width) {
  if (height <= 0 || width <= 0) throw ContractError("tile plan needs positive dimensions");
  const int short_edge = std::min(height, width);
  const int slack = std::max(height, width) - short_edge;
  // n = ceil(slack / (0.8 * short)) + 1, in integers.
  int n = (5 * slack + 4 * short_edge - 1) / (4 * short_edge) + 1;
  std::vector<int> anchors;
  for (;; ++n) {
    anchors.clear();
    for (int i = 0; i < n; ++i)
      anchors.push_back(n == 1 ? 0 : static_cast<int>((static_cast<long long>(i) * slack) / (n - 1)));
    bool ok = true;
    for (std::size_t i = 1; i < anchors.size(); ++i) ok = ok && 5 * (anchors[i] - anchors[i - 1]) <= 4 * short_edge;
    if (ok) break;
  }
  TilePlan plan{height, width, {}};
  for (int a : anchors) plan.tiles.push_back(height <= width ? TileBox{0, a, short_edge} : TileBox{a, 0, short_edge});
  return plan;
}

MergedPrediction merge_tile_predictions(std::span<const TilePrediction> predictions, const TilePlan& plan) {
  if (predictions.size() != plan.tiles.size()) throw ContractError("need exactly one prediction per tile");
  ScoreMap sum = ScoreMap::Zero(plan.height, plan.width);
  ScoreMap count = ScoreMap::Zero(plan.height, plan.width);
  double score = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& box = plan.tiles[i];
    const auto& p = predictions[i];
    if (p.map.rows() != box.size || p.map.cols() != box.size) throw ContractError("tile prediction has wrong size");
    sum.block(box.top, box.left, box.size, box.size) += p.map;
    count.block(box.top, box.left, box.size, box.size) += 1.0;
    score += p.score;
  }
  if ((count == 0.0).any()) throw CoverageError("tile plan leaves pixels uncovered");
  return {sum / count, score / static_cast<double>(predictions.size())};
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw ContractError("cannot sample " + std::to_string(k) + " of " + std::to_string(n) + " items");
  std::mt19937_64 rng(seed);
  auto bounded = [&](std::uint64_t range) {
    // Largest multiple of range minus one; draws above it are rejected.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % range + 1) % range;
    std::uint64_t x;
    do {
      x = rng();
    } while (x > limit);
    return x % range;
  };
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + bounded(n - i)]);
  pool.resize(k);
  return pool;
}

std::vector<std::string> sample_references(const DatasetManifest& manifest, const std::string& category,
                                           std::size_t k, std::uint64_t seed) {
  const auto& cat = manifest.category(category);
  if (k == 0) throw ContractError("K must be at least 1");
  std::vector<std::string> ids;
  for (std::size_t i : sample_indices(cat.train_normal.size(), k, seed))
    ids.push_back(fs::relative(cat.train_normal[i], manifest.root).generic_string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string hash_ids(const std::vector<std::string>& ids) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) {
      h ^= static_cast<unsigned char>('\n');
      h *= 1099511628211ULL;
    }
    for (unsigned char c : ids[i]) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace winseg
