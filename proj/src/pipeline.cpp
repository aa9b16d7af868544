#include "winseg/pipeline.hpp"

#include "winseg/image.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

namespace winseg {

namespace {

const char* crop_name(const CropScheme& crops) {
  return crops.kind == CropScheme::Kind::FiveCrop ? "five-crop" : "single";
}

const char* layout_name(DatasetLayout layout) { return layout == DatasetLayout::VisA ? "visa" : "mvtec"; }

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

ScoreMap to_tile_size(const ScoreMap& map, int size) {
  if (map.rows() == size && map.cols() == size) return map;
  return resize_bilinear(map, size, size).max(0.0).min(1.0);
}

}  // namespace

void RunConfig::validate(const EncoderConfig& encoder) const {
  scales.validate(encoder.grid);
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(fusion_weight >= 0.0 && fusion_weight <= 1.0)) throw ConfigError("fusion weight must lie in [0, 1]");
  if (!(crops.scale > 0.0 && crops.scale <= 1.0)) throw ConfigError("crop scale must lie in (0, 1]");
  if (shots.empty()) throw ConfigError("no shot counts given");
  for (int k : shots)
    if (k < 0) throw ConfigError("shot counts must be non-negative");
  if (seeds.empty()) throw ConfigError("no seeds given");
  if (jobs < 1) throw ConfigError("--jobs must be at least 1");
  PreprocessSpec{encoder.input_resolution}.validate(encoder.patch_size);
}

FewShotConfig RunConfig::few_shot() const {
  FewShotConfig fs;
  fs.use_small = scales.use_small;
  fs.use_mid = scales.use_mid;
  fs.use_language = use_language;
  fs.fusion_weight = fusion_weight;
  fs.crops = crops;
  return fs;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["object"] = object;
  j["lexicon"] = lexicon;
  j["scales"] = format_scales(scales);
  j["small_kernel"] = scales.small_kernel;
  j["mid_kernel"] = scales.mid_kernel;
  j["tau"] = temperature;
  j["multicrop"] = crop_name(crops);
  j["crop_scale"] = crops.scale;
  j["fusion_weight"] = fusion_weight;
  j["language"] = use_language;
  j["shots"] = shots;
  j["seeds"] = seeds;
  j["root"] = dataset_root;
  j["dataset_layout"] = layout_name(layout);
  j["categories"] = categories;
  j["out"] = out;
  j["jobs"] = jobs;
  return j;
}

ScaleSet parse_scales(const std::string& text) {
  ScaleSet s;
  s.use_small = s.use_mid = s.use_image = false;
  std::vector<int> kernels;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "img" || item == "image") {
      s.use_image = true;
      continue;
    }
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty() || k < 1) throw ConfigError("bad scale entry '" + item + "' in '" + text + "'");
    kernels.push_back(k);
  }
  std::sort(kernels.begin(), kernels.end());
  kernels.erase(std::unique(kernels.begin(), kernels.end()), kernels.end());
  if (kernels.size() > 2) throw ConfigError("at most two window kernels may be given: '" + text + "'");
  if (!kernels.empty()) {
    s.use_small = true;
    s.small_kernel = kernels[0];
  }
  if (kernels.size() == 2) {
    s.use_mid = true;
    s.mid_kernel = kernels[1];
  }
  if (!s.use_small && !s.use_mid && !s.use_image) throw ConfigError("scale list '" + text + "' enables nothing");
  return s;
}

std::string format_scales(const ScaleSet& scales) {
  std::string out;
  auto add = [&](const std::string& x) { out += (out.empty() ? "" : ",") + x; };
  if (scales.use_small) add(std::to_string(scales.small_kernel));
  if (scales.use_mid) add(std::to_string(scales.mid_kernel));
  if (scales.use_image) add("img");
  return out;
}

PromptSets run_prompts(const RunConfig& config, const std::string& object_label) {
  const PromptConfig pc = config.lexicon.empty() ? PromptConfig{} : load_prompt_config(config.lexicon);
  const std::string label = config.object.empty() ? object_label : config.object;
  return compose_prompts(label.empty() ? "object" : label, pc.lexicon, pc.templates);
}

ClassPrototypes run_prototypes(const RunConfig& config, const Encoder& encoder, const std::string& object_label) {
  return build_prototypes(run_prompts(config, object_label), encoder, config.temperature);
}

TiledImage tile_image(const ImageTensor& img, int resolution) {
  TiledImage out{plan_tiles(img.height(), img.width()), {}};
  for (const auto& box : out.plan.tiles) {
    ImageTensor view = (box.size == img.height() && box.size == img.width())
                           ? img
                           : crop(img, box.top, box.left, box.size, box.size);
    if (box.size != resolution) view = resize_bicubic(view, resolution, resolution);
    out.tiles.push_back(std::move(view));
  }
  return out;
}

MergedPrediction predict_zero_shot(const Encoder& encoder, const ImageTensor& img, const ClassPrototypes& prototypes,
                                   const ScaleSet& scales, const CropScheme& crops) {
  const TiledImage tiled = tile_image(img, encoder.config().input_resolution);
  std::vector<TilePrediction> preds;
  for (std::size_t i = 0; i < tiled.tiles.size(); ++i) {
    const auto& tile = tiled.tiles[i];
    const int size = tiled.plan.tiles[i].size;
    const ZeroShotMaps maps = multiscale_zero_shot_map(encoder, tile, prototypes, scales);
    const double score = crops.kind == CropScheme::Kind::Single ? maps.image_score
                                                                 : zero_shot_classify(encoder, tile, prototypes, crops);
    preds.push_back({to_tile_size(upsample_map(maps.combined, tile.height(), tile.width()), size), score});
  }
  return merge_tile_predictions(preds, tiled.plan);
}

MergedPrediction predict_few_shot(const Encoder& encoder, const ImageTensor& img, const ReferenceMemory& memory,
                                  const ClassPrototypes& prototypes, const ScaleSet& scales,
                                  const FewShotConfig& config) {
  const TiledImage tiled = tile_image(img, encoder.config().input_resolution);
  std::vector<TilePrediction> preds;
  for (std::size_t i = 0; i < tiled.tiles.size(); ++i) {
    const FusedScores fs = score_plus(encoder, tiled.tiles[i], memory, prototypes, scales, config);
    preds.push_back({to_tile_size(fs.segmentation, tiled.plan.tiles[i].size), fs.score});
  }
  return merge_tile_predictions(preds, tiled.plan);
}

ReferenceMemory build_memory_from_images(std::span<const ImageTensor> refs, const Encoder& encoder,
                                         const ScaleSet& scales) {
  std::vector<ImageTensor> views;
  for (const auto& img : refs)
    for (auto& t : tile_image(img, encoder.config().input_resolution).tiles) views.push_back(std::move(t));
  ReferenceMemory mem = build_memory(views, encoder, scales);
  mem.shots = static_cast<int>(refs.size());
  return mem;
}

std::map<std::string, double> category_metrics(std::span<const Prediction> predictions) {
  LabeledScores image;
  std::vector<SegPair> pixels;
  for (const auto& p : predictions) {
    image.scores.push_back(p.score);
    image.labels.push_back(p.anomalous ? 1 : 0);
    pixels.push_back({p.map, p.mask});
  }
  return {{"image_auroc", auroc(image)},          {"image_aupr", aupr(image)},
          {"image_f1max", f1_max(image).score},   {"pixel_auroc", pixel_auroc(pixels)},
          {"pixel_pro", pro(pixels)},             {"pixel_f1max", pixel_f1_max(pixels).score}};
}

std::vector<ShotReport> run_eval(const DatasetManifest& manifest, const Encoder& encoder, const RunConfig& config) {
  config.validate(encoder.config());
  const PreprocessSpec spec{encoder.config().input_resolution};

  std::vector<const CategoryData*> cats;
  if (config.categories.empty()) {
    for (const auto& c : manifest.categories) cats.push_back(&c);
  } else {
    for (const auto& name : config.categories) cats.push_back(&manifest.category(name));
  }
  std::vector<std::string> order;
  for (const auto* c : cats) order.push_back(c->name);

  std::vector<ClassPrototypes> prototypes;
  for (const auto* c : cats) prototypes.push_back(run_prototypes(config, encoder, c->object_label));

  struct Task {
    std::size_t shot_index;
    std::size_t seed_index;
    std::size_t category;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < config.shots.size(); ++s) {
    const std::size_t n_seeds = config.shots[s] == 0 ? 1 : config.seeds.size();
    for (std::size_t r = 0; r < n_seeds; ++r)
      for (std::size_t c = 0; c < cats.size(); ++c) tasks.push_back({s, r, c});
  }

  struct TaskResult {
    std::map<std::string, double> metrics;
    std::string reference_hash;
  };
  std::vector<TaskResult> results(tasks.size());
  const FewShotConfig fs_config = config.few_shot();

  parallel_for(tasks.size(), config.jobs, [&](std::size_t t) {
    const Task& task = tasks[t];
    const CategoryData& cat = *cats[task.category];
    const int k = config.shots[task.shot_index];
    const std::uint64_t seed = config.seeds[task.seed_index];

    ReferenceMemory memory;
    if (k > 0) {
      const auto ids = sample_references(manifest, cat.name, static_cast<std::size_t>(k), seed);
      std::vector<ImageTensor> refs;
      for (const auto& id : ids) refs.push_back(preprocess(manifest.root / id, spec).tensor);
      memory = build_memory_from_images(refs, encoder, config.scales);
      memory.image_ids = ids;
      memory.seed = seed;
      results[t].reference_hash = hash_ids(ids);
    }

    std::vector<Prediction> preds;
    for (const auto& sample : cat.test) {
      const ImageTensor img = preprocess(sample.image, spec).tensor;
      const MergedPrediction m =
          k == 0 ? predict_zero_shot(encoder, img, prototypes[task.category], config.scales, config.crops)
                 : predict_few_shot(encoder, img, memory, prototypes[task.category], config.scales, fs_config);
      Prediction p{m.map, m.score, sample.anomalous, {}};
      if (sample.anomalous)
        p.mask = resize_nearest(read_mask(sample.mask), img.height(), img.width());
      else
        p.mask = BinaryMask::Zero(img.height(), img.width());
      preds.push_back(std::move(p));
    }
    results[t].metrics = category_metrics(preds);
  });

  std::vector<ShotReport> out;
  for (std::size_t s = 0; s < config.shots.size(); ++s) {
    ShotReport report;
    report.shots = config.shots[s];
    std::vector<RunFragment> fragments(config.seeds.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (tasks[t].shot_index != s) continue;
      const std::string& name = cats[tasks[t].category]->name;
      if (report.shots == 0) {
        for (auto& f : fragments) f[name] = results[t].metrics;
      } else {
        fragments[tasks[t].seed_index][name] = results[t].metrics;
        report.reference_hashes[name][config.seeds[tasks[t].seed_index]] = results[t].reference_hash;
      }
    }
    report.report = aggregate_runs(fragments, order);
    out.push_back(std::move(report));
  }
  return out;
}

nlohmann::ordered_json shot_report_json(const ShotReport& shot, const RunConfig& config, const Encoder& encoder) {
  nlohmann::ordered_json j = shot.report.to_json();
  nlohmann::ordered_json run;
  run["config"] = config.to_json();
  run["encoder"] = encoder.fingerprint();
  run["shots"] = shot.shots;
  nlohmann::ordered_json refs = nlohmann::ordered_json::object();
  for (const auto& [cat, by_seed] : shot.reference_hashes)
    for (const auto& [seed, hash] : by_seed) refs[cat][std::to_string(seed)] = hash;
  run["references"] = refs;
  j["_run"] = run;
  return j;
}

std::vector<BenchRow> run_bench(const Encoder& encoder, const ImageTensor& img, const ClassPrototypes& prototypes,
                                const ScaleSet& scales, int repeats) {
  if (repeats < 1) throw ContractError("bench needs at least one repeat");
  const EncoderConfig& cfg = encoder.config();
  scales.validate(cfg.grid);
  const int res = cfg.input_resolution;
  const int p = cfg.patch_size;

  auto per_window = [&](auto&& score_window) {
    std::vector<ScoreMap> parts;
    for (int k : scales.active_kernels()) {
      const WindowPlan plan = gen_windows(cfg.grid, k);
      ScoreMap scores(plan.positions.rows, plan.positions.cols);
      for (const auto& m : plan.masks) scores(m.row, m.col) = score_window(m);
      parts.push_back(harmonic_aggregate(scores, plan));
    }
    const double global = zero_shot_score(encoder.encode_image_global(img), prototypes);
    if (scales.use_image) parts.push_back(ScoreMap::Constant(cfg.grid.rows, cfg.grid.cols, global));
    return harmonic_mean_maps(parts);
  };

  const std::vector<std::pair<std::string, std::function<void()>>> variants = {
      {"patch-token", [&] { (void)patch_token_map(encoder, img, prototypes); }},
      {"winclip", [&] { (void)multiscale_zero_shot_map(encoder, img, prototypes, scales); }},
      {"winclip-unbatched",
       [&] {
         (void)per_window([&](const WindowMask& m) {
           return zero_shot_score(encoder.encode_window(img, m), prototypes);
         });
       }},
      {"image-tiling",
       [&] {
         (void)per_window([&](const WindowMask& m) {
           const ImageTensor view = resize_bicubic(crop(img, m.row * p, m.col * p, m.kernel * p, m.kernel * p), res, res);
           return zero_shot_score(encoder.encode_image_global(view), prototypes);
         });
       }},
  };

  std::vector<BenchRow> rows;
  for (const auto& [name, fn] : variants) {
    fn();  // warm-up
    std::vector<double> ms;
    const std::uint64_t before = encoder.token_work();
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    const std::uint64_t tokens = (encoder.token_work() - before) / static_cast<std::uint64_t>(repeats);
    double mean = 0.0;
    for (double v : ms) mean += v;
    mean /= static_cast<double>(ms.size());
    double var = 0.0;
    for (double v : ms) var += (v - mean) * (v - mean);
    rows.push_back({name, mean, std::sqrt(var / static_cast<double>(ms.size())), tokens});
  }
  return rows;
}

}  // namespace winseg
