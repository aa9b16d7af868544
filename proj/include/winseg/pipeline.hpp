#pragma once

#include "winseg/data.hpp"
#include "winseg/memory.hpp"
#include "winseg/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace winseg {

// Everything that determines a run's numbers. Serialized verbatim into reports.
struct RunConfig {
  std::string model = "reference:0";
  std::string object;   // empty: use the category label
  std::string lexicon;  // JSON lexicon file; empty: built-in lists
  ScaleSet scales;
  double temperature = 0.01;
  CropScheme crops;
  double fusion_weight = 0.5;
  bool use_language = true;  // few-shot runs only
  std::vector<int> shots{0, 1, 2, 4};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string dataset_root;
  DatasetLayout layout = DatasetLayout::MVTec;
  std::vector<std::string> categories;  // empty: all
  std::string out;
  int jobs = 1;

  void validate(const EncoderConfig& encoder) const;
  FewShotConfig few_shot() const;
  nlohmann::ordered_json to_json() const;
};

// "2,3,img" style list: integers are window kernels (at most two, ascending
// becomes small then mid), "img" enables the image scale.
ScaleSet parse_scales(const std::string& text);
std::string format_scales(const ScaleSet& scales);

// Prompt lists and prototypes for one object label under `config`.
PromptSets run_prompts(const RunConfig& config, const std::string& object_label);
ClassPrototypes run_prototypes(const RunConfig& config, const Encoder& encoder, const std::string& object_label);

// The tile views of a preprocessed image, each at the encoder resolution.
struct TiledImage {
  TilePlan plan;
  std::vector<ImageTensor> tiles;
};
TiledImage tile_image(const ImageTensor& img, int resolution);

// Whole-image predictions at the preprocessed resolution, merged over tiles.
MergedPrediction predict_zero_shot(const Encoder& encoder, const ImageTensor& img, const ClassPrototypes& prototypes,
                                   const ScaleSet& scales, const CropScheme& crops = {});
MergedPrediction predict_few_shot(const Encoder& encoder, const ImageTensor& img, const ReferenceMemory& memory,
                                  const ClassPrototypes& prototypes, const ScaleSet& scales,
                                  const FewShotConfig& config = {});

// Memory from every tile of the given preprocessed references; `shots` counts images.
ReferenceMemory build_memory_from_images(std::span<const ImageTensor> refs, const Encoder& encoder,
                                         const ScaleSet& scales);

// Image- and pixel-level metrics of one category run.
inline constexpr const char* kMetricNames[] = {"image_auroc", "image_aupr",  "image_f1max",
                                               "pixel_auroc", "pixel_pro",   "pixel_f1max"};

struct Prediction {
  ScoreMap map;  // preprocessed resolution
  double score = 0.0;
  bool anomalous = false;
  BinaryMask mask;  // same dims as map
};
std::map<std::string, double> category_metrics(std::span<const Prediction> predictions);

struct ShotReport {
  int shots = 0;
  EvalReport report;
  // category -> seed -> hash of the sorted reference ids (few-shot only)
  std::map<std::string, std::map<std::uint64_t, std::string>> reference_hashes;
};

// The evaluation protocol: every category at every requested shot count over
// the seed list. Zero-shot runs are seed independent and are scored once.
std::vector<ShotReport> run_eval(const DatasetManifest& manifest, const Encoder& encoder, const RunConfig& config);

// Report JSON: the category table plus the reserved "_run" key.
nlohmann::ordered_json shot_report_json(const ShotReport& shot, const RunConfig& config, const Encoder& encoder);

struct BenchRow {
  std::string name;
  double ms_mean = 0.0;
  double ms_std = 0.0;
  std::uint64_t tokens = 0;  // per image
};

// Per-image latency of zero-shot segmentation variants on one image:
// patch-token, winclip (batched windows), winclip-unbatched (one forward per
// window) and image-tiling (each window cropped, resized to the encoder
// resolution and run through the full model).
std::vector<BenchRow> run_bench(const Encoder& encoder, const ImageTensor& img, const ClassPrototypes& prototypes,
                                const ScaleSet& scales, int repeats);

}  // namespace winseg
