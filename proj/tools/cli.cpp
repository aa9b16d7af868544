#include "cli.hpp"

#include "winseg/image.hpp"
#include "winseg/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace winseg::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "UsageError";
  if (dynamic_cast<const ContractError*>(&e)) return "ContractError";
  if (dynamic_cast<const SlotError*>(&e)) return "SlotError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const CoverageError*>(&e)) return "CoverageError";
  if (dynamic_cast<const DegenerateInputError*>(&e)) return "DegenerateInputError";
  if (dynamic_cast<const EncoderError*>(&e)) return "EncoderError";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const ManifestError*>(&e)) return "ManifestError";
  return "Error";
}

int report_error(std::ostream& err, const std::string& kind, const std::string& message, int code) {
  err << ojson{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
  return code;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto dash = item.find('-', 1);
    try {
      std::size_t used = 0;
      if (dash != std::string::npos) {
        const long long lo = std::stoll(item.substr(0, dash), &used);
        const long long hi = std::stoll(item.substr(dash + 1));
        if (used != dash || lo > hi) throw std::invalid_argument(item);
        for (long long v = lo; v <= hi; ++v) values.push_back(static_cast<T>(v));
      } else {
        const long long v = std::stoll(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
        values.push_back(static_cast<T>(v));
      }
    } catch (const std::logic_error&) {
      throw UsageError(std::string("bad value '") + item + "' for " + flag);
    }
    if (values.back() < T{0}) throw UsageError(std::string(flag) + " values must be non-negative");
  }
  if (values.empty()) throw UsageError(std::string(flag) + " needs at least one value");
  return values;
}

// Flag values shared by the subcommands, before interpretation.
struct Flags {
  std::string model;
  std::string object;
  std::string lexicon;
  std::string scales = "2,3,img";
  double tau = 0.01;
  bool multicrop = false;
  double fusion_weight = 0.5;
  bool no_language = false;
  int k = 1;
  std::string seeds = "0,1,2,3,4";
  std::string shots = "0,1,2,4";
  std::string layout = "mvtec";
  std::string root;
  std::string out;
  int jobs = 1;
  std::vector<std::string> categories;

  std::vector<std::string> images;
  std::vector<std::string> refs;
  std::string heatmap;
  std::string heatmap_dir;
  std::string memory;
  std::string save_memory;
  int repeats = 5;
};

void add_model_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--model", f.model, "Model directory or reference:<seed> (default: $WINSEG_MODEL_DIR, else reference:0)");
  cmd->add_option("--object", f.object, "Object label used in prompts");
  cmd->add_option("--lexicon", f.lexicon, "JSON file with normal_states / anomaly_states / templates");
  cmd->add_option("--tau", f.tau, "Softmax temperature")->capture_default_str();
}

void add_scoring_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--scales", f.scales, "Window kernels and 'img', comma separated")->capture_default_str();
  cmd->add_flag("--multicrop", f.multicrop, "Average the image score over center and corner crops");
}

void add_fewshot_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--fusion-weight", f.fusion_weight, "Weight of the reference map in the fused map")
      ->capture_default_str();
  cmd->add_flag("--no-language", f.no_language, "Use the reference memory alone");
}

RunConfig interpret(const Flags& f) {
  RunConfig c;
  if (!f.model.empty()) {
    c.model = f.model;
  } else if (const char* env = std::getenv("WINSEG_MODEL_DIR"); env && *env) {
    c.model = env;
  }
  c.object = f.object;
  c.lexicon = f.lexicon;
  try {
    c.scales = parse_scales(f.scales);
    c.layout = parse_layout(f.layout);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  c.temperature = f.tau;
  if (f.multicrop) c.crops.kind = CropScheme::Kind::FiveCrop;
  c.fusion_weight = f.fusion_weight;
  c.use_language = !f.no_language;
  c.seeds = parse_list<std::uint64_t>(f.seeds, "--seeds");
  c.shots = parse_list<int>(f.shots, "--shots");
  c.dataset_root = f.root;
  c.categories = f.categories;
  c.out = f.out;
  c.jobs = f.jobs;
  return c;
}

std::unique_ptr<Encoder> open_encoder(const RunConfig& c) {
  auto encoder = load_encoder(c.model);
  try {
    c.validate(encoder->config());
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  return encoder;
}

ojson run_record(const RunConfig& c, const Encoder& encoder) {
  return {{"config", c.to_json()}, {"encoder", encoder.fingerprint()}};
}

ScoreMap to_original(const ScoreMap& map, int rows, int cols) {
  if (map.rows() == rows && map.cols() == cols) return map;
  return resize_bilinear(map, rows, cols).max(0.0).min(1.0);
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

int cmd_prompts(const Flags& f, std::ostream& out) {
  const RunConfig c = interpret(f);
  const PromptSets p = run_prompts(c, "object");
  for (const auto& s : p.normal) out << "normal\t" << s << "\n";
  for (const auto& s : p.anomaly) out << "anomaly\t" << s << "\n";
  return 0;
}

int cmd_score(const Flags& f, std::ostream& out) {
  const RunConfig c = interpret(f);
  const auto encoder = open_encoder(c);
  const PreprocessSpec spec{encoder->config().input_resolution};
  const ClassPrototypes protos = run_prototypes(c, *encoder, "object");
  ojson results = ojson::array();
  for (const auto& path : f.images) {
    const PreprocessedImage pre = preprocess(fs::path(path), spec);
    const MergedPrediction m = predict_zero_shot(*encoder, pre.tensor, protos, c.scales, c.crops);
    ojson r{{"image", path}, {"score", m.score}, {"height", pre.original_height}, {"width", pre.original_width}};
    fs::path heatmap;
    if (!f.heatmap.empty() && f.images.size() == 1) heatmap = f.heatmap;
    if (!f.heatmap_dir.empty()) heatmap = fs::path(f.heatmap_dir) / (fs::path(path).stem().string() + "_heatmap.png");
    if (!heatmap.empty()) {
      ensure_parent(heatmap);
      export_heatmap(to_original(m.map, pre.original_height, pre.original_width), heatmap);
      r["heatmap"] = heatmap.string();
    }
    results.push_back(r);
  }
  ojson doc = results.size() == 1 ? results[0] : ojson{{"results", results}};
  doc["_run"] = run_record(c, *encoder);
  out << doc.dump(2) << "\n";
  return 0;
}

int cmd_fewshot(const Flags& f, std::ostream& out) {
  const RunConfig c = interpret(f);
  const auto encoder = open_encoder(c);
  const PreprocessSpec spec{encoder->config().input_resolution};
  const int sources = (!f.memory.empty()) + (!f.refs.empty()) + (!f.root.empty());
  if (sources != 1) throw UsageError("give exactly one of --memory, --ref or --root");

  ReferenceMemory memory;
  std::string object_label = "object";
  if (!f.memory.empty()) {
    memory = load_memory(f.memory);
  } else {
    std::vector<fs::path> paths;
    std::vector<std::string> ids;
    std::uint64_t seed = 0;
    if (!f.refs.empty()) {
      for (const auto& r : f.refs) {
        paths.emplace_back(r);
        ids.push_back(fs::path(r).filename().string());
      }
    } else {
      if (f.categories.size() != 1) throw UsageError("--root needs exactly one --category");
      if (f.k < 1) throw UsageError("--k must be at least 1");
      const DatasetManifest manifest = load_manifest(c.dataset_root, c.layout);
      object_label = manifest.category(f.categories[0]).object_label;
      seed = c.seeds.front();
      ids = sample_references(manifest, f.categories[0], static_cast<std::size_t>(f.k), seed);
      for (const auto& id : ids) paths.push_back(manifest.root / id);
    }
    std::vector<ImageTensor> refs;
    for (const auto& p : paths) refs.push_back(preprocess(p, spec).tensor);
    memory = build_memory_from_images(refs, *encoder, c.scales);
    memory.image_ids = ids;
    memory.seed = seed;
    memory.scales = c.scales;
  }
  if (!f.save_memory.empty()) {
    ensure_parent(f.save_memory);
    save_memory(memory, f.save_memory);
  }

  const ClassPrototypes protos = run_prototypes(c, *encoder, object_label);
  ojson results = ojson::array();
  for (const auto& path : f.images) {
    const PreprocessedImage pre = preprocess(fs::path(path), spec);
    const MergedPrediction m = predict_few_shot(*encoder, pre.tensor, memory, protos, c.scales, c.few_shot());
    ojson r{{"image", path}, {"score", m.score}, {"height", pre.original_height}, {"width", pre.original_width}};
    if (!f.heatmap_dir.empty()) {
      const fs::path heatmap = fs::path(f.heatmap_dir) / (fs::path(path).stem().string() + "_heatmap.png");
      ensure_parent(heatmap);
      export_heatmap(to_original(m.map, pre.original_height, pre.original_width), heatmap);
      r["heatmap"] = heatmap.string();
    }
    results.push_back(r);
  }
  ojson doc{{"results", results},
            {"memory",
             {{"shots", memory.shots},
              {"image_ids", memory.image_ids},
              {"reference_hash", hash_ids(memory.image_ids)},
              {"seed", memory.seed}}}};
  doc["_run"] = run_record(c, *encoder);
  out << doc.dump(2) << "\n";
  return 0;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const RunConfig c = interpret(f);
  if (c.dataset_root.empty()) throw UsageError("eval needs --root");
  if (c.out.empty()) throw UsageError("eval needs --out");
  const auto encoder = open_encoder(c);
  const DatasetManifest manifest = load_manifest(c.dataset_root, c.layout);
  const std::vector<ShotReport> reports = run_eval(manifest, *encoder, c);

  ojson summary{{"reports", ojson::array()}};
  for (const auto& r : reports) {
    const fs::path base = fs::path(c.out) / ("eval_shot" + std::to_string(r.shots));
    const ojson doc = shot_report_json(r, c, *encoder);
    write_text(base.string() + ".json", doc.dump(2) + "\n");
    write_text(base.string() + ".csv", r.report.to_csv());
    ojson mean;
    for (const auto& [metric, s] : r.report.table.at(kMeanRow)) mean[metric] = {{"mean", s.mean}, {"std", s.std}};
    summary["reports"].push_back(
        {{"shots", r.shots}, {"json", base.string() + ".json"}, {"csv", base.string() + ".csv"}, {"mean", mean}});
  }
  summary["_run"] = run_record(c, *encoder);
  out << summary.dump(2) << "\n";
  return 0;
}

// Deterministic smooth test pattern at the encoder resolution.
ImageTensor bench_image(int res) {
  ImageTensor img = ImageTensor::zeros(res, res);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < res; ++r)
      for (int col = 0; col < res; ++col)
        img.planes[static_cast<std::size_t>(ch)](r, col) =
            static_cast<float>(std::sin(0.05 * r * (ch + 1)) * std::cos(0.07 * col + ch));
  return img;
}

int cmd_bench(const Flags& f, std::ostream& out) {
  const RunConfig c = interpret(f);
  if (f.repeats < 1) throw UsageError("--repeats must be at least 1");
  const auto encoder = open_encoder(c);
  const int res = encoder->config().input_resolution;
  ImageTensor img = bench_image(res);
  if (!f.images.empty()) {
    img = preprocess(fs::path(f.images.front()), PreprocessSpec{res}).tensor;
    if (img.height() != res || img.width() != res) img = resize_bicubic(img, res, res);
  }
  const ClassPrototypes protos = run_prototypes(c, *encoder, "object");
  const std::vector<BenchRow> rows = run_bench(*encoder, img, protos, c.scales, f.repeats);

  ojson table = ojson::array();
  double batched = 0.0, tiling = 0.0;
  for (const auto& r : rows) {
    table.push_back({{"name", r.name}, {"ms_mean", r.ms_mean}, {"ms_std", r.ms_std}, {"tokens", r.tokens}});
    if (r.name == "winclip") batched = r.ms_mean;
    if (r.name == "image-tiling") tiling = r.ms_mean;
  }
  ojson doc{{"rows", table}, {"repeats", f.repeats}, {"tiling_over_winclip", batched > 0 ? tiling / batched : 0.0}};
  doc["_run"] = run_record(c, *encoder);
  if (!c.out.empty()) write_text(c.out, doc.dump(2) + "\n");
  out << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero- and few-shot anomaly classification and segmentation", "winseg"};
  app.require_subcommand(1);
  Flags f;

  auto* prompts = app.add_subcommand("prompts", "Print the composed prompt lists, one per line");
  add_model_flags(prompts, f);

  auto* score = app.add_subcommand("score", "Zero-shot score and heatmap for images");
  add_model_flags(score, f);
  add_scoring_flags(score, f);
  score->add_option("--image", f.images, "Input image(s)")->required();
  score->add_option("--heatmap", f.heatmap, "16-bit PNG heatmap path (single image)");
  score->add_option("--heatmap-dir", f.heatmap_dir, "Directory for per-image heatmaps");

  auto* fewshot = app.add_subcommand("fewshot", "Score images against a reference memory");
  add_model_flags(fewshot, f);
  add_scoring_flags(fewshot, f);
  add_fewshot_flags(fewshot, f);
  fewshot->add_option("--image", f.images, "Query image(s)")->required();
  fewshot->add_option("--ref", f.refs, "Normal reference image(s)");
  fewshot->add_option("--memory", f.memory, "Load a saved memory container");
  fewshot->add_option("--save-memory", f.save_memory, "Write the memory container here");
  fewshot->add_option("--root", f.root, "Dataset root to sample references from");
  fewshot->add_option("--dataset-layout", f.layout, "mvtec or visa")->capture_default_str();
  fewshot->add_option("--category", f.categories, "Category to sample references from");
  fewshot->add_option("--k", f.k, "Number of sampled references")->capture_default_str();
  fewshot->add_option("--seeds", f.seeds, "Sampling seed (first value used)")->capture_default_str();
  fewshot->add_option("--heatmap-dir", f.heatmap_dir, "Directory for per-image heatmaps");

  auto* eval = app.add_subcommand("eval", "Evaluate a dataset over shots and seeds");
  add_model_flags(eval, f);
  add_scoring_flags(eval, f);
  add_fewshot_flags(eval, f);
  eval->add_option("--root", f.root, "Dataset root")->required();
  eval->add_option("--dataset-layout", f.layout, "mvtec or visa")->capture_default_str();
  eval->add_option("--category", f.categories, "Restrict to these categories");
  eval->add_option("--shots", f.shots, "Shot counts, e.g. 0,1,2,4")->capture_default_str();
  eval->add_option("--seeds", f.seeds, "Seeds, e.g. 0,1,2,3,4 or 0-4")->capture_default_str();
  eval->add_option("--out", f.out, "Report directory")->required();
  eval->add_option("--jobs", f.jobs, "Parallel workers")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Per-image latency and token work of segmentation variants");
  add_model_flags(bench, f);
  add_scoring_flags(bench, f);
  bench->add_option("--image", f.images, "Image to time (default: synthetic pattern)");
  bench->add_option("--repeats", f.repeats, "Timed repetitions per variant")->capture_default_str();
  bench->add_option("--out", f.out, "Also write the JSON report here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "UsageError", e.what(), 2);
  }

  try {
    if (prompts->parsed()) return cmd_prompts(f, out);
    if (score->parsed()) return cmd_score(f, out);
    if (fewshot->parsed()) return cmd_fewshot(f, out);
    if (eval->parsed()) return cmd_eval(f, out);
    return cmd_bench(f, out);
  } catch (const UsageError& e) {
    return report_error(err, "UsageError", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error(err, error_kind(e), e.what(), 1);
  }
}

}  // namespace winseg::cli
