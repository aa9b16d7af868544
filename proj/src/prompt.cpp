#include "winseg/prompt.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace winseg {

namespace {

void check_slot(const std::string& pattern, std::string_view slot) {
  const auto first = pattern.find(slot);
  if (first == std::string::npos || pattern.find(slot, first + 1) != std::string::npos)
    throw SlotError("pattern '" + pattern + "' must contain " + std::string(slot) + " exactly once");
}

std::string fill(const std::string& pattern, std::string_view slot, std::string_view value) {
  std::string out = pattern;
  out.replace(out.find(slot), slot.size(), value);
  return out;
}

std::vector<std::string> compose_class(std::string_view object_label, const std::vector<std::string>& states,
                                       const std::vector<std::string>& extra, const TemplateSet& templates) {
  std::vector<std::string> out;
  out.reserve((states.size() + extra.size()) * templates.templates.size());
  for (const auto* list : {&states, &extra})
    for (const auto& state : *list) {
      const std::string filled = fill(state, "[o]", object_label);
      for (const auto& t : templates.templates) out.push_back(fill(t, "[c]", filled));
    }
  return out;
}

Eigen::VectorXf mean_direction(const std::vector<std::string>& prompts, const TextEncoder& encoder) {
  Eigen::VectorXd sum;
  for (const auto& p : prompts) {
    Eigen::VectorXf e;
    try {
      e = encoder.encode_text(p);
    } catch (const EncoderError&) {
      throw;
    } catch (const std::exception& ex) {
      throw EncoderError("text encoder failed on '" + p + "': " + ex.what());
    }
    const double n = e.norm();
    if (!(n > 0.0)) throw EncoderError("text encoder returned a zero embedding for '" + p + "'");
    if (sum.size() == 0) sum = Eigen::VectorXd::Zero(e.size());
    if (sum.size() != e.size()) throw EncoderError("text embedding dimension changed at '" + p + "'");
    sum += e.cast<double>() / n;
  }
  const double n = sum.norm();
  if (!(n > 0.0)) throw ContractError("prompt embeddings cancel out; prototype undefined");
  return (sum / n).cast<float>();
}

void check_unit(const Eigen::Ref<const Eigen::VectorXf>& f, const ClassPrototypes& prototypes) {
  if (f.size() != prototypes.normal.size())
    throw ContractError("embedding dimension " + std::to_string(f.size()) + " != prototype dimension " +
                        std::to_string(prototypes.normal.size()));
  const double n = f.cast<double>().norm();
  if (std::abs(n - 1.0) > 1e-4) throw ContractError("image embedding is not unit norm (|f| = " + std::to_string(n) + ")");
}

}  // namespace

StateLexicon StateLexicon::defaults() {
  return {{"[o]", "flawless [o]", "perfect [o]", "unblemished [o]", "[o] without flaw", "[o] without defect",
           "[o] without damage"},
          {"damaged [o]", "[o] with flaw", "[o] with defect", "[o] with damage"},
          {},
          {}};
}

void StateLexicon::validate() const {
  if (normal_states.empty() || anomaly_states.empty()) throw SlotError("state lexicon lists must be non-empty");
  for (const auto* list : {&normal_states, &anomaly_states, &task_specific_normal, &task_specific_anomaly})
    for (const auto& s : *list) check_slot(s, "[o]");
}

TemplateSet TemplateSet::defaults() {
  return {{
      "a cropped photo of the [c].",
      "a cropped photo of a [c].",
      "a close-up photo of a [c].",
      "a close-up photo of the [c].",
      "a bright photo of a [c].",
      "a bright photo of the [c].",
      "a dark photo of the [c].",
      "a dark photo of a [c].",
      "a jpeg corrupted photo of a [c].",
      "a jpeg corrupted photo of the [c].",
      "a blurry photo of the [c].",
      "a blurry photo of a [c].",
      "a photo of a [c].",
      "a photo of the [c].",
      "a photo of a small [c].",
      "a photo of the small [c].",
      "a photo of a large [c].",
      "a photo of the large [c].",
      "a photo of the [c] for visual inspection.",
      "a photo of a [c] for visual inspection.",
      "a photo of the [c] for anomaly detection.",
      "a photo of a [c] for anomaly detection.",
  }};
}

void TemplateSet::validate() const {
  if (templates.empty()) throw SlotError("template list must be non-empty");
  for (const auto& t : templates) check_slot(t, "[c]");
}

PromptConfig load_prompt_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon file '" + path + "'");
  PromptConfig cfg;
  try {
    const auto j = nlohmann::json::parse(in);
    auto read = [&](const char* key, std::vector<std::string>& dst) {
      if (j.contains(key)) dst = j.at(key).get<std::vector<std::string>>();
    };
    read("normal_states", cfg.lexicon.normal_states);
    read("anomaly_states", cfg.lexicon.anomaly_states);
    read("task_specific_normal", cfg.lexicon.task_specific_normal);
    read("task_specific_anomaly", cfg.lexicon.task_specific_anomaly);
    read("templates", cfg.templates.templates);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("malformed lexicon file '" + path + "': " + ex.what());
  }
  cfg.lexicon.validate();
  cfg.templates.validate();
  return cfg;
}

PromptSets compose_prompts(std::string_view object_label, const StateLexicon& lexicon, const TemplateSet& templates) {
  if (object_label.empty()) throw ContractError("object label must be non-empty");
  lexicon.validate();
  templates.validate();
  return {compose_class(object_label, lexicon.normal_states, lexicon.task_specific_normal, templates),
          compose_class(object_label, lexicon.anomaly_states, lexicon.task_specific_anomaly, templates)};
}

ClassPrototypes build_prototypes(const PromptSets& prompts, const TextEncoder& encoder, double temperature) {
  if (prompts.normal.empty() || prompts.anomaly.empty()) throw ContractError("prompt lists must be non-empty");
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  ClassPrototypes p;
  p.normal = mean_direction(prompts.normal, encoder);
  p.anomaly = mean_direction(prompts.anomaly, encoder);
  if (p.normal.size() != p.anomaly.size()) throw EncoderError("class prototypes differ in dimension");
  p.n_normal_prompts = static_cast<int>(prompts.normal.size());
  p.n_anomaly_prompts = static_cast<int>(prompts.anomaly.size());
  p.temperature = temperature;
  return p;
}

double binary_softmax(double s_anomaly, double s_normal, double temperature) {
  const double z = (s_anomaly - s_normal) / temperature;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double zero_shot_score(const Eigen::Ref<const Eigen::VectorXf>& image_embedding, const ClassPrototypes& prototypes) {
  check_unit(image_embedding, prototypes);
  const Eigen::VectorXd f = image_embedding.cast<double>();
  return binary_softmax(f.dot(prototypes.anomaly.cast<double>()), f.dot(prototypes.normal.cast<double>()),
                        prototypes.temperature);
}

double one_class_score(const Eigen::Ref<const Eigen::VectorXf>& image_embedding, const ClassPrototypes& prototypes) {
  check_unit(image_embedding, prototypes);
  return -image_embedding.cast<double>().dot(prototypes.normal.cast<double>());
}

}  // namespace winseg
