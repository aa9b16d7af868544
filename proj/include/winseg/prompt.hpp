#pragma once

#include "winseg/encoder.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace winseg {

// State words, each containing the object slot "[o]" exactly once.
struct StateLexicon {
  std::vector<std::string> normal_states;
  std::vector<std::string> anomaly_states;
  // Optional per-task additions, e.g. "[o] with missing part".
  std::vector<std::string> task_specific_normal;
  std::vector<std::string> task_specific_anomaly;

  static StateLexicon defaults();
  void validate() const;
};

// Templates, each containing the state slot "[c]" exactly once.
struct TemplateSet {
  std::vector<std::string> templates;

  static TemplateSet defaults();
  void validate() const;
};

struct PromptSets {
  std::vector<std::string> normal;
  std::vector<std::string> anomaly;
};

struct ClassPrototypes {
  Eigen::VectorXf normal;
  Eigen::VectorXf anomaly;
  int n_normal_prompts = 0;
  int n_anomaly_prompts = 0;
  double temperature = 0.01;
};

struct PromptConfig {
  StateLexicon lexicon = StateLexicon::defaults();
  TemplateSet templates = TemplateSet::defaults();
};

// Loads {"normal_states": [...], "anomaly_states": [...], "templates": [...]}.
// Missing keys keep their defaults; "task_specific_normal" and
// "task_specific_anomaly" are optional.
PromptConfig load_prompt_config(const std::string& path);

// Every state (object slot filled) in every template, state-major.
PromptSets compose_prompts(std::string_view object_label, const StateLexicon& lexicon, const TemplateSet& templates);

// Embeds, L2-normalizes and averages each class, then re-normalizes the mean.
ClassPrototypes build_prototypes(const PromptSets& prompts, const TextEncoder& encoder, double temperature = 0.01);

// Anomaly-class probability of the two-way softmax over prototype similarities.
double zero_shot_score(const Eigen::Ref<const Eigen::VectorXf>& image_embedding, const ClassPrototypes& prototypes);

// -<f, normal>: the one-class baseline.
double one_class_score(const Eigen::Ref<const Eigen::VectorXf>& image_embedding, const ClassPrototypes& prototypes);

// sigmoid((s_anomaly - s_normal) / temperature), stable for large arguments.
double binary_softmax(double s_anomaly, double s_normal, double temperature);

}  // namespace winseg
