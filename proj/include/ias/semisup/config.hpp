#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ias/core/error.hpp"

namespace ias::semisup {

enum class Variant { generative, contrastive, supervised };
enum class Baseline { leave_one_out, constant };

inline std::string_view name(Variant v) {
  switch (v) {
    case Variant::generative: return "generative";
    case Variant::contrastive: return "contrastive";
    case Variant::supervised: return "supervised";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "generative") return Variant::generative;
  if (s == "contrastive") return Variant::contrastive;
  if (s == "supervised") return Variant::supervised;
  throw ConfigError("unknown variant: " + std::string(s));
}

inline std::string_view name(Baseline b) { return b == Baseline::leave_one_out ? "leave_one_out" : "constant"; }

inline Baseline parse_baseline(std::string_view s) {
  if (s == "leave_one_out") return Baseline::leave_one_out;
  if (s == "constant") return Baseline::constant;
  throw ConfigError("unknown baseline: " + std::string(s));
}

struct TrainConfig {
  Variant variant = Variant::generative;
  int batch_paired = 128;
  int batch_unpaired = 256;
  int samples_per_image = 4;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double clip_norm = 0.0;  // global-norm clipping, 0 = off
  int max_steps = 2000;
  int eval_every = 50;
  int early_stop_patience = 10;  // evaluations without improvement
  int validation_limit = 1000;   // validation examples used for early stopping
  Baseline baseline = Baseline::leave_one_out;
  double baseline_constant = 0.0;
  bool train_decoder_on_unpaired = true;
  // Prior pretraining.
  double prior_learning_rate = 1e-3;
  int prior_batch = 128;
  int prior_max_steps = 1500;
  int prior_eval_every = 50;
  int prior_patience = 6;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_paired < 1 || batch_unpaired < 1 || samples_per_image < 1)
      throw ConfigError("train config: batch sizes and samples per image must be at least 1");
    if (variant == Variant::contrastive && batch_unpaired < 2)
      throw ConfigError("train config: contrastive variant needs batch_unpaired > 1");
    if (variant != Variant::supervised && baseline == Baseline::leave_one_out && samples_per_image < 2)
      throw ConfigError("train config: leave-one-out baseline needs samples_per_image >= 2");
    if (!(learning_rate > 0.0) || !(prior_learning_rate > 0.0)) throw ConfigError("train config: learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("train config: betas must be in [0, 1)");
    if (max_steps < 1 || eval_every < 1 || early_stop_patience < 1 || validation_limit < 1)
      throw ConfigError("train config: step counts must be positive");
    if (prior_batch < 1 || prior_max_steps < 1 || prior_eval_every < 1 || prior_patience < 1)
      throw ConfigError("train config: prior settings must be positive");
    if (clip_norm < 0.0) throw ConfigError("train config: clip_norm must be non-negative");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"variant", name(c.variant)},
          {"batch_paired", c.batch_paired},
          {"batch_unpaired", c.batch_unpaired},
          {"samples_per_image", c.samples_per_image},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"clip_norm", c.clip_norm},
          {"max_steps", c.max_steps},
          {"eval_every", c.eval_every},
          {"early_stop_patience", c.early_stop_patience},
          {"validation_limit", c.validation_limit},
          {"baseline", name(c.baseline)},
          {"baseline_constant", c.baseline_constant},
          {"train_decoder_on_unpaired", c.train_decoder_on_unpaired},
          {"prior_learning_rate", c.prior_learning_rate},
          {"prior_batch", c.prior_batch},
          {"prior_max_steps", c.prior_max_steps},
          {"prior_eval_every", c.prior_eval_every},
          {"prior_patience", c.prior_patience},
          {"seed", c.seed}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.is_object()) throw ConfigError("train config: expected an object");
  const nlohmann::json known = to_json(c);
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("train config: unknown key " + k);
  try {
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("baseline")) c.baseline = parse_baseline(j.at("baseline").get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("batch_paired", c.batch_paired);
    get("batch_unpaired", c.batch_unpaired);
    get("samples_per_image", c.samples_per_image);
    get("learning_rate", c.learning_rate);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("clip_norm", c.clip_norm);
    get("max_steps", c.max_steps);
    get("eval_every", c.eval_every);
    get("early_stop_patience", c.early_stop_patience);
    get("validation_limit", c.validation_limit);
    get("baseline_constant", c.baseline_constant);
    get("train_decoder_on_unpaired", c.train_decoder_on_unpaired);
    get("prior_learning_rate", c.prior_learning_rate);
    get("prior_batch", c.prior_batch);
    get("prior_max_steps", c.prior_max_steps);
    get("prior_eval_every", c.prior_eval_every);
    get("prior_patience", c.prior_patience);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace ias::semisup
