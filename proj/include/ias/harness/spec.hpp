#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ias/agent/train.hpp"
#include "ias/semisup/trainer.hpp"
#include "ias/world/dataset_io.hpp"

namespace ias::harness {

// Agent side of the zero-shot experiment.
struct AgentSpec {
  agent::EnvConfig env;
  agent::AgentNetConfig net;
  agent::AgentTrainConfig train;
  int demonstrations = 20000;
  int eval_episodes = 1000;
  semisup::Variant captioner_variant = semisup::Variant::generative;
  int low_quota = 150;
  int high_quota = 585;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::vector<semisup::Variant> variants{semisup::Variant::generative, semisup::Variant::contrastive,
                                         semisup::Variant::supervised};
  std::vector<int> labeled_sizes{100, 150, 250, 585, 1500, 4000};
  std::vector<int> novel_quotas{0, 150, 585};
  int seeds = 3;
  std::uint64_t master_seed = 0;
  std::filesystem::path out_dir = "runs";
  world::DataConfig data;
  semisup::TrainConfig captioner;
  nets::NetConfig net;
  world::Shape novel_shape = world::Shape::drum;
  world::Shape control_shape = world::Shape::bear;
  int novel_base_paired = 1500;  // labelled examples without the novel shape
  AgentSpec agent;

  ExperimentSpec() {
    captioner.batch_paired = 64;
    captioner.batch_unpaired = 64;
    captioner.learning_rate = 1e-3;
    captioner.max_steps = 2000;
    captioner.eval_every = 100;
    captioner.early_stop_patience = 4;
    captioner.validation_limit = 500;
    net.width = 64;
    net.heads = 4;
    net.ff_width = 128;
    net.conv_channels = {16, 32, 64};
    agent.net.width = 64;
    agent.net.heads = 2;
    agent.net.ff_width = 128;
    agent.train.steps = 6000;
    agent.train.learning_rate = 2e-3;
  }

  void validate() const {
    if (variants.empty() || labeled_sizes.empty() || novel_quotas.empty()) throw ConfigError("experiment: empty sweep");
    if (seeds < 1) throw ConfigError("experiment: seeds must be at least 1");
    for (int n : labeled_sizes)
      if (n < 1) throw ConfigError("experiment: labelled sizes must be positive");
    for (int q : novel_quotas)
      if (q < 0) throw ConfigError("experiment: novel quotas must be non-negative");
    if (novel_base_paired < 1) throw ConfigError("experiment: novel_base_paired must be positive");
    if (novel_shape == control_shape) throw ConfigError("experiment: novel and control shapes must differ");
    data.validate();
    captioner.validate();
    agent.env.validate();
    agent.train.validate();
    if (agent.demonstrations < 1 || agent.eval_episodes < 1) throw ConfigError("experiment: agent sizes must be positive");
  }

  // Network configuration for captioners of this experiment.
  nets::NetConfig captioner_net(int vocab_size) const {
    nets::NetConfig c = net;
    c.grid_size = data.world.grid_size;
    c.n_shapes = static_cast<int>(data.world.shapes.size());
    c.n_colors = static_cast<int>(data.world.colors.size());
    c.vocab_size = vocab_size;
    return c;
  }
};

inline std::vector<std::string> variant_names(const std::vector<semisup::Variant>& vs) {
  std::vector<std::string> out;
  for (auto v : vs) out.emplace_back(semisup::name(v));
  return out;
}

inline nlohmann::json to_json(const agent::EnvConfig& e) {
  nlohmann::json shapes = nlohmann::json::array(), colors = nlohmann::json::array();
  for (auto s : e.shapes) shapes.push_back(std::string(world::name(s)));
  for (auto c : e.colors) colors.push_back(std::string(world::name(c)));
  return {{"room_size", e.room_size}, {"view_size", e.view_size}, {"min_objects", e.min_objects},
          {"max_objects", e.max_objects}, {"max_delay", e.max_delay}, {"timeout", e.timeout},
          {"shapes", shapes},          {"colors", colors}};
}

inline nlohmann::json to_json(const agent::AgentNetConfig& c) {
  return {{"width", c.width},
          {"heads", c.heads},
          {"ff_width", c.ff_width},
          {"language_layers", c.language_layers},
          {"max_utterance_length", c.max_utterance_length}};
}

inline nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json a{{"env", to_json(s.agent.env)},
                   {"net", to_json(s.agent.net)},
                   {"train", agent::to_json(s.agent.train)},
                   {"demonstrations", s.agent.demonstrations},
                   {"eval_episodes", s.agent.eval_episodes},
                   {"captioner_variant", std::string(semisup::name(s.agent.captioner_variant))},
                   {"low_quota", s.agent.low_quota},
                   {"high_quota", s.agent.high_quota}};
  return {{"name", s.name},
          {"variants", variant_names(s.variants)},
          {"labeled_sizes", s.labeled_sizes},
          {"novel_quotas", s.novel_quotas},
          {"seeds", s.seeds},
          {"master_seed", s.master_seed},
          {"out_dir", s.out_dir.string()},
          {"data", world::to_json(s.data)},
          {"captioner", semisup::to_json(s.captioner)},
          {"net", nets::to_json(s.net)},
          {"novel_shape", std::string(world::name(s.novel_shape))},
          {"control_shape", std::string(world::name(s.control_shape))},
          {"novel_base_paired", s.novel_base_paired},
          {"agent", a}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError(what + ": unknown key " + k);
}

inline world::Shape shape_from(const nlohmann::json& j) {
  const auto s = world::parse_shape(j.get<std::string>());
  if (!s) throw ConfigError("experiment: unknown shape " + j.get<std::string>());
  return *s;
}

}  // namespace detail

inline agent::EnvConfig env_config_from_json(const nlohmann::json& j) {
  agent::EnvConfig e;
  detail::reject_unknown(j, to_json(e), "env config");
  auto get = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  get("room_size", e.room_size);
  get("view_size", e.view_size);
  get("min_objects", e.min_objects);
  get("max_objects", e.max_objects);
  get("max_delay", e.max_delay);
  get("timeout", e.timeout);
  if (j.contains("shapes")) {
    e.shapes.clear();
    for (const auto& s : j.at("shapes")) e.shapes.push_back(detail::shape_from(s));
  }
  if (j.contains("colors")) {
    e.colors.clear();
    for (const auto& c : j.at("colors")) {
      const auto col = world::parse_color(c.get<std::string>());
      if (!col) throw ConfigError("env config: unknown color " + c.get<std::string>());
      e.colors.push_back(*col);
    }
  }
  e.validate();
  return e;
}

inline agent::AgentNetConfig agent_net_from_json(const nlohmann::json& j, agent::AgentNetConfig c) {
  detail::reject_unknown(j, to_json(c), "agent net config");
  auto get = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  get("width", c.width);
  get("heads", c.heads);
  get("ff_width", c.ff_width);
  get("language_layers", c.language_layers);
  get("max_utterance_length", c.max_utterance_length);
  return c;
}

// Missing keys keep the defaults of ExperimentSpec; unknown keys are
// rejected at every level.
inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  detail::reject_unknown(j, to_json(s), "experiment");
  try {
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("variants")) {
      s.variants.clear();
      for (const auto& v : j.at("variants")) s.variants.push_back(semisup::parse_variant(v.get<std::string>()));
    }
    if (j.contains("labeled_sizes")) s.labeled_sizes = j.at("labeled_sizes").get<std::vector<int>>();
    if (j.contains("novel_quotas")) s.novel_quotas = j.at("novel_quotas").get<std::vector<int>>();
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<int>();
    if (j.contains("master_seed")) s.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("out_dir")) s.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("data")) s.data = world::data_config_from_json(j.at("data"));
    if (j.contains("captioner")) {
      nlohmann::json merged = semisup::to_json(s.captioner);
      merged.merge_patch(j.at("captioner"));
      s.captioner = semisup::train_config_from_json(merged);
    }
    if (j.contains("net")) s.net = nets::net_config_from_json(j.at("net"), s.net);
    if (j.contains("novel_shape")) s.novel_shape = detail::shape_from(j.at("novel_shape"));
    if (j.contains("control_shape")) s.control_shape = detail::shape_from(j.at("control_shape"));
    if (j.contains("novel_base_paired")) s.novel_base_paired = j.at("novel_base_paired").get<int>();
    if (j.contains("agent")) {
      const auto& a = j.at("agent");
      detail::reject_unknown(a, to_json(s).at("agent"), "agent spec");
      if (a.contains("env")) s.agent.env = env_config_from_json(a.at("env"));
      if (a.contains("net")) s.agent.net = agent_net_from_json(a.at("net"), s.agent.net);
      if (a.contains("train")) {
        nlohmann::json merged = agent::to_json(s.agent.train);
        merged.merge_patch(a.at("train"));
        s.agent.train = agent::agent_train_config_from_json(merged);
      }
      if (a.contains("demonstrations")) s.agent.demonstrations = a.at("demonstrations").get<int>();
      if (a.contains("eval_episodes")) s.agent.eval_episodes = a.at("eval_episodes").get<int>();
      if (a.contains("captioner_variant"))
        s.agent.captioner_variant = semisup::parse_variant(a.at("captioner_variant").get<std::string>());
      if (a.contains("low_quota")) s.agent.low_quota = a.at("low_quota").get<int>();
      if (a.contains("high_quota")) s.agent.high_quota = a.at("high_quota").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
  s.validate();
  return s;
}

inline ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return experiment_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace ias::harness
