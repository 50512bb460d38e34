#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ias/agent/env.hpp"
#include "ias/world/dataset_io.hpp"

namespace ias::agent {

struct ExpertStep {
  Action action = Action::noop;
  std::string utterance;  // empty = silence
  friend bool operator==(const ExpertStep&, const ExpertStep&) = default;
};

struct Trajectory {
  EpisodeSpec episode;
  std::vector<ExpertStep> steps;
  double reward = 0.0;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// First action in enum order that brings the avatar closer to (row, col).
inline Action toward(const Env& env, int row, int col) {
  if (row < env.avatar_row()) return Action::up;
  if (row > env.avatar_row()) return Action::down;
  if (col < env.avatar_col()) return Action::left;
  if (col > env.avatar_col()) return Action::right;
  return Action::noop;
}

// Expert policy for the current state: waits for the instruction, then walks
// the shortest path and lifts (lift), or walks until the target is in view
// and names its color (ask-color).
inline ExpertStep expert_action(const Env& env) {
  if (!env.instruction_visible()) return {Action::noop, {}};
  const int k = env.target_index();
  const auto& o = env.spec().room.objects[static_cast<std::size_t>(k)];
  if (env.spec().task == Task::lift) {
    if (o.row == env.avatar_row() && o.col == env.avatar_col()) return {Action::lift, {}};
    return {toward(env, o.row, o.col), {}};
  }
  if (env.visible(k)) return {Action::noop, std::string(world::name(o.color))};
  return {toward(env, o.row, o.col), {}};
}

// Rolls the expert out; unsolvable instructions (target absent) give nullopt.
inline std::optional<Trajectory> scripted_expert(const EnvConfig& cfg, const EpisodeSpec& spec) {
  Env env(cfg, spec);
  if (env.target_index() < 0) return std::nullopt;
  Trajectory tr;
  tr.episode = spec;
  while (!env.done()) {
    const ExpertStep s = expert_action(env);
    tr.steps.push_back(s);
    tr.reward = env.step(s.action, s.utterance).reward;
  }
  return tr;
}

// Replays recorded actions and returns the reward.
inline double replay(const EnvConfig& cfg, const Trajectory& tr) {
  Env env(cfg, tr.episode);
  double r = 0.0;
  for (const auto& s : tr.steps) {
    require(!env.done(), "replay: trajectory continues past the end of the episode");
    r = env.step(s.action, s.utterance).reward;
  }
  return r;
}

struct DemoConfig {
  int episodes = 20000;
  std::uint64_t seed = 0;
  double ask_fraction = 0.5;
  // Shape never used as an instruction target unless include_novel is set;
  // it may still appear as a distractor.
  std::optional<world::Shape> novel_shape = world::Shape::drum;
  bool include_novel = false;
};

inline std::vector<world::Shape> target_shapes(const EnvConfig& env, const DemoConfig& cfg) {
  std::vector<world::Shape> out;
  for (auto s : env.shapes)
    if (cfg.include_novel || !cfg.novel_shape || s != *cfg.novel_shape) out.push_back(s);
  return out;
}

inline std::vector<Trajectory> generate_demonstrations(const EnvConfig& env, const DemoConfig& cfg) {
  env.validate();
  const auto targets = target_shapes(env, cfg);
  require(!targets.empty(), "generate_demonstrations: no target shapes");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(cfg.episodes));
  for (std::uint64_t i = 0; static_cast<int>(out.size()) < cfg.episodes; ++i) {
    const std::uint64_t seed = derive_seed(cfg.seed, i);
    Rng rng(derive_seed(seed, "task"));
    const Task task = rng.bernoulli(cfg.ask_fraction) ? Task::ask_color : Task::lift;
    const world::Shape target = targets[rng.below(targets.size())];
    auto tr = scripted_expert(env, make_episode(seed, env, task, target));
    if (tr) out.push_back(std::move(*tr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Demonstration file: one JSON record per line with the episode's initial
// conditions and the action sequence.

inline nlohmann::json to_json(const Trajectory& tr) {
  nlohmann::json actions = nlohmann::json::array(), utterances = nlohmann::json::array();
  for (const auto& s : tr.steps) {
    actions.push_back(std::string(name(s.action)));
    utterances.push_back(s.utterance);
  }
  const auto& e = tr.episode;
  return {{"seed", e.seed},
          {"task", std::string(name(e.task))},
          {"target", std::string(world::name(e.target))},
          {"room", world::scene_to_json(e.room)},
          {"avatar", {e.avatar_row, e.avatar_col}},
          {"delay", e.delay},
          {"instruction", instruction_text(e.task, e.target)},
          {"actions", actions},
          {"utterances", utterances},
          {"reward", tr.reward}};
}

inline Action parse_action(const std::string& s) {
  for (int a = 0; a < kNumActions; ++a)
    if (name(static_cast<Action>(a)) == s) return static_cast<Action>(a);
  throw DataError("unknown action: " + s);
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory tr;
  auto& e = tr.episode;
  e.seed = j.at("seed").get<std::uint64_t>();
  const auto task = j.at("task").get<std::string>();
  if (task != "lift" && task != "ask_color") throw DataError("unknown task: " + task);
  e.task = task == "lift" ? Task::lift : Task::ask_color;
  const auto target = world::parse_shape(j.at("target").get<std::string>());
  if (!target) throw DataError("unknown target shape");
  e.target = *target;
  e.room = world::scene_from_json(j.at("room"), 0);
  e.avatar_row = j.at("avatar").at(0).get<int>();
  e.avatar_col = j.at("avatar").at(1).get<int>();
  e.delay = j.at("delay").get<int>();
  const auto& actions = j.at("actions");
  const auto& utterances = j.at("utterances");
  if (actions.size() != utterances.size()) throw DataError("demonstration: action and utterance counts differ");
  for (std::size_t i = 0; i < actions.size(); ++i)
    tr.steps.push_back({parse_action(actions[i].get<std::string>()), utterances[i].get<std::string>()});
  tr.reward = j.at("reward").get<double>();
  return tr;
}

inline void save_demonstrations(const std::vector<Trajectory>& demos, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& tr : demos) out << to_json(tr).dump() << '\n';
}

inline std::vector<Trajectory> load_demonstrations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(trajectory_from_json(nlohmann::json::parse(line)));
  return out;
}

}  // namespace ias::agent
