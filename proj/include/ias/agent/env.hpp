#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "ias/core/random.hpp"
#include "ias/text/codec.hpp"
#include "ias/world/render.hpp"

namespace ias::agent {

enum class Action { up, down, left, right, lift, noop };
inline constexpr int kNumActions = 6;

inline std::string_view name(Action a) {
  static constexpr std::string_view names[] = {"up", "down", "left", "right", "lift", "noop"};
  return names[static_cast<int>(a)];
}

enum class Task { lift, ask_color };

inline std::string_view name(Task t) { return t == Task::lift ? "lift" : "ask_color"; }

struct EnvConfig {
  int room_size = 5;
  int view_size = 4;  // avatar-centred window, avatar at view cell (view_size / 2, view_size / 2)
  int min_objects = 2;
  int max_objects = 4;
  int max_delay = 5;
  int timeout = 100;
  std::vector<world::Shape> shapes{world::kAllShapes.begin(), world::kAllShapes.end()};
  std::vector<world::Color> colors{world::kAllColors.begin(), world::kAllColors.end()};

  void validate() const {
    if (room_size < 2 || view_size < 2 || view_size > room_size) throw ConfigError("env config: bad room or view size");
    if (min_objects < 1 || max_objects < min_objects || max_objects >= room_size * room_size)
      throw ConfigError("env config: bad object count range");
    if (max_delay < 0 || timeout < 1) throw ConfigError("env config: bad delay or timeout");
    if (shapes.size() < 2 || colors.empty()) throw ConfigError("env config: need two shapes and a color");
  }

  // World the view images live in; the captioner is trained on it.
  world::WorldConfig view_world() const {
    world::WorldConfig w;
    w.grid_size = view_size;
    w.shapes = shapes;
    w.colors = colors;
    w.max_objects = std::min(4, view_size * view_size);
    return w;
  }
};

inline std::string instruction_text(Task task, world::Shape s) {
  if (task == Task::lift) return "lift the " + std::string(world::name(s));
  return "what is the color of the " + std::string(world::name(s));
}

// One episode's initial conditions.
struct EpisodeSpec {
  std::uint64_t seed = 0;
  Task task = Task::lift;
  world::Shape target = world::Shape::box;
  world::SceneSpec room;
  int avatar_row = 0;
  int avatar_col = 0;
  int delay = 0;
  friend bool operator==(const EpisodeSpec&, const EpisodeSpec&) = default;
};

// Room with exactly one object of the target shape; the other objects use the
// remaining shapes (`exclude` shapes are never placed as distractors). The
// avatar starts on an empty cell.
inline EpisodeSpec make_episode(std::uint64_t seed, const EnvConfig& cfg, Task task, world::Shape target,
                                const std::vector<world::Shape>& exclude = {}) {
  cfg.validate();
  Rng rng(seed);
  EpisodeSpec e;
  e.seed = seed;
  e.task = task;
  e.target = target;
  e.room.grid_size = cfg.room_size;
  std::vector<world::Shape> others;
  for (auto s : cfg.shapes)
    if (s != target && std::find(exclude.begin(), exclude.end(), s) == exclude.end()) others.push_back(s);
  require(!others.empty(), "make_episode: no distractor shapes");
  const int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  const int cells = cfg.room_size * cfg.room_size;
  std::vector<int> order(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  for (int k = 0; k < count; ++k) {
    world::Object o;
    o.row = order[static_cast<std::size_t>(k)] / cfg.room_size;
    o.col = order[static_cast<std::size_t>(k)] % cfg.room_size;
    o.shape = k == 0 ? target : others[rng.below(others.size())];
    o.color = cfg.colors[rng.below(cfg.colors.size())];
    e.room.objects.push_back(o);
  }
  const int start = order[static_cast<std::size_t>(count)];
  e.avatar_row = start / cfg.room_size;
  e.avatar_col = start % cfg.room_size;
  e.delay = rng.uniform_int(0, cfg.max_delay);
  return e;
}

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  Env(const EnvConfig& cfg, EpisodeSpec spec) : cfg_(cfg), spec_(std::move(spec)) {
    avatar_row_ = spec_.avatar_row;
    avatar_col_ = spec_.avatar_col;
  }

  const EnvConfig& config() const { return cfg_; }
  const EpisodeSpec& spec() const { return spec_; }
  int avatar_row() const { return avatar_row_; }
  int avatar_col() const { return avatar_col_; }
  int step_count() const { return step_count_; }
  bool done() const { return done_; }
  double reward() const { return reward_; }
  std::optional<int> held_object() const { return held_; }

  bool instruction_visible() const { return step_count_ >= spec_.delay; }
  std::string instruction() const {
    return instruction_visible() ? instruction_text(spec_.task, spec_.target) : std::string();
  }

  int object_at(int row, int col) const {
    const auto& objs = spec_.room.objects;
    for (std::size_t i = 0; i < objs.size(); ++i)
      if (objs[i].row == row && objs[i].col == col) return static_cast<int>(i);
    return -1;
  }

  int target_index() const {
    const auto& objs = spec_.room.objects;
    for (std::size_t i = 0; i < objs.size(); ++i)
      if (objs[i].shape == spec_.target) return static_cast<int>(i);
    return -1;
  }

  // Room cell shown at view cell (i, j).
  std::pair<int, int> view_to_room(int i, int j) const {
    const int c = cfg_.view_size / 2;
    return {avatar_row_ - c + i, avatar_col_ - c + j};
  }

  bool in_room(int r, int c) const { return r >= 0 && c >= 0 && r < cfg_.room_size && c < cfg_.room_size; }

  bool visible(int object) const {
    const auto& o = spec_.room.objects[static_cast<std::size_t>(object)];
    const int c = cfg_.view_size / 2;
    const int i = o.row - avatar_row_ + c, j = o.col - avatar_col_ + c;
    return i >= 0 && j >= 0 && i < cfg_.view_size && j < cfg_.view_size;
  }

  // Objects inside the avatar-centred window, as a view-sized scene.
  world::SceneSpec view_scene() const {
    world::SceneSpec v;
    v.grid_size = cfg_.view_size;
    for (int i = 0; i < cfg_.view_size; ++i)
      for (int j = 0; j < cfg_.view_size; ++j) {
        const auto [r, c] = view_to_room(i, j);
        if (!in_room(r, c)) continue;
        const int k = object_at(r, c);
        if (k < 0 || (held_ && *held_ == k)) continue;
        world::Object o = spec_.room.objects[static_cast<std::size_t>(k)];
        o.row = i;
        o.col = j;
        v.objects.push_back(o);
      }
    return v;
  }

  // Rendered view; cells outside the room are black.
  world::Image observe() const {
    world::Image img = world::render(view_scene());
    for (int i = 0; i < cfg_.view_size; ++i)
      for (int j = 0; j < cfg_.view_size; ++j) {
        const auto [r, c] = view_to_room(i, j);
        if (in_room(r, c)) continue;
        for (int y = 0; y < world::kCellPixels; ++y)
          for (int x = 0; x < world::kCellPixels; ++x)
            for (int ch = 0; ch < 3; ++ch) img.at(i * world::kCellPixels + y, j * world::kCellPixels + x, ch) = 0.0f;
      }
    return img;
  }

  // Applies the utterance (empty = silence) and then the movement action.
  StepResult step(Action a, const std::string& utterance = {}) {
    require(!done_, "Env::step: episode already finished");
    const auto words = text::split_words(utterance);
    if (!words.empty() && spec_.task == Task::ask_color) {
      const auto target = spec_.room.objects[static_cast<std::size_t>(target_index())];
      const bool correct = std::find(words.begin(), words.end(), std::string(world::name(target.color))) != words.end();
      return finish(correct ? 1.0 : 0.0);
    }
    switch (a) {
      case Action::up: move(-1, 0); break;
      case Action::down: move(1, 0); break;
      case Action::left: move(0, -1); break;
      case Action::right: move(0, 1); break;
      case Action::lift: {
        const int k = object_at(avatar_row_, avatar_col_);
        if (k >= 0) {
          held_ = k;
          const bool ok = spec_.task == Task::lift && spec_.room.objects[static_cast<std::size_t>(k)].shape == spec_.target;
          return finish(ok ? 1.0 : 0.0);
        }
        break;
      }
      case Action::noop: break;
    }
    if (++step_count_ >= cfg_.timeout) {
      done_ = true;
      return {0.0, true};
    }
    return {0.0, false};
  }

 private:
  void move(int dr, int dc) {
    if (in_room(avatar_row_ + dr, avatar_col_ + dc)) {
      avatar_row_ += dr;
      avatar_col_ += dc;
    }
  }

  StepResult finish(double r) {
    ++step_count_;
    done_ = true;
    reward_ = r;
    return {r, true};
  }

  EnvConfig cfg_;
  EpisodeSpec spec_;
  int avatar_row_ = 0, avatar_col_ = 0;
  int step_count_ = 0;
  bool done_ = false;
  double reward_ = 0.0;
  std::optional<int> held_;
};

}  // namespace ias::agent
