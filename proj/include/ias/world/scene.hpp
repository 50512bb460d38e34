#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ias/core/error.hpp"
#include "ias/core/random.hpp"

namespace ias::world {

enum class Shape : std::uint8_t { box, ball, duck, book, plane, train, bear, drum };
enum class Color : std::uint8_t {
  red,
  yellow,
  blue,
  white,
  green,
  pink,
  purple,
  orange,
  aquamarine,
  magenta
};

inline constexpr std::array<Shape, 8> kAllShapes = {Shape::box,   Shape::ball,  Shape::duck,
                                                    Shape::book,  Shape::plane, Shape::train,
                                                    Shape::bear,  Shape::drum};
inline constexpr std::array<Color, 10> kAllColors = {
    Color::red,  Color::yellow, Color::blue,   Color::white,      Color::green,
    Color::pink, Color::purple, Color::orange, Color::aquamarine, Color::magenta};

inline constexpr std::array<std::string_view, 8> kShapeNames = {"box",   "ball",  "duck", "book",
                                                                "plane", "train", "bear", "drum"};
inline constexpr std::array<std::string_view, 10> kColorNames = {
    "red", "yellow", "blue", "white", "green", "pink", "purple", "orange", "aquamarine", "magenta"};

inline std::string_view name(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
inline std::string_view name(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }

inline std::optional<Shape> parse_shape(std::string_view w) {
  for (std::size_t i = 0; i < kShapeNames.size(); ++i)
    if (kShapeNames[i] == w) return static_cast<Shape>(i);
  return std::nullopt;
}

inline std::optional<Color> parse_color(std::string_view w) {
  for (std::size_t i = 0; i < kColorNames.size(); ++i)
    if (kColorNames[i] == w) return static_cast<Color>(i);
  return std::nullopt;
}

struct Object {
  Shape shape = Shape::box;
  Color color = Color::red;
  int row = 0;
  int col = 0;

  friend bool operator==(const Object&, const Object&) = default;
};

struct SceneSpec {
  int grid_size = 4;
  std::vector<Object> objects;
  int prompted_index = 0;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;

  bool contains(Shape s) const {
    return std::any_of(objects.begin(), objects.end(), [s](const Object& o) { return o.shape == s; });
  }

  bool contains(Color c, Shape s) const {
    return std::any_of(objects.begin(), objects.end(),
                       [&](const Object& o) { return o.shape == s && o.color == c; });
  }

  const Object& prompted() const { return objects.at(static_cast<std::size_t>(prompted_index)); }

  // Generated scenes hold 1..max_objects objects; rendering and tokenisation
  // also accept the empty scene.
  void validate(bool allow_empty = false, int max_objects = 4) const {
    require(grid_size >= 1, "SceneSpec: grid_size must be positive");
    const int n = static_cast<int>(objects.size());
    require(allow_empty || n >= 1, "SceneSpec: at least one object required");
    require(n <= max_objects, "SceneSpec: too many objects");
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const Object& o = objects[i];
      require(o.row >= 0 && o.row < grid_size && o.col >= 0 && o.col < grid_size,
              "SceneSpec: object outside the grid");
      for (std::size_t j = 0; j < i; ++j)
        require(objects[j].row != o.row || objects[j].col != o.col, "SceneSpec: cells must be distinct");
    }
    if (n > 0)
      require(prompted_index >= 0 && prompted_index < n, "SceneSpec: prompted_index out of range");
  }
};

struct WorldConfig {
  int grid_size = 4;
  int cell_pixels = 6;
  std::vector<Shape> shapes{kAllShapes.begin(), kAllShapes.end()};
  std::vector<Color> colors{kAllColors.begin(), kAllColors.end()};
  int min_objects = 1;
  int max_objects = 4;
  double relation_probability = 0.5;

  int image_size() const { return grid_size * cell_pixels; }

  void validate() const {
    if (shapes.empty()) throw ConfigError("world config: empty shape set");
    if (colors.empty()) throw ConfigError("world config: empty color set");
    if (grid_size < 1) throw ConfigError("world config: grid_size must be positive");
    if (cell_pixels != 6) throw ConfigError("world config: cell_pixels must be 6");
    if (min_objects < 1 || max_objects < min_objects)
      throw ConfigError("world config: invalid object-count range");
    if (max_objects > 4) throw ConfigError("world config: at most 4 objects per scene");
    if (max_objects > grid_size * grid_size)
      throw ConfigError("world config: grid too small for max objects");
    if (relation_probability < 0.0 || relation_probability > 1.0)
      throw ConfigError("world config: relation_probability outside [0,1]");
  }

  int shape_index(Shape s) const {
    auto it = std::find(shapes.begin(), shapes.end(), s);
    return it == shapes.end() ? -1 : static_cast<int>(it - shapes.begin());
  }
  int color_index(Color c) const {
    auto it = std::find(colors.begin(), colors.end(), c);
    return it == colors.end() ? -1 : static_cast<int>(it - colors.begin());
  }
};

// Deterministic in (seed, config). Object count uniform over the configured
// range, cells drawn without replacement, prompted object uniform.
inline SceneSpec generate_scene(std::uint64_t seed, const WorldConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  SceneSpec s;
  s.grid_size = cfg.grid_size;
  const int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  std::vector<int> cells(static_cast<std::size_t>(cfg.grid_size * cfg.grid_size));
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  for (int k = 0; k < count; ++k) {
    const std::size_t j = static_cast<std::size_t>(k) + rng.below(cells.size() - static_cast<std::size_t>(k));
    std::swap(cells[static_cast<std::size_t>(k)], cells[j]);
    Object o;
    o.row = cells[static_cast<std::size_t>(k)] / cfg.grid_size;
    o.col = cells[static_cast<std::size_t>(k)] % cfg.grid_size;
    o.shape = cfg.shapes[rng.below(cfg.shapes.size())];
    o.color = cfg.colors[rng.below(cfg.colors.size())];
    s.objects.push_back(o);
  }
  s.prompted_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(count)));
  return s;
}

}  // namespace ias::world
