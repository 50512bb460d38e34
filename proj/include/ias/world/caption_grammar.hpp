#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ias/core/random.hpp"
#include "ias/world/scene.hpp"

namespace ias::world {

// Caption grammar:
//   caption  := "a" COLOR SHAPE | "a" COLOR SHAPE RELATION "a" COLOR SHAPE
//   RELATION := "left of" | "right of" | "above" | "below"
// The first object mentioned is always the prompted object.
enum class Relation : std::uint8_t { left_of, right_of, above, below };

inline std::string_view name(Relation r) {
  switch (r) {
    case Relation::left_of: return "left of";
    case Relation::right_of: return "right of";
    case Relation::above: return "above";
    case Relation::below: return "below";
  }
  return "";
}

inline bool holds(Relation r, const Object& a, const Object& b) {
  switch (r) {
    case Relation::left_of: return a.col < b.col;
    case Relation::right_of: return a.col > b.col;
    case Relation::above: return a.row < b.row;
    case Relation::below: return a.row > b.row;
  }
  return false;
}

inline std::vector<Relation> true_relations(const Object& a, const Object& b) {
  std::vector<Relation> out;
  for (Relation r : {Relation::left_of, Relation::right_of, Relation::above, Relation::below})
    if (holds(r, a, b)) out.push_back(r);
  return out;
}

inline std::string describe(const Object& o) {
  return "a " + std::string(name(o.color)) + " " + std::string(name(o.shape));
}

inline std::string describe(const Object& a, Relation r, const Object& b) {
  return describe(a) + " " + std::string(name(r)) + " " + describe(b);
}

inline std::string reference_caption(const SceneSpec& scene, std::uint64_t seed,
                                     double relation_probability = 0.5) {
  scene.validate(false, scene.grid_size * scene.grid_size);
  Rng rng(seed);
  const Object& p = scene.prompted();
  const std::size_t n = scene.objects.size();
  if (n < 2 || !rng.bernoulli(relation_probability)) return describe(p);
  std::size_t k = rng.below(n - 1);
  if (k >= static_cast<std::size_t>(scene.prompted_index)) ++k;
  const Object& q = scene.objects[k];
  const auto rels = true_relations(p, q);
  return describe(p, rels[rng.below(rels.size())], q);
}

// Every string the grammar can produce for this scene (used by tests).
inline std::vector<std::string> admissible_captions(const SceneSpec& scene) {
  std::vector<std::string> out;
  const Object& p = scene.prompted();
  out.push_back(describe(p));
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    if (static_cast<int>(k) == scene.prompted_index) continue;
    for (Relation r : true_relations(p, scene.objects[k])) out.push_back(describe(p, r, scene.objects[k]));
  }
  return out;
}

// Words the grammar and the agent instructions can emit, before sorting.
inline std::vector<std::string> lexicon() {
  std::vector<std::string> words = {"a",    "left", "right", "of",    "above", "below",
                                    "lift", "the",  "what",  "is",    "color"};
  for (auto c : kColorNames) words.emplace_back(c);
  for (auto s : kShapeNames) words.emplace_back(s);
  return words;
}

}  // namespace ias::world
