#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "ias/core/error.hpp"
#include "ias/core/random.hpp"
#include "ias/world/caption_grammar.hpp"
#include "ias/world/render.hpp"
#include "ias/world/scene.hpp"

namespace ias::world {

struct DataConfig {
  WorldConfig world;
  std::uint64_t master_seed = 0;
  int n_unpaired = 50000;
  // Labeled examples without the novel shape.
  int n_paired = 585;
  int n_validation = 1000;
  // Size of the captioned pool the labeled set is filtered from.
  int labeled_pool = 20000;
  std::optional<Shape> novel_shape;
  // Labeled examples re-introduced whose caption mentions the novel shape.
  int novel_quota = 0;

  void validate() const {
    world.validate();
    if (n_unpaired < 0 || n_paired < 0 || n_validation < 0 || novel_quota < 0 || labeled_pool < 0)
      throw ConfigError("data config: sizes must be non-negative");
    if (novel_quota > 0 && !novel_shape) throw ConfigError("data config: quota without novel shape");
  }
};

struct PairedExample {
  std::uint64_t seed = 0;
  SceneSpec scene;
  std::string caption;
  friend bool operator==(const PairedExample&, const PairedExample&) = default;
};

struct UnpairedExample {
  std::uint64_t seed = 0;
  SceneSpec scene;
  friend bool operator==(const UnpairedExample&, const UnpairedExample&) = default;
};

// Immutable after construction. Images are re-rendered from the scene.
struct DatasetBundle {
  DataConfig config;
  std::vector<PairedExample> paired;
  std::vector<UnpairedExample> unpaired;
  std::vector<PairedExample> validation;
  std::optional<Shape> novel_shape;
};

inline bool mentions(const std::string& caption, Shape s) {
  const std::string word(name(s));
  std::size_t pos = 0;
  while ((pos = caption.find(word, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || caption[pos - 1] == ' ';
    const std::size_t end = pos + word.size();
    const bool right_ok = end == caption.size() || caption[end] == ' ';
    if (left_ok && right_ok) return true;
    pos = end;
  }
  return false;
}

inline std::uint64_t caption_seed(std::uint64_t scene_seed) { return derive_seed(scene_seed, "caption"); }

inline PairedExample make_paired(std::uint64_t seed, const WorldConfig& w) {
  PairedExample e;
  e.seed = seed;
  e.scene = generate_scene(seed, w);
  e.caption = reference_caption(e.scene, caption_seed(seed), w.relation_probability);
  return e;
}

inline DatasetBundle build_datasets(const DataConfig& cfg) {
  cfg.validate();
  DatasetBundle b;
  b.config = cfg;
  b.novel_shape = cfg.novel_shape;
  const WorldConfig& w = cfg.world;
  if (cfg.novel_shape && w.shape_index(*cfg.novel_shape) < 0)
    throw DataError("build_datasets: novel shape is not part of the world");

  const std::uint64_t pool_root = derive_seed(cfg.master_seed, "pool");
  std::vector<PairedExample> novel;
  for (int i = 0; i < cfg.labeled_pool; ++i) {
    if (static_cast<int>(b.paired.size()) >= cfg.n_paired && static_cast<int>(novel.size()) >= cfg.novel_quota)
      break;
    PairedExample e = make_paired(derive_seed(pool_root, static_cast<std::uint64_t>(i)), w);
    if (!cfg.novel_shape) {
      b.paired.push_back(std::move(e));
      continue;
    }
    const Shape ns = *cfg.novel_shape;
    if (mentions(e.caption, ns)) {
      if (static_cast<int>(novel.size()) < cfg.novel_quota) novel.push_back(std::move(e));
    } else if (!e.scene.contains(ns)) {
      if (static_cast<int>(b.paired.size()) < cfg.n_paired) b.paired.push_back(std::move(e));
    }
  }
  if (static_cast<int>(b.paired.size()) < cfg.n_paired)
    throw DataError("build_datasets: labeled pool too small for n_paired");
  if (static_cast<int>(novel.size()) < cfg.novel_quota)
    throw DataError("build_datasets: novel quota exceeds available novel-shape captions");
  for (auto& e : novel) b.paired.push_back(std::move(e));

  const std::uint64_t unpaired_root = derive_seed(cfg.master_seed, "unpaired");
  for (std::uint64_t i = 0; static_cast<int>(b.unpaired.size()) < cfg.n_unpaired; ++i) {
    if (i > static_cast<std::uint64_t>(cfg.n_unpaired) * 4 + 1000)
      throw DataError("build_datasets: cannot fill unpaired split");
    UnpairedExample u;
    u.seed = derive_seed(unpaired_root, i);
    u.scene = generate_scene(u.seed, w);
    if (cfg.novel_shape) {
      // The novel shape may appear, but never as the prompted object.
      std::vector<int> allowed;
      for (std::size_t k = 0; k < u.scene.objects.size(); ++k)
        if (u.scene.objects[k].shape != *cfg.novel_shape) allowed.push_back(static_cast<int>(k));
      if (allowed.empty()) continue;
      if (u.scene.prompted().shape == *cfg.novel_shape) {
        Rng rng(derive_seed(u.seed, "reprompt"));
        u.scene.prompted_index = allowed[rng.below(allowed.size())];
      }
    }
    b.unpaired.push_back(std::move(u));
  }

  const std::uint64_t validation_root = derive_seed(cfg.master_seed, "validation");
  std::unordered_set<std::uint64_t> train_seeds;
  for (const auto& e : b.paired) train_seeds.insert(e.seed);
  for (const auto& e : b.unpaired) train_seeds.insert(e.seed);
  for (std::uint64_t i = 0; static_cast<int>(b.validation.size()) < cfg.n_validation; ++i) {
    const std::uint64_t s = derive_seed(validation_root, i);
    if (train_seeds.count(s)) continue;
    b.validation.push_back(make_paired(s, w));
  }
  return b;
}

}  // namespace ias::world
