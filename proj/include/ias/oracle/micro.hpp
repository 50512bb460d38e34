#pragma once

#include <vector>

#include "ias/nets/bundle.hpp"
#include "ias/nets/image.hpp"
#include "ias/text/codec.hpp"
#include "ias/world/caption_grammar.hpp"
#include "ias/world/render.hpp"

namespace ias::oracle {

// Every valid caption up to max_len: bodies of 0..max_len-2 tokens drawn
// from the non-reserved ids, shortest first, then lexicographic by id.
inline std::vector<text::Caption> enumerate_captions(int vocab_size, int max_len) {
  require(vocab_size > text::kReserved && max_len >= 2, "enumerate_captions: bad sizes");
  std::vector<text::Caption> out;
  const int words = vocab_size - text::kReserved;
  for (int len = 0; len <= max_len - 2; ++len) {
    std::vector<int> body(static_cast<std::size_t>(len), 0);
    while (true) {
      text::Caption c{{text::kBos}};
      for (int b : body) c.ids.push_back(text::kReserved + b);
      c.ids.push_back(text::kEos);
      out.push_back(std::move(c));
      int k = len - 1;
      while (k >= 0 && ++body[static_cast<std::size_t>(k)] == words) body[static_cast<std::size_t>(k--)] = 0;
      if (k < 0) break;
    }
  }
  return out;
}

// Scenes with min..max objects, one per cell; enumerated by cell subset then
// object kinds. Prompted index is always 0.
inline std::vector<world::SceneSpec> enumerate_scenes(const world::WorldConfig& w, int min_objects, int max_objects) {
  const int cells = w.grid_size * w.grid_size;
  const int kinds = static_cast<int>(w.shapes.size() * w.colors.size());
  std::vector<world::SceneSpec> out;
  for (int n = min_objects; n <= max_objects; ++n) {
    for (unsigned mask = 0; mask < (1u << cells); ++mask) {
      if (std::popcount(mask) != n) continue;
      std::vector<int> pos;
      for (int c = 0; c < cells; ++c)
        if (mask & (1u << c)) pos.push_back(c);
      std::vector<int> kind(static_cast<std::size_t>(n), 0);
      while (true) {
        world::SceneSpec s;
        s.grid_size = w.grid_size;
        for (int i = 0; i < n; ++i) {
          const int k = kind[static_cast<std::size_t>(i)];
          const int nc = static_cast<int>(w.colors.size());
          s.objects.push_back({w.shapes[static_cast<std::size_t>(k / nc)], w.colors[static_cast<std::size_t>(k % nc)],
                               pos[static_cast<std::size_t>(i)] / w.grid_size,
                               pos[static_cast<std::size_t>(i)] % w.grid_size});
        }
        out.push_back(std::move(s));
        int k = n - 1;
        while (k >= 0 && ++kind[static_cast<std::size_t>(k)] == kinds) kind[static_cast<std::size_t>(k--)] = 0;
        if (k < 0) break;
      }
    }
  }
  return out;
}

// Every grid-token sequence of the given length, lexicographic.
inline std::vector<nets::ImageTokens> enumerate_token_sequences(int n_cells, int vocab) {
  std::vector<nets::ImageTokens> out;
  nets::ImageTokens cur(static_cast<std::size_t>(n_cells), 0);
  while (true) {
    out.push_back(cur);
    int k = n_cells - 1;
    while (k >= 0 && ++cur[static_cast<std::size_t>(k)] == vocab) cur[static_cast<std::size_t>(k--)] = 0;
    if (k < 0) break;
  }
  return out;
}

// Enumerable instance: 2x2 grid, two shapes, two colors, one or two
// objects, captions up to five tokens.
struct MicroInstance {
  world::WorldConfig world;
  text::Vocabulary vocab;
  nets::NetConfig net;
  std::vector<text::Caption> captions;
  std::vector<world::SceneSpec> scenes;
  std::vector<nets::ImageTokens> tokens;
  std::vector<world::Image> images;

  int n_captions() const { return static_cast<int>(captions.size()); }
  int n_scenes() const { return static_cast<int>(scenes.size()); }

  // Grammar caption "a {color} {shape}" for the first object of a scene.
  text::Caption describe(const world::SceneSpec& s) const {
    return text::encode(world::describe(s.objects.front()), vocab);
  }
};

inline MicroInstance make_micro_instance() {
  MicroInstance m;
  m.world.grid_size = 2;
  m.world.shapes = {world::Shape::box, world::Shape::ball};
  m.world.colors = {world::Color::red, world::Color::blue};
  m.world.min_objects = 1;
  m.world.max_objects = 2;
  m.world.relation_probability = 0.0;
  m.vocab = text::Vocabulary({"a", "box", "ball", "red", "blue"});
  m.net = nets::net_config_for(m.world, m.vocab.size());
  m.net.width = 16;
  m.net.heads = 2;
  m.net.ff_width = 32;
  m.net.conv_channels = {4, 8, 16};
  m.net.embed_hidden = 32;
  m.net.embed_dim = 16;
  m.net.max_caption_length = 5;
  m.captions = enumerate_captions(m.vocab.size(), m.net.max_caption_length);
  m.scenes = enumerate_scenes(m.world, 1, 2);
  for (const auto& s : m.scenes) {
    m.tokens.push_back(nets::image_tokens(s, m.world));
    m.images.push_back(world::render(s));
  }
  return m;
}

}  // namespace ias::oracle
