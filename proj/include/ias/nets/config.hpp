#pragma once

#include <array>
#include <cstdint>

#include <json.hpp>

#include "ias/core/error.hpp"
#include "ias/text/vocabulary.hpp"
#include "ias/world/scene.hpp"

namespace ias::nets {

struct NetConfig {
  int width = 64;
  int heads = 4;
  int ff_width = 128;
  int policy_layers = 2;
  int prior_layers = 2;
  int decoder_layers = 2;
  int caption_encoder_layers = 1;
  std::array<int, 3> conv_channels{32, 64, 64};
  std::array<int, 3> conv_strides{1, 2, 2};
  int embed_hidden = 256;
  int embed_dim = 128;
  bool normalize_embeddings = false;
  double temperature = 1.0;
  int max_caption_length = text::kDefaultMaxLength;
  int vocab_size = 0;
  int grid_size = 4;
  int n_shapes = 8;
  int n_colors = 10;

  int image_size() const { return grid_size * 6; }
  int n_cells() const { return grid_size * grid_size; }
  int image_vocab() const { return n_shapes * n_colors + 1; }
  int hyper_side() const {
    int side = image_size();
    for (int s : conv_strides) side = (side + 2 - 3) / s + 1;
    return side;
  }
  int hyper_pixels() const { return hyper_side() * hyper_side(); }

  void validate() const {
    if (width <= 0 || heads <= 0 || width % heads != 0) throw ConfigError("net config: width must divide into heads");
    if (ff_width <= 0 || embed_hidden <= 0 || embed_dim <= 0) throw ConfigError("net config: widths must be positive");
    if (policy_layers < 1 || prior_layers < 1 || decoder_layers < 1 || caption_encoder_layers < 1)
      throw ConfigError("net config: layer counts must be positive");
    for (int c : conv_channels)
      if (c <= 0) throw ConfigError("net config: conv channels must be positive");
    if (conv_channels.back() != width) throw ConfigError("net config: last conv channel count must equal width");
    if (max_caption_length < 2) throw ConfigError("net config: max caption length below 2");
    if (vocab_size <= text::kReserved) throw ConfigError("net config: vocabulary too small");
    if (grid_size < 1 || n_shapes < 1 || n_colors < 1) throw ConfigError("net config: world sizes must be positive");
    if (!(temperature > 0.0)) throw ConfigError("net config: temperature must be positive");
  }
};

inline nlohmann::json to_json(const NetConfig& c) {
  return {{"width", c.width},
          {"heads", c.heads},
          {"ff_width", c.ff_width},
          {"policy_layers", c.policy_layers},
          {"prior_layers", c.prior_layers},
          {"decoder_layers", c.decoder_layers},
          {"caption_encoder_layers", c.caption_encoder_layers},
          {"conv_channels", c.conv_channels},
          {"conv_strides", c.conv_strides},
          {"embed_hidden", c.embed_hidden},
          {"embed_dim", c.embed_dim},
          {"normalize_embeddings", c.normalize_embeddings},
          {"temperature", c.temperature},
          {"max_caption_length", c.max_caption_length},
          {"vocab_size", c.vocab_size},
          {"grid_size", c.grid_size},
          {"n_shapes", c.n_shapes},
          {"n_colors", c.n_colors}};
}

// Missing keys keep the values of `base`; unknown keys are rejected.
inline NetConfig net_config_from_json(const nlohmann::json& j, NetConfig base = {}) {
  if (!j.is_object()) throw ConfigError("net config: expected an object");
  const nlohmann::json known = to_json(base);
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("net config: unknown key " + k);
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("width", base.width);
    get("heads", base.heads);
    get("ff_width", base.ff_width);
    get("policy_layers", base.policy_layers);
    get("prior_layers", base.prior_layers);
    get("decoder_layers", base.decoder_layers);
    get("caption_encoder_layers", base.caption_encoder_layers);
    get("conv_channels", base.conv_channels);
    get("conv_strides", base.conv_strides);
    get("embed_hidden", base.embed_hidden);
    get("embed_dim", base.embed_dim);
    get("normalize_embeddings", base.normalize_embeddings);
    get("temperature", base.temperature);
    get("max_caption_length", base.max_caption_length);
    get("vocab_size", base.vocab_size);
    get("grid_size", base.grid_size);
    get("n_shapes", base.n_shapes);
    get("n_colors", base.n_colors);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("net config: ") + e.what());
  }
  return base;
}

inline NetConfig net_config_for(const world::WorldConfig& w, int vocab_size) {
  NetConfig c;
  c.grid_size = w.grid_size;
  c.n_shapes = static_cast<int>(w.shapes.size());
  c.n_colors = static_cast<int>(w.colors.size());
  c.vocab_size = vocab_size;
  return c;
}

}  // namespace ias::nets
