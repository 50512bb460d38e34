#pragma once

#include <array>
#include <string>
#include <vector>

#include "ias/nets/config.hpp"
#include "ias/nets/layers.hpp"
#include "ias/world/render.hpp"

namespace ias::nets {

// Stacks images as (batch * H * W) x 3 rows of RGB.
template <class T>
Matrix<T> image_rows(const std::vector<const world::Image*>& images) {
  require(!images.empty(), "image_rows: empty batch");
  const int h = images.front()->height, w = images.front()->width;
  Matrix<T> m(static_cast<Eigen::Index>(images.size()) * h * w, 3);
  Eigen::Index r = 0;
  for (const auto* img : images) {
    require(img->height == h && img->width == w, "image_rows: mixed resolutions");
    for (int i = 0; i < h * w; ++i, ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = static_cast<T>(img->pixels[static_cast<std::size_t>(i * 3 + c)]);
  }
  return m;
}

template <class T>
Matrix<T> image_rows(const std::vector<world::Image>& images) {
  std::vector<const world::Image*> ptrs;
  for (const auto& i : images) ptrs.push_back(&i);
  return image_rows<T>(ptrs);
}

// Three 3x3 convolutions (GELU after the first two) producing hyper-pixels:
// (batch * N) x width.
template <class T>
class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(ParamSet<T>& ps, const std::string& name, const NetConfig& cfg) : cfg_(cfg) {
    int in = 3;
    for (std::size_t i = 0; i < 3; ++i) {
      const int out = cfg.conv_channels[i];
      const std::string n = name + ".conv" + std::to_string(i);
      layers_[i].kernel = ps.normal(n + ".kernel", 9 * in, out, 1.0 / std::sqrt(9.0 * in));
      layers_[i].bias = ps.zeros(n + ".bias", 1, out);
      layers_[i].shape = {cfg.image_size(), cfg.image_size(), in, 3, cfg.conv_strides[i], 1};
      if (i > 0) {
        const auto& prev = layers_[i - 1].shape;
        layers_[i].shape.height = prev.out_height();
        layers_[i].shape.width = prev.out_width();
      }
      in = out;
    }
  }

  int hyper_pixels() const { return layers_[2].shape.out_height() * layers_[2].shape.out_width(); }
  int hyper_side() const { return layers_[2].shape.out_width(); }
  int final_kernel() const { return layers_[2].kernel; }
  int final_bias() const { return layers_[2].bias; }

  Var<T> encode(Tape<T>& t, const ParamSet<T>& ps, Var<T> pixels) const {
    const int hw = cfg_.image_size() * cfg_.image_size();
    require(pixels.cols() == 3 && pixels.rows() > 0 && pixels.rows() % hw == 0,
            "encode_image: input does not match the configured resolution");
    Var<T> x = pixels;
    for (std::size_t i = 0; i < 3; ++i) {
      x = ad::conv2d(x, t.param(ps[layers_[i].kernel]), t.param(ps[layers_[i].bias]), layers_[i].shape);
      if (i < 2) x = ad::gelu(x);
    }
    return x;
  }

 private:
  struct Layer {
    int kernel = -1, bias = -1;
    ad::ConvShape shape;
  };
  NetConfig cfg_;
  std::array<Layer, 3> layers_{};
};

// Exact grid tokenizer: one token per cell, 0 = empty, otherwise
// 1 + shape_index * n_colors + color_index in the world's lists.
using ImageTokens = std::vector<int>;

inline ImageTokens image_tokens(const world::SceneSpec& scene, const world::WorldConfig& w) {
  scene.validate(true, scene.grid_size * scene.grid_size);
  require(scene.grid_size == w.grid_size, "image_tokens: grid size mismatch");
  ImageTokens ids(static_cast<std::size_t>(w.grid_size * w.grid_size), 0);
  const int nc = static_cast<int>(w.colors.size());
  for (const auto& o : scene.objects) {
    const int si = w.shape_index(o.shape), ci = w.color_index(o.color);
    require(si >= 0 && ci >= 0, "image_tokens: object outside the world's lexicons");
    ids[static_cast<std::size_t>(o.row * w.grid_size + o.col)] = 1 + si * nc + ci;
  }
  return ids;
}

inline int image_vocab_size(const world::WorldConfig& w) {
  return static_cast<int>(w.shapes.size() * w.colors.size()) + 1;
}

inline world::SceneSpec tokens_to_scene(const ImageTokens& ids, const world::WorldConfig& w) {
  require(static_cast<int>(ids.size()) == w.grid_size * w.grid_size, "tokens_to_image: wrong token count");
  const int nc = static_cast<int>(w.colors.size());
  world::SceneSpec s;
  s.grid_size = w.grid_size;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    require(id >= 0 && id < image_vocab_size(w), "tokens_to_image: malformed token id");
    if (id == 0) continue;
    world::Object o;
    o.shape = w.shapes[static_cast<std::size_t>((id - 1) / nc)];
    o.color = w.colors[static_cast<std::size_t>((id - 1) % nc)];
    o.row = static_cast<int>(i) / w.grid_size;
    o.col = static_cast<int>(i) % w.grid_size;
    s.objects.push_back(o);
  }
  return s;
}

inline world::Image tokens_to_image(const ImageTokens& ids, const world::WorldConfig& w) {
  return world::render(tokens_to_scene(ids, w));
}

}  // namespace ias::nets
