#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ias/core/hash.hpp"
#include "ias/world/scene.hpp"

namespace ias::world {

inline constexpr int kCellPixels = 6;
inline constexpr float kBackground = 0.2f;

// H x W x 3, row-major, channels last, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  float at(int y, int x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  float& at(int y, int x, int c) { return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)]; }

  friend bool operator==(const Image&, const Image&) = default;

  std::uint64_t hash() const {
    Fnv1a h;
    h.update(pixels.data(), pixels.size() * sizeof(float));
    return h.digest();
  }
};

struct Rgb {
  float r, g, b;
};

inline constexpr std::array<Rgb, 10> kPalette = {{
    {1.0f, 0.0f, 0.0f},    // red
    {1.0f, 1.0f, 0.0f},    // yellow
    {0.0f, 0.0f, 1.0f},    // blue
    {1.0f, 1.0f, 1.0f},    // white
    {0.0f, 0.8f, 0.0f},    // green
    {1.0f, 0.6f, 0.8f},    // pink
    {0.5f, 0.0f, 0.5f},    // purple
    {1.0f, 0.5f, 0.0f},    // orange
    {0.5f, 1.0f, 0.83f},   // aquamarine
    {1.0f, 0.0f, 1.0f},    // magenta
}};

inline Rgb rgb(Color c) { return kPalette[static_cast<std::size_t>(c)]; }

// 6x6 binary masks, '#' = foreground.
inline constexpr std::array<std::array<std::string_view, 6>, 8> kShapeMasks = {{
    {"......", ".####.", ".####.", ".####.", ".####.", "......"},  // box
    {"..##..", ".####.", "######", "######", ".####.", "..##.."},  // ball
    {".##...", "###...", ".#####", "######", ".####.", "......"},  // duck
    {"######", "#....#", "#.##.#", "#.##.#", "#....#", "######"},  // book
    {"..#...", "..##..", "######", "######", "..##..", "..#..."},  // plane
    {"###...", "###...", "######", "######", "#.##.#", "......"},  // train
    {"#....#", ".####.", ".#..#.", ".####.", ".####.", "#....#"},  // bear
    {".####.", "#....#", "######", "######", "######", ".####."},  // drum
}};

inline bool mask_at(Shape s, int y, int x) {
  return kShapeMasks[static_cast<std::size_t>(s)][static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] ==
         '#';
}

inline Image blank_image(int grid_size) {
  Image img;
  img.height = img.width = grid_size * kCellPixels;
  img.pixels.assign(static_cast<std::size_t>(img.height * img.width * 3), kBackground);
  return img;
}

inline void paint_object(Image& img, const Object& o) {
  const Rgb c = rgb(o.color);
  for (int y = 0; y < kCellPixels; ++y)
    for (int x = 0; x < kCellPixels; ++x) {
      if (!mask_at(o.shape, y, x)) continue;
      const int py = o.row * kCellPixels + y, px = o.col * kCellPixels + x;
      img.at(py, px, 0) = c.r;
      img.at(py, px, 1) = c.g;
      img.at(py, px, 2) = c.b;
    }
}

// Pure function of the scene's visible content.
inline Image render(const SceneSpec& scene) {
  scene.validate(/*allow_empty=*/true, scene.grid_size * scene.grid_size);
  Image img = blank_image(scene.grid_size);
  for (const Object& o : scene.objects) paint_object(img, o);
  return img;
}

}  // namespace ias::world
