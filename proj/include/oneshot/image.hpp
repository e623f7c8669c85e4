#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "oneshot/tensor.hpp"

namespace oneshot {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit raster, interleaved, row-major. channels is 3 for RGB; the loader
/// preserves 1-channel grey input so callers can reject it explicitly.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int ch = 3, std::uint8_t fill = 0)
      : width(w), height(h), channels(ch), pixels(static_cast<std::size_t>(w) * h * ch, fill) {}

  bool empty() const { return pixels.empty(); }
  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Reads PNG or JPEG (detected by signature). Alpha is dropped, palettes expanded.
Image load_image(const std::filesystem::path& path);

void save_png(const std::filesystem::path& path, const Image& image);

/// Writes a 16-bit greyscale PNG; values are clamped to [0, 1] and mapped
/// linearly onto [0, 65535].
void save_score_png(const std::filesystem::path& path, const ScoreMap& map);

/// Reads back a 16-bit greyscale PNG written by save_score_png.
ScoreMap load_score_png(const std::filesystem::path& path);

Image crop(const Image& image, const Box& box);

/// Bilinear resize with pixel-centre alignment.
Image resize_bilinear(const Image& image, int out_w, int out_h);

/// Draws a rectangle outline of the given thickness, clipped to the image.
void draw_rect(Image& image, const Box& box, std::uint8_t r, std::uint8_t g, std::uint8_t b, int thickness = 3);

/// Renders a numeric label (digits and '.') with a built-in 3x5 font.
void draw_text(Image& image, int x, int y, const std::string& text, std::uint8_t r, std::uint8_t g, std::uint8_t b,
               int scale = 2);

}  // namespace oneshot
