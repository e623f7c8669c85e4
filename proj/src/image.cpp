#include "oneshot/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <jpeglib.h>

namespace oneshot {

namespace {

using FilePtr = std::unique_ptr<std::FILE, decltype(&std::fclose)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw ImageError("cannot open image file: " + path.string());
  return f;
}

Image load_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageError("cannot decode PNG " + path.string() + ": " + img.message);
  const bool colour = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), colour ? 3 : 1);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image load_jpeg(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  Image out;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageError("cannot decode JPEG " + path.string() + ": " + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  const bool grey = cinfo.jpeg_color_space == JCS_GRAYSCALE;
  cinfo.out_color_space = grey ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height), grey ? 1 : 3);
  const std::size_t row_bytes = static_cast<std::size_t>(out.width) * out.channels;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + cinfo.output_scanline * row_bytes;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image file: " + path.string());
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  if (in.gcount() >= 8 && png_sig_cmp(sig.data(), 0, 8) == 0) return load_png(path);
  if (in.gcount() >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return load_jpeg(path);
  throw ImageError("unsupported image format: " + path.string());
}

void save_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 3 && image.channels != 1) throw ImageError("unsupported image");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw ImageError("cannot write PNG " + path.string() + ": " + img.message);
}

void save_score_png(const std::filesystem::path& path, const ScoreMap& map) {
  std::vector<png_uint_16> buf(map.values.size());
  std::transform(map.values.begin(), map.values.end(), buf.begin(), [](float v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return static_cast<png_uint_16>(std::lround(c * 65535.0));
  });
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(map.width);
  img.height = static_cast<png_uint_32>(map.height);
  img.format = PNG_FORMAT_LINEAR_Y;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw ImageError("cannot write PNG " + path.string() + ": " + img.message);
}

ScoreMap load_score_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageError("cannot decode PNG " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_LINEAR_Y;
  std::vector<png_uint_16> buf(static_cast<std::size_t>(img.width) * img.height);
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("cannot decode PNG " + path.string() + ": " + msg);
  }
  ScoreMap out(static_cast<int>(img.width), static_cast<int>(img.height));
  std::transform(buf.begin(), buf.end(), out.values.begin(), [](png_uint_16 v) { return v / 65535.0f; });
  return out;
}

Image crop(const Image& image, const Box& box) {
  const int x0 = std::clamp(box.x, 0, image.width);
  const int y0 = std::clamp(box.y, 0, image.height);
  const int x1 = std::clamp(box.x + box.w, 0, image.width);
  const int y1 = std::clamp(box.y + box.h, 0, image.height);
  Image out(std::max(0, x1 - x0), std::max(0, y1 - y0), image.channels);
  const std::size_t row = static_cast<std::size_t>(out.width) * image.channels;
  for (int y = 0; y < out.height; ++y)
    std::memcpy(&out.pixels[y * row], &image.pixels[((static_cast<std::size_t>(y0) + y) * image.width + x0) * image.channels],
                row);
  return out;
}

Image resize_bilinear(const Image& image, int out_w, int out_h) {
  if (image.empty() || out_w < 1 || out_h < 1) throw ImageError("invalid resize request");
  if (out_w == image.width && out_h == image.height) return image;
  Image out(out_w, out_h, image.channels);
  const double sx = static_cast<double>(image.width) / out_w;
  const double sy = static_cast<double>(image.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(x0, y0, c) * (1 - wx) + image.at(x1, y0, c) * wx;
        const double bot = image.at(x0, y1, c) * (1 - wx) + image.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - wy) + bot * wy, 0.0, 255.0)));
      }
    }
  }
  return out;
}

void draw_rect(Image& image, const Box& box, std::uint8_t r, std::uint8_t g, std::uint8_t b, int thickness) {
  const std::array<std::uint8_t, 3> rgb{r, g, b};
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= image.width || y >= image.height) return;
    for (int c = 0; c < std::min(image.channels, 3); ++c) image.at(x, y, c) = rgb[c];
  };
  for (int t = 0; t < thickness; ++t) {
    const int x0 = box.x + t, y0 = box.y + t;
    const int x1 = box.x + box.w - 1 - t, y1 = box.y + box.h - 1 - t;
    if (x1 < x0 || y1 < y0) break;
    for (int x = x0; x <= x1; ++x) {
      put(x, y0);
      put(x, y1);
    }
    for (int y = y0; y <= y1; ++y) {
      put(x0, y);
      put(x1, y);
    }
  }
}

namespace {

// 3x5 glyphs, one row per 3-bit mask (MSB = left column).
const std::array<std::uint8_t, 5>* glyph(char ch) {
  static const std::array<std::array<std::uint8_t, 5>, 11> digits{{
      {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1}, {7, 4, 7, 1, 7},
      {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}, {0, 0, 0, 0, 2},
  }};
  if (ch >= '0' && ch <= '9') return &digits[ch - '0'];
  if (ch == '.') return &digits[10];
  return nullptr;
}

}  // namespace

void draw_text(Image& image, int x, int y, const std::string& text, std::uint8_t r, std::uint8_t g, std::uint8_t b,
               int scale) {
  const std::array<std::uint8_t, 3> rgb{r, g, b};
  int pen = x;
  for (char ch : text) {
    if (const auto* gl = glyph(ch)) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col) {
          if (!(((*gl)[row] >> (2 - col)) & 1)) continue;
          for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) {
              const int px = pen + col * scale + dx, py = y + row * scale + dy;
              if (px < 0 || py < 0 || px >= image.width || py >= image.height) continue;
              for (int c = 0; c < std::min(image.channels, 3); ++c) image.at(px, py, c) = rgb[c];
            }
        }
    }
    pen += 4 * scale;
  }
}

}  // namespace oneshot
