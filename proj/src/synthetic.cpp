#include "oneshot/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

namespace oneshot::synthetic {

namespace {

// std distributions are implementation-defined; map raw engine output directly
// so scenes are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }

 private:
  std::mt19937_64 engine_;
};

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

using Rgb = std::array<double, 3>;

void fill_disc(Image& img, double cx, double cy, double radius, const Rgb& colour) {
  const int x0 = std::max(0, static_cast<int>(cx - radius - 1));
  const int x1 = std::min(img.width - 1, static_cast<int>(cx + radius + 1));
  const int y0 = std::max(0, static_cast<int>(cy - radius - 1));
  const int y1 = std::min(img.height - 1, static_cast<int>(cy + radius + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      if (d <= radius)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp_byte(colour[c]);
    }
}

void fill_rect(Image& img, int x, int y, int w, int h, const Rgb& colour) {
  for (int yy = std::max(0, y); yy < std::min(img.height, y + h); ++yy)
    for (int xx = std::max(0, x); xx < std::min(img.width, x + w); ++xx)
      for (int c = 0; c < 3; ++c) img.at(xx, yy, c) = clamp_byte(colour[c]);
}

void add_grain(Image& img, Rng& rng, double amplitude) {
  for (auto& p : img.pixels) p = clamp_byte(p + rng.uniform(-amplitude, amplitude));
}

}  // namespace

Image background(int width, int height, std::uint64_t seed) {
  if (width < 1 || height < 1) throw std::invalid_argument("background size must be positive");
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  Image img(width, height, 3);
  const Rgb base{rng.uniform(90, 130), rng.uniform(100, 140), rng.uniform(70, 100)};
  std::vector<double> field(static_cast<std::size_t>(width) * height * 3, 0.0);
  for (int octave = 0; octave < 3; ++octave) {
    const int cell = 64 >> octave;
    const int gw = width / cell + 2, gh = height / cell + 2;
    std::vector<Rgb> grid(static_cast<std::size_t>(gw) * gh);
    const double amp = 28.0 / (octave + 1);
    for (auto& g : grid) {
      const double shade = rng.uniform(-amp, amp);
      g = {shade + rng.uniform(-6, 6), shade + rng.uniform(-6, 6), shade + rng.uniform(-6, 6)};
    }
    for (int y = 0; y < height; ++y) {
      const double fy = static_cast<double>(y) / cell;
      const int gy = static_cast<int>(fy);
      const double ty = fy - gy;
      const double sy = ty * ty * (3 - 2 * ty);
      for (int x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) / cell;
        const int gx = static_cast<int>(fx);
        const double tx = fx - gx;
        const double sx = tx * tx * (3 - 2 * tx);
        for (int c = 0; c < 3; ++c) {
          const double a = grid[gy * gw + gx][c], b = grid[gy * gw + gx + 1][c];
          const double d = grid[(gy + 1) * gw + gx][c], e = grid[(gy + 1) * gw + gx + 1][c];
          field[(static_cast<std::size_t>(y) * width + x) * 3 + c] +=
              (a * (1 - sx) + b * sx) * (1 - sy) + (d * (1 - sx) + e * sx) * sy;
        }
      }
    }
  }
  for (std::size_t i = 0; i < field.size(); ++i) img.pixels[i] = clamp_byte(base[i % 3] + field[i]);
  add_grain(img, rng, 6.0);
  return img;
}

Image tank_object(int side, std::uint64_t variant) {
  Rng rng(variant * 0xD1B54A32D192ED03ULL + 7);
  Image img(side, side, 3);
  const Rgb pad{rng.uniform(165, 195), rng.uniform(165, 190), rng.uniform(155, 180)};
  fill_rect(img, 0, 0, side, side, pad);
  const int n = 2 + static_cast<int>(variant % 2);
  const double cell = static_cast<double>(side) / n;
  const Rgb water{rng.uniform(20, 50), rng.uniform(60, 90), rng.uniform(70, 100)};
  const Rgb rim{rng.uniform(225, 250), rng.uniform(225, 250), rng.uniform(225, 250)};
  for (int gy = 0; gy < n; ++gy)
    for (int gx = 0; gx < n; ++gx) {
      const double cx = (gx + 0.5) * cell, cy = (gy + 0.5) * cell;
      const double r = cell * rng.uniform(0.36, 0.44);
      fill_disc(img, cx, cy, r, rim);
      fill_disc(img, cx, cy, r * 0.8, water);
      fill_disc(img, cx, cy, r * 0.15, rim);
    }
  add_grain(img, rng, 5.0);
  return img;
}

Image distractor_object(int side, std::uint64_t seed) {
  Rng rng(seed * 0xA24BAED4963EE407ULL + 3);
  Image img(side, side, 3);
  if (seed % 2 == 0) {
    const int bands = rng.integer(3, 6);
    for (int b = 0; b < bands; ++b) {
      const Rgb col{rng.uniform(60, 160), rng.uniform(110, 190), rng.uniform(40, 90)};
      fill_rect(img, 0, b * side / bands, side, side / bands + 1, col);
    }
  } else {
    fill_rect(img, 0, 0, side, side, {rng.uniform(70, 100), rng.uniform(70, 100), rng.uniform(70, 100)});
    const int blocks = rng.integer(3, 6);
    for (int b = 0; b < blocks; ++b) {
      const int w = rng.integer(side / 6, side / 2), h = rng.integer(side / 6, side / 2);
      fill_rect(img, rng.integer(0, side - w), rng.integer(0, side - h), w, h,
                {rng.uniform(150, 230), rng.uniform(90, 140), rng.uniform(60, 110)});
    }
  }
  add_grain(img, rng, 5.0);
  return img;
}

void paste(Image& dst, const Image& src, int x, int y) {
  for (int yy = 0; yy < src.height; ++yy) {
    const int ty = y + yy;
    if (ty < 0 || ty >= dst.height) continue;
    for (int xx = 0; xx < src.width; ++xx) {
      const int tx = x + xx;
      if (tx < 0 || tx >= dst.width) continue;
      for (int c = 0; c < 3; ++c) dst.at(tx, ty, c) = src.at(xx, yy, c);
    }
  }
}

Scene make_scene(const Image& query, const SceneOptions& options, std::uint64_t seed) {
  if (query.width > options.width || query.height > options.height)
    throw std::invalid_argument("query does not fit in scene");
  Rng rng(seed * 0x94D049BB133111EBULL + 11);
  Scene scene;
  scene.image = background(options.width, options.height, seed);
  std::vector<Box> taken;
  auto place = [&](int w, int h) -> Box {
    for (int attempt = 0; attempt < 500; ++attempt) {
      const Box b{rng.integer(0, options.width - w), rng.integer(0, options.height - h), w, h};
      const Box grown{b.x - 8, b.y - 8, b.w + 16, b.h + 16};
      if (std::none_of(taken.begin(), taken.end(), [&](const Box& o) { return iou(grown, o) > 0.0; })) {
        taken.push_back(b);
        return b;
      }
    }
    throw std::invalid_argument("scene too crowded to place objects; enlarge the target or reduce the object count");
  };
  for (int i = 0; i < options.plants; ++i) {
    const Box b = place(query.width, query.height);
    paste(scene.image, query, b.x, b.y);
    scene.planted.push_back(b);
  }
  for (int i = 0; i < options.distractors; ++i) {
    const Box b = place(query.width, query.height);
    paste(scene.image, distractor_object(query.width, seed * 31 + i), b.x, b.y);
    scene.distractors.push_back(b);
  }
  for (int i = 0; i < options.decoys; ++i) {
    const Box b = place(query.width, query.height);
    Image decoy = tank_object(query.width, 1000 + seed * 7 + i);
    if (query.height != query.width) decoy = resize_bilinear(decoy, query.width, query.height);
    paste(scene.image, decoy, b.x, b.y);
    scene.decoys.push_back(b);
  }
  return scene;
}

Corpus make_corpus(const CorpusOptions& options) {
  Corpus corpus;
  for (int i = 0; i < options.queries; ++i) {
    CorpusQuery q;
    q.id = "query" + std::to_string(i + 1);
    q.image = tank_object(options.query_side, static_cast<std::uint64_t>(i));
    for (int j = 0; j < options.targets_per_query; ++j) {
      const std::string id = q.id + "_t" + std::to_string(j + 1);
      SceneOptions so;
      so.width = so.height = options.target_side;
      so.plants = options.plants;
      so.distractors = options.distractors;
      so.decoys = options.decoys;
      Scene scene = make_scene(q.image, so, options.seed * 1000 + static_cast<std::uint64_t>(i * 100 + j));
      corpus.ground_truth.emplace(id, GroundTruth{id, scene.planted, q.id});
      corpus.targets.push_back({id, std::move(scene.image)});
      q.target_ids.push_back(id);
    }
    corpus.queries.push_back(std::move(q));
  }
  return corpus;
}

Image blank(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img(width, height, 3);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

}  // namespace oneshot::synthetic
