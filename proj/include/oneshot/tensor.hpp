#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace oneshot {

/// Axis-aligned pixel rectangle, half-open: covers [x, x + w) x [y, y + h).
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long area() const { return static_cast<long>(w) * h; }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

/// Dense activations of one backbone block, stored planar (channel-major):
/// element (c, y, x) lives at data[(c * height + y) * width + x].
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int width, int height, int channels, int stride = 1);
  FeatureMap(int width, int height, int channels, int stride, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  int stride() const { return stride_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  float at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }

  std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  // Copies the channel vector at a spatial position.
  std::vector<float> channel_vector(int y, int x) const;

  bool all_finite() const;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  int stride_ = 1;
  std::vector<float> data_;
};

/// Maps score-map cells to target-image pixels. Cell (i, j) is centred at
/// pixel (origin_x + i * step_x, origin_y + j * step_y) in continuous pixel
/// coordinates (pixel k spans [k, k + 1)) and summarises a window of
/// window_w x window_h pixels.
struct ScoreGeometry {
  double origin_x = 0.5;
  double origin_y = 0.5;
  double step_x = 1.0;
  double step_y = 1.0;
  double window_w = 1.0;
  double window_h = 1.0;

  static ScoreGeometry pixel_grid() { return {}; }
};

/// 2D similarity surface, row-major values[y * width + x].
struct ScoreMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  ScoreGeometry geometry;

  ScoreMap() = default;
  ScoreMap(int w, int h, float fill = 0.0f, ScoreGeometry g = ScoreGeometry::pixel_grid())
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill), geometry(g) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return values.empty(); }
};

inline constexpr double kNormEpsilon = 1e-12;

/// Returns v / ||v||, or v unchanged when its norm is at most kNormEpsilon.
std::vector<float> l2_normalize(std::span<const float> v);
void l2_normalize_inplace(std::span<float> v);

/// Mean over every win_w x win_h window (valid positions only), computed from
/// a per-channel double-precision integral image.
FeatureMap window_average_map(const FeatureMap& fm, int win_w, int win_h);

/// Max over every win_w x win_h window via a separable monotonic-deque pass.
FeatureMap window_max_map(const FeatureMap& fm, int win_w, int win_h);

/// Normalises the channel vector at every spatial position to unit length.
void normalize_positions(FeatureMap& fm);

/// Corner-aligned bilinear resize: input corners land on output corners.
ScoreMap bilinear_upsample(const ScoreMap& sm, int out_w, int out_h);

/// Resamples a score map onto an out_w x out_h pixel grid using its geometry.
/// Pixels outside the span of cell centres take the nearest edge value.
ScoreMap resample_to_pixels(const ScoreMap& sm, int out_w, int out_h);

/// Row-major boolean mask.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}
  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
};

struct Component {
  Box box;
  long pixel_count = 0;
};

/// 8-connected components of the true pixels, sorted by descending box area
/// (ties broken by top-left position for determinism).
std::vector<Component> connected_components(const Mask& mask);

}  // namespace oneshot
