#include "oneshot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <tuple>

namespace oneshot {

double iou(const Box& a, const Box& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return 0.0;
  const double inter = static_cast<double>(x1 - x0) * (y1 - y0);
  const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

FeatureMap::FeatureMap(int width, int height, int channels, int stride)
    : FeatureMap(width, height, channels, stride,
                 std::vector<float>(static_cast<std::size_t>(width) * height * channels, 0.0f)) {}

FeatureMap::FeatureMap(int width, int height, int channels, int stride, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), stride_(stride), data_(std::move(data)) {
  if (width < 1 || height < 1 || channels < 1) throw std::invalid_argument("feature map dimensions must be positive");
  if (stride < 1) throw std::invalid_argument("feature map stride must be >= 1");
  if (data_.size() != static_cast<std::size_t>(width) * height * channels)
    throw std::invalid_argument("feature map data length does not match width*height*channels");
  if (!all_finite()) throw std::invalid_argument("feature map contains NaN or Inf");
}

std::vector<float> FeatureMap::channel_vector(int y, int x) const {
  std::vector<float> v(channels_);
  for (int c = 0; c < channels_; ++c) v[c] = at(c, y, x);
  return v;
}

bool FeatureMap::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::vector<float> l2_normalize(std::span<const float> v) {
  std::vector<float> out(v.begin(), v.end());
  l2_normalize_inplace(out);
  return out;
}

void l2_normalize_inplace(std::span<float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (norm <= kNormEpsilon) return;
  for (float& x : v) x = static_cast<float>(x / norm);
}

namespace {

void check_window(const FeatureMap& fm, int win_w, int win_h) {
  if (win_w < 1 || win_h < 1 || win_w > fm.width() || win_h > fm.height())
    throw std::invalid_argument("window exceeds feature map");
}

// Sliding max over a strided 1D sequence; writes n - win + 1 outputs.
void sliding_max(const float* in, std::size_t in_step, int n, int win, float* out, std::size_t out_step,
                 std::deque<int>& dq) {
  dq.clear();
  for (int i = 0; i < n; ++i) {
    const float v = in[i * in_step];
    while (!dq.empty() && in[dq.back() * in_step] <= v) dq.pop_back();
    dq.push_back(i);
    if (dq.front() <= i - win) dq.pop_front();
    if (i >= win - 1) out[(i - win + 1) * out_step] = in[dq.front() * in_step];
  }
}

}  // namespace

FeatureMap window_average_map(const FeatureMap& fm, int win_w, int win_h) {
  check_window(fm, win_w, win_h);
  const int W = fm.width(), H = fm.height();
  const int ow = W - win_w + 1, oh = H - win_h + 1;
  FeatureMap out(ow, oh, fm.channels(), fm.stride());
  const double inv_area = 1.0 / (static_cast<double>(win_w) * win_h);
  const std::size_t iw = W + 1;
  std::vector<double> integral(iw * (H + 1), 0.0);

  for (int c = 0; c < fm.channels(); ++c) {
    const auto src = fm.plane(c);
    for (int y = 0; y < H; ++y) {
      double row = 0.0;
      const double* above = &integral[y * iw];
      double* cur = &integral[(y + 1) * iw];
      for (int x = 0; x < W; ++x) {
        row += src[static_cast<std::size_t>(y) * W + x];
        cur[x + 1] = above[x + 1] + row;
      }
    }
    auto dst = out.plane(c);
    for (int y = 0; y < oh; ++y) {
      const double* top = &integral[y * iw];
      const double* bot = &integral[(y + win_h) * iw];
      for (int x = 0; x < ow; ++x) {
        const double s = bot[x + win_w] - bot[x] - top[x + win_w] + top[x];
        dst[static_cast<std::size_t>(y) * ow + x] = static_cast<float>(s * inv_area);
      }
    }
  }
  return out;
}

FeatureMap window_max_map(const FeatureMap& fm, int win_w, int win_h) {
  check_window(fm, win_w, win_h);
  const int W = fm.width(), H = fm.height();
  const int ow = W - win_w + 1, oh = H - win_h + 1;
  FeatureMap out(ow, oh, fm.channels(), fm.stride());
  std::vector<float> rows(static_cast<std::size_t>(ow) * H);
  std::deque<int> dq;

  for (int c = 0; c < fm.channels(); ++c) {
    const auto src = fm.plane(c);
    for (int y = 0; y < H; ++y)
      sliding_max(src.data() + static_cast<std::size_t>(y) * W, 1, W, win_w, rows.data() + static_cast<std::size_t>(y) * ow,
                  1, dq);
    auto dst = out.plane(c);
    for (int x = 0; x < ow; ++x) sliding_max(rows.data() + x, ow, H, win_h, dst.data() + x, ow, dq);
  }
  return out;
}

void normalize_positions(FeatureMap& fm) {
  const std::size_t n = fm.plane_size();
  std::vector<double> sq(n, 0.0);
  for (int c = 0; c < fm.channels(); ++c) {
    const auto p = fm.plane(c);
    for (std::size_t i = 0; i < n; ++i) sq[i] += static_cast<double>(p[i]) * p[i];
  }
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = std::sqrt(sq[i]);
    inv[i] = norm > kNormEpsilon ? 1.0 / norm : 1.0;
  }
  for (int c = 0; c < fm.channels(); ++c) {
    auto p = fm.plane(c);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<float>(p[i] * inv[i]);
  }
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

Tap make_tap(double pos, int n) {
  if (n == 1 || pos <= 0.0) return {0, 0, 0.0};
  if (pos >= n - 1) return {n - 1, n - 1, 0.0};
  const int lo = static_cast<int>(std::floor(pos));
  return {lo, lo + 1, pos - lo};
}

ScoreMap resample(const ScoreMap& sm, int out_w, int out_h, const std::vector<Tap>& xs, const std::vector<Tap>& ys) {
  ScoreMap out(out_w, out_h, 0.0f, ScoreGeometry::pixel_grid());
  for (int y = 0; y < out_h; ++y) {
    const Tap& ty = ys[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& tx = xs[x];
      const double top = sm.at(tx.lo, ty.lo) * (1.0 - tx.frac) + sm.at(tx.hi, ty.lo) * tx.frac;
      const double bot = sm.at(tx.lo, ty.hi) * (1.0 - tx.frac) + sm.at(tx.hi, ty.hi) * tx.frac;
      out.at(x, y) = static_cast<float>(top * (1.0 - ty.frac) + bot * ty.frac);
    }
  }
  return out;
}

}  // namespace

ScoreMap bilinear_upsample(const ScoreMap& sm, int out_w, int out_h) {
  if (sm.empty()) throw std::invalid_argument("cannot upsample an empty score map");
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("output size must be positive");
  auto corner_taps = [](int in, int out) {
    std::vector<Tap> taps(out);
    for (int i = 0; i < out; ++i) {
      const double pos = out > 1 ? static_cast<double>(i) * (in - 1) / (out - 1) : 0.5 * (in - 1);
      taps[i] = make_tap(pos, in);
    }
    return taps;
  };
  return resample(sm, out_w, out_h, corner_taps(sm.width, out_w), corner_taps(sm.height, out_h));
}

ScoreMap resample_to_pixels(const ScoreMap& sm, int out_w, int out_h) {
  if (sm.empty()) throw std::invalid_argument("cannot resample an empty score map");
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("output size must be positive");
  auto taps = [](int in, int out, double origin, double step) {
    std::vector<Tap> t(out);
    for (int i = 0; i < out; ++i) t[i] = make_tap((i + 0.5 - origin) / step, in);
    return t;
  };
  const auto& g = sm.geometry;
  return resample(sm, out_w, out_h, taps(sm.width, out_w, g.origin_x, g.step_x),
                  taps(sm.height, out_h, g.origin_y, g.step_y));
}

std::vector<Component> connected_components(const Mask& mask) {
  std::vector<Component> comps;
  std::vector<unsigned char> seen(mask.bits.size(), 0);
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * mask.width + x;
      if (!mask.bits[idx] || seen[idx]) continue;
      int x0 = x, x1 = x, y0 = y, y1 = y;
      long count = 0;
      seen[idx] = 1;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++count;
        x0 = std::min(x0, cx);
        x1 = std::max(x1, cx);
        y0 = std::min(y0, cy);
        y1 = std::max(y1, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * mask.width + nx;
            if (mask.bits[n] && !seen[n]) {
              seen[n] = 1;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      comps.push_back({Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1}, count});
    }
  }
  std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    if (a.box.area() != b.box.area()) return a.box.area() > b.box.area();
    return std::tie(a.box.y, a.box.x) < std::tie(b.box.y, b.box.x);
  });
  return comps;
}

}  // namespace oneshot
