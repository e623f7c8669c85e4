#include "oneshot/detection.hpp"

#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oneshot {

namespace {

constexpr int kMinCropSide = 8;

void sort_detections(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.box.y, a.box.x, a.box.h, a.box.w) < std::tie(b.box.y, b.box.x, b.box.h, b.box.w);
  });
}

int kind_index(QueryKind k) { return static_cast<int>(k); }

}  // namespace

void DetectionConfig::validate() const {
  if (!(0.0 <= first_threshold && first_threshold <= second_threshold && second_threshold <= 1.0))
    throw std::invalid_argument("thresholds must satisfy 0 <= first <= second <= 1");
  if (!(crop_expand >= 1.0)) throw std::invalid_argument("crop_expand must be >= 1");
  if (min_region_px < 0) throw std::invalid_argument("min_region_px must be >= 0");
  if (query_side != 0 && query_side < 32) throw std::invalid_argument("query_side must be >= 32");
}

double adaptive_threshold(const ScoreMap& map) {
  if (map.empty()) throw std::invalid_argument("adaptive threshold of an empty map");
  double sum = 0.0;
  double max = map.values.front();
  for (float v : map.values) {
    sum += v;
    max = std::max(max, static_cast<double>(v));
  }
  return (sum / static_cast<double>(map.values.size()) + max) / 2.0;
}

std::vector<Detection> extract_candidates(const ScoreMap& final_map, const DetectionConfig& cfg) {
  const double thr = adaptive_threshold(final_map);
  Mask mask(final_map.width, final_map.height);
  for (std::size_t i = 0; i < final_map.values.size(); ++i) mask.bits[i] = final_map.values[i] >= thr ? 1 : 0;

  const int foot_w = static_cast<int>(std::lround(final_map.geometry.window_w));
  const int foot_h = static_cast<int>(std::lround(final_map.geometry.window_h));
  std::vector<Detection> out;
  for (const auto& comp : connected_components(mask)) {
    if (comp.box.area() < cfg.min_region_px) continue;
    int px = comp.box.x, py = comp.box.y;
    for (int y = comp.box.y; y < comp.box.y + comp.box.h; ++y)
      for (int x = comp.box.x; x < comp.box.x + comp.box.w; ++x)
        if (final_map.at(x, y) > final_map.at(px, py)) {
          px = x;
          py = y;
        }
    const double best = final_map.at(px, py);
    if (!above_threshold(best, cfg.first_threshold)) continue;
    Detection d;
    // The component is a locus of window centres; report the footprint of
    // the best window rather than the extent of the centres.
    d.box = foot_w > 1 || foot_h > 1 ? footprint_box(px, py, foot_w, foot_h, final_map.width, final_map.height)
                                     : comp.box;
    d.score = std::clamp(best, 0.0, 1.0);
    d.stage = 1;
    out.push_back(std::move(d));
  }
  sort_detections(out);
  return out;
}

Box footprint_box(int peak_x, int peak_y, int window_w, int window_h, int image_w, int image_h) {
  const int x0 = std::clamp(static_cast<int>(std::lround(peak_x + 0.5 - window_w / 2.0)), 0, image_w - 1);
  const int y0 = std::clamp(static_cast<int>(std::lround(peak_y + 0.5 - window_h / 2.0)), 0, image_h - 1);
  const int x1 = std::clamp(x0 + std::max(1, window_w), 1, image_w);
  const int y1 = std::clamp(y0 + std::max(1, window_h), 1, image_h);
  return {x0, y0, x1 - x0, y1 - y0};
}

Box expand_box(const Box& box, double factor, int image_w, int image_h) {
  const double cx = box.x + box.w / 2.0;
  const double cy = box.y + box.h / 2.0;
  const double w = box.w * factor, h = box.h * factor;
  const int x0 = std::clamp(static_cast<int>(std::lround(cx - w / 2.0)), 0, image_w);
  const int y0 = std::clamp(static_cast<int>(std::lround(cy - h / 2.0)), 0, image_h);
  const int x1 = std::clamp(static_cast<int>(std::lround(cx + w / 2.0)), 0, image_w);
  const int y1 = std::clamp(static_cast<int>(std::lround(cy + h / 2.0)), 0, image_h);
  return {x0, y0, x1 - x0, y1 - y0};
}

std::optional<CropDescriptorCache::Entry> CropDescriptorCache::find(const Key& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CropDescriptorCache::insert(const Key& key, Entry entry) {
  std::lock_guard lock(mutex_);
  entries_.emplace(key, std::move(entry));
}

Detector::Detector(std::shared_ptr<const WeightsBundle> weights, AggregationSetting setting, DetectionConfig cfg)
    : weights_(std::move(weights)), setting_(std::move(setting)), cfg_(cfg) {
  if (!weights_) throw std::invalid_argument("detector needs weights");
  setting_.validate();
  cfg_.validate();
}

int Detector::query_side() const { return cfg_.query_side > 0 ? cfg_.query_side : weights_->preprocessing().input_side; }

QueryModel Detector::prepare_query(const Image& query, std::string id) const {
  QueryModel model;
  model.id = std::move(id);
  model.side = query_side();
  model.pyramid = forward(*weights_, preprocess(query, model.side, weights_->preprocessing()), model.id);
  model.descriptors = query_descriptors(model.pyramid, setting_);
  return model;
}

FeaturePyramid Detector::extract_target(const Image& target, std::string id) const {
  return forward(*weights_, preprocess_native(target, weights_->preprocessing()), std::move(id));
}

double Detector::rescore_crop(const Image& target, const Box& box, const QueryModel& query, CropDescriptorCache* cache,
                              const std::string& image_id) const {
  const Box region = expand_box(box, cfg_.crop_expand, target.width, target.height);
  if (region.w < kMinCropSide || region.h < kMinCropSide) {
    spdlog::warn("crop {}x{} at ({}, {}) is too small to re-score; scoring 0", region.w, region.h, region.x, region.y);
    return 0.0;
  }
  const CropDescriptorCache::Key key{image_id, region.x, region.y, region.w, region.h, query.side};
  std::optional<CropDescriptorCache::Entry> entry;
  if (cache) entry = cache->find(key);

  std::optional<FeaturePyramid> pyr;
  auto crop_pyramid = [&]() -> const FeaturePyramid& {
    if (!pyr) pyr = forward(*weights_, preprocess(crop(target, region), query.side, weights_->preprocessing()));
    return *pyr;
  };

  if (cache && !entry) {
    CropDescriptorCache::Entry fresh;
    for (int b = 1; b <= kNumBlocks; ++b)
      for (QueryKind k : {QueryKind::GAP, QueryKind::GMP, QueryKind::GAMP, QueryKind::RAAC, QueryKind::RMAC,
                          QueryKind::RAMAC})
        fresh[b - 1][kind_index(k)] = describe(crop_pyramid().block(b), k, b, setting_.region_scales).vector;
    cache->insert(key, fresh);
    entry = std::move(fresh);
  }

  double sum = 0.0;
  int used = 0;
  for (const auto& q : query.descriptors) {
    if (!q) continue;
    const std::vector<float> v =
        entry ? (*entry)[q->block - 1][kind_index(q->kind)]
              : describe(crop_pyramid().block(q->block), q->kind, q->block, setting_.region_scales).vector;
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += static_cast<double>(v[i]) * q->vector[i];
    sum += dot;
    ++used;
  }
  if (used == 0) return 0.0;
  return std::clamp(sum / used, 0.0, 1.0);
}

DetectionResult Detector::run(const QueryModel& query, const Image& target, const FeaturePyramid& target_pyr,
                              const std::string& image_id, CropDescriptorCache* cache) const {
  if (query.side > target.width || query.side > target.height)
    throw WindowError("query (" + std::to_string(query.side) + " px) is larger than target " + image_id);
  DetectionResult result;
  result.score = score_target(query.descriptors, query.pyramid, target_pyr, setting_, target.width, target.height);
  result.adaptive_threshold = adaptive_threshold(result.score.final_map);
  result.candidates = extract_candidates(result.score.final_map, cfg_);
  for (auto& c : result.candidates) {
    c.query_id = query.id;
    c.image_id = image_id;
  }
  spdlog::debug("{} vs {}: blocks [{}], adaptive threshold {:.4f}, {} stage-1 candidates", query.id, image_id,
                fmt::join(result.score.blocks_used, ","), result.adaptive_threshold, result.candidates.size());

  if (!cfg_.stage2_enabled) {
    result.detections = result.candidates;
    return result;
  }
  for (const auto& c : result.candidates) {
    const double s = rescore_crop(target, c.box, query, cache, image_id);
    spdlog::debug("  candidate ({}, {}, {}, {}) stage-1 {:.4f} -> stage-2 {:.4f}", c.box.x, c.box.y, c.box.w, c.box.h,
                  c.score, s);
    if (!above_threshold(s, cfg_.second_threshold)) continue;
    Detection d = c;
    d.score = s;
    d.stage = 2;
    result.detections.push_back(std::move(d));
  }
  sort_detections(result.detections);
  return result;
}

DetectionResult Detector::detect(const QueryModel& query, const Image& target, const std::string& image_id) const {
  return run(query, target, extract_target(target, image_id), image_id);
}

std::vector<Detection> detect(const Image& query, const Image& target, std::shared_ptr<const WeightsBundle> weights,
                              const AggregationSetting& setting, const DetectionConfig& cfg) {
  Detector detector(std::move(weights), setting, cfg);
  return detector.detect(detector.prepare_query(query), target).detections;
}

}  // namespace oneshot
