#pragma once

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "oneshot/aggregation.hpp"
#include "oneshot/backbone.hpp"
#include "oneshot/image.hpp"
#include "oneshot/similarity.hpp"

namespace oneshot {

struct Detection {
  Box box;
  double score = 0.0;
  int stage = 1;
  std::string query_id;
  std::string image_id;

  bool operator==(const Detection&) const = default;
};

struct DetectionConfig {
  double first_threshold = 0.7;
  double second_threshold = 0.9;
  double crop_expand = 1.2;
  int min_region_px = 16;
  bool stage2_enabled = true;
  // Side the query is resized to before feature extraction; 0 selects the
  // weights' preprocessing input_side.
  int query_side = 0;

  /// Throws std::invalid_argument when the thresholds are out of order.
  void validate() const;
};

/// Both fixed thresholds keep only scores strictly above them.
inline bool above_threshold(double score, double threshold) { return score > threshold; }

/// (mean + max) / 2 over all values.
double adaptive_threshold(const ScoreMap& map);

/// Binarises at >= adaptive_threshold and takes 8-connected components,
/// dropping components whose bounding box is smaller than min_region_px.
/// Each component is scored by its maximum and kept if above
/// first_threshold. When the map's geometry records a window extent, the
/// candidate box is that window centred on the component's peak; otherwise
/// it is the component's bounding box. Sorted by descending score.
std::vector<Detection> extract_candidates(const ScoreMap& final_map, const DetectionConfig& cfg);

/// window_w x window_h box centred on pixel (peak_x, peak_y), clipped.
Box footprint_box(int peak_x, int peak_y, int window_w, int window_h, int image_w, int image_h);

/// Box scaled about its centre by `factor` and clipped to the image.
Box expand_box(const Box& box, double factor, int image_w, int image_h);

struct QueryModel {
  std::string id;
  int side = 224;
  FeaturePyramid pyramid;
  std::array<std::optional<QueryDescriptor>, kNumBlocks> descriptors;
};

/// Descriptors of re-scored crops, keyed by (image id, crop box, side), so
/// repeated runs over one target avoid recomputing the backbone.
class CropDescriptorCache {
 public:
  using Key = std::tuple<std::string, int, int, int, int, int>;
  using Entry = std::array<std::array<std::vector<float>, 6>, kNumBlocks>;

  std::optional<Entry> find(const Key& key) const;
  void insert(const Key& key, Entry entry);

 private:
  mutable std::mutex mutex_;
  std::map<Key, Entry> entries_;
};

struct DetectionResult {
  FusedScore score;
  double adaptive_threshold = 0.0;
  std::vector<Detection> candidates;  // stage 1
  std::vector<Detection> detections;  // final output
};

class Detector {
 public:
  Detector(std::shared_ptr<const WeightsBundle> weights, AggregationSetting setting, DetectionConfig cfg = {});

  const AggregationSetting& setting() const { return setting_; }
  const DetectionConfig& config() const { return cfg_; }
  int query_side() const;

  QueryModel prepare_query(const Image& query, std::string id = "query") const;
  FeaturePyramid extract_target(const Image& target, std::string id = "target") const;

  /// Mean per-block cosine between the query descriptors and the same
  /// aggregation of the expanded, resized crop. Crops under 8 px a side
  /// score 0.
  double rescore_crop(const Image& target, const Box& box, const QueryModel& query,
                      CropDescriptorCache* cache = nullptr, const std::string& image_id = {}) const;

  DetectionResult run(const QueryModel& query, const Image& target, const FeaturePyramid& target_pyr,
                      const std::string& image_id = "target", CropDescriptorCache* cache = nullptr) const;

  DetectionResult detect(const QueryModel& query, const Image& target, const std::string& image_id = "target") const;

 private:
  std::shared_ptr<const WeightsBundle> weights_;
  AggregationSetting setting_;
  DetectionConfig cfg_;
};

/// One-call pipeline: returns the final detections sorted by score.
std::vector<Detection> detect(const Image& query, const Image& target, std::shared_ptr<const WeightsBundle> weights,
                              const AggregationSetting& setting, const DetectionConfig& cfg = {});

}  // namespace oneshot
