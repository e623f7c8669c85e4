#include "oneshot/similarity.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <string>

namespace oneshot {

ScoreMap block_score_map(const QueryDescriptor& query, const PooledMap& target) {
  const FeatureMap& t = target.features;
  if (query.vector.size() != static_cast<std::size_t>(t.channels()))
    throw std::invalid_argument("incompatible query/target kinds");
  const std::size_t n = t.plane_size();
  std::vector<double> acc(n, 0.0);
  for (int c = 0; c < t.channels(); ++c) {
    const double q = query.vector[c];
    if (q == 0.0) continue;
    const auto p = t.plane(c);
    for (std::size_t i = 0; i < n; ++i) acc[i] += q * p[i];
  }
  ScoreMap out(t.width(), t.height(), 0.0f, target.geometry());
  for (std::size_t i = 0; i < n; ++i) out.values[i] = static_cast<float>(std::clamp(acc[i], -1.0, 1.0));
  return out;
}

std::pair<int, int> choose_window(const FeaturePyramid& query, const FeaturePyramid& target, int block) {
  const FeatureMap& q = query.block(block);
  const FeatureMap& t = target.block(block);
  if (q.width() > t.width() || q.height() > t.height())
    throw WindowError("query exceeds target at block " + std::to_string(block));
  return {q.width(), q.height()};
}

FusedScore fuse(const std::vector<BlockScore>& per_block, int target_w, int target_h) {
  if (per_block.empty()) throw std::invalid_argument("fuse needs at least one score map");
  FusedScore out;
  std::vector<double> sum(static_cast<std::size_t>(target_w) * target_h, 0.0);
  for (const auto& bs : per_block) {
    ScoreMap up = resample_to_pixels(bs.map, target_w, target_h);
    up.geometry.window_w = bs.map.geometry.window_w;
    up.geometry.window_h = bs.map.geometry.window_h;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += up.values[i];
    out.blocks_used.push_back(bs.block);
    out.per_block.push_back({bs.block, std::move(up)});
  }
  out.final_map = ScoreMap(target_w, target_h);
  const double inv = 1.0 / static_cast<double>(per_block.size());
  double win_w = 0.0, win_h = 0.0;
  for (const auto& bs : per_block) {
    win_w += bs.map.geometry.window_w * inv;
    win_h += bs.map.geometry.window_h * inv;
  }
  out.final_map.geometry.window_w = win_w;
  out.final_map.geometry.window_h = win_h;
  for (std::size_t i = 0; i < sum.size(); ++i) out.final_map.values[i] = static_cast<float>(sum[i] * inv);
  return out;
}

FusedScore score_target(const std::array<std::optional<QueryDescriptor>, kNumBlocks>& query,
                        const FeaturePyramid& query_pyr, const FeaturePyramid& target_pyr,
                        const AggregationSetting& setting, int target_w, int target_h) {
  std::vector<BlockScore> maps;
  for (int b : setting.enabled_blocks()) {
    const auto& q = query[b - 1];
    if (!q) continue;
    std::pair<int, int> win;
    try {
      win = choose_window(query_pyr, target_pyr, b);
    } catch (const WindowError& e) {
      spdlog::warn("{}; dropping block {}", e.what(), b);
      continue;
    }
    const PooledMap pooled = target_feature_map(target_pyr.block(b), *setting.block(b).target, win.first, win.second);
    spdlog::debug("block {}: {} query vs {} target, window {}x{}, score map {}x{}", b, to_string(q->kind),
                  to_string(pooled.kind), win.first, win.second, pooled.features.width(), pooled.features.height());
    maps.push_back({b, block_score_map(*q, pooled)});
  }
  if (maps.empty()) throw WindowError("query exceeds target at every configured block");
  return fuse(maps, target_w, target_h);
}

}  // namespace oneshot
