#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "oneshot/aggregation.hpp"
#include "oneshot/backbone.hpp"
#include "oneshot/tensor.hpp"

namespace oneshot {

class WindowError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Cosine similarity of the unit query vector against every unit target
/// position: a 1x1 convolution. Geometry comes from the pooled map.
ScoreMap block_score_map(const QueryDescriptor& query, const PooledMap& target);

/// Pooling window for a block: the query's feature size at that block.
/// Throws WindowError when it does not fit the target's block.
std::pair<int, int> choose_window(const FeaturePyramid& query, const FeaturePyramid& target, int block);

struct BlockScore {
  int block = 0;
  ScoreMap map;
};

struct FusedScore {
  ScoreMap final_map;
  std::vector<BlockScore> per_block;  // resampled to target pixels
  std::vector<int> blocks_used;
};

/// Resamples each block map onto the target pixel grid via its geometry and
/// averages them pixelwise.
FusedScore fuse(const std::vector<BlockScore>& per_block, int target_w, int target_h);

/// Full similarity stage: pooled target maps, block scores and fusion for
/// every enabled block whose query window fits. Blocks that do not fit are
/// dropped with a warning; throws WindowError if none fit.
FusedScore score_target(const std::array<std::optional<QueryDescriptor>, kNumBlocks>& query,
                        const FeaturePyramid& query_pyr, const FeaturePyramid& target_pyr,
                        const AggregationSetting& setting, int target_w, int target_h);

}  // namespace oneshot
