#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oneshot/backbone.hpp"
#include "oneshot/tensor.hpp"

namespace oneshot {

/// Square region in feature-cell coordinates.
struct Region {
  int x = 0;
  int y = 0;
  int side = 1;
  int scale = 1;
  bool operator==(const Region&) const = default;
};

struct RegionGrid {
  int scales = 3;
  int m = 1;
  std::vector<Region> regions;

  std::vector<int> counts_per_scale() const;
};

/// Side of the square regions at a scale: min(W, H) at scale 1, otherwise
/// round-half-up(2 * min(W, H) / (scale + 1)), at least 1.
int region_side(int width, int height, int scale);

/// Fractional overlap of neighbouring scale-2 regions along the long axis
/// when that axis carries m + 1 regions. Negative values mean a gap.
double long_axis_overlap(int width, int height, int m);

/// m whose scale-2 long-axis overlap is closest to 40%.
int choose_region_m(int width, int height);

/// Uniformly spaced square regions at `scales` scales. Scale l places l
/// regions along the short axis and l + m - 1 along the long one; m is chosen
/// by choose_region_m when not supplied. Counts clamp so regions fit, and
/// duplicates within a scale are dropped. Two scales may share a region on
/// small maps; both copies are kept.
RegionGrid build_region_grid(int width, int height, int scales = 3, std::optional<int> m = std::nullopt);

enum class QueryKind { GAP, GMP, GAMP, RAAC, RMAC, RAMAC };
enum class TargetKind { AP, MP, AMP };

std::string_view to_string(QueryKind kind);
std::string_view to_string(TargetKind kind);
QueryKind parse_query_kind(std::string_view s);
TargetKind parse_target_kind(std::string_view s);

/// Target kind whose per-position vectors are dimension-compatible with kind.
TargetKind compatible_target(QueryKind kind);

struct QueryDescriptor {
  int block = 1;
  QueryKind kind = QueryKind::GAMP;
  std::vector<float> vector;
};

enum class Branch { Avg, Max, Both };

/// R-AAC (Avg), R-MAC (Max) or R-AMAC (Both) over the grid's regions.
QueryDescriptor regional_descriptor(const FeatureMap& fm, const RegionGrid& grid, Branch branch, int block = 1);

/// GAP, GMP or GA&MP of the whole map.
QueryDescriptor global_descriptor(const FeatureMap& fm, QueryKind kind, int block = 1);

/// Dispatches to global_descriptor or regional_descriptor (default grid).
QueryDescriptor describe(const FeatureMap& fm, QueryKind kind, int block = 1, int scales = 3);

struct BlockSetting {
  std::optional<QueryKind> query;
  std::optional<TargetKind> target;

  bool enabled() const { return query.has_value(); }
};

/// Per-block query/target aggregation choice; presets "a".."g".
struct AggregationSetting {
  std::string name;
  std::array<BlockSetting, kNumBlocks> blocks;
  int region_scales = 3;

  const BlockSetting& block(int index) const { return blocks.at(index - 1); }
  std::vector<int> enabled_blocks() const;

  /// Throws std::invalid_argument on incompatible or half-configured blocks.
  void validate() const;

  static AggregationSetting preset(std::string_view label);
  static std::vector<std::string> preset_labels();

  /// Parses a preset label or an inline spec of five comma-separated
  /// "QUERY/TARGET" pairs, '-' disabling a block, e.g.
  /// "-,-,-,GMP/MP,R-MAC/MP".
  static AggregationSetting parse(std::string_view text);
  std::string to_spec() const;
};

/// One descriptor per enabled block.
std::array<std::optional<QueryDescriptor>, kNumBlocks> query_descriptors(const FeaturePyramid& pyr,
                                                                         const AggregationSetting& setting);

/// Sliding-window target map with unit-norm vectors at every position.
struct PooledMap {
  FeatureMap features;  // C channels (AP, MP) or 2C (A&MP)
  int window_w = 1;     // feature cells
  int window_h = 1;
  TargetKind kind = TargetKind::AMP;

  /// Pixel-space mapping of each valid window to its centre.
  ScoreGeometry geometry() const;
};

PooledMap target_feature_map(const FeatureMap& fm, TargetKind kind, int win_w, int win_h);

}  // namespace oneshot
