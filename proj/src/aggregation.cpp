#include "oneshot/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace oneshot {

namespace {

// round-half-up(num / den) for non-negative num, positive den.
int div_round(long num, long den) { return static_cast<int>((2 * num + den) / (2 * den)); }

std::vector<int> anchors(int extent, int side, int count) {
  const int slack = extent - side;
  count = std::clamp(count, 1, slack + 1);
  std::vector<int> out;
  if (count == 1) {
    out.push_back(div_round(slack, 2));
    return out;
  }
  for (int k = 0; k < count; ++k) out.push_back(div_round(static_cast<long>(k) * slack, count - 1));
  return out;
}

void accumulate_region(const FeatureMap& fm, const Region& r, std::vector<float>& avg, std::vector<float>& max) {
  const int C = fm.channels();
  avg.assign(C, 0.0f);
  max.assign(C, 0.0f);
  const double inv = 1.0 / (static_cast<double>(r.side) * r.side);
  for (int c = 0; c < C; ++c) {
    const auto p = fm.plane(c);
    double sum = 0.0;
    float mx = p[static_cast<std::size_t>(r.y) * fm.width() + r.x];
    for (int y = r.y; y < r.y + r.side; ++y) {
      const float* row = p.data() + static_cast<std::size_t>(y) * fm.width();
      for (int x = r.x; x < r.x + r.side; ++x) {
        sum += row[x];
        mx = std::max(mx, row[x]);
      }
    }
    avg[c] = static_cast<float>(sum * inv);
    max[c] = mx;
  }
}

std::vector<float> concat_normalized(std::span<const float> a, std::span<const float> b) {
  std::vector<float> out = l2_normalize(a);
  const auto nb = l2_normalize(b);
  out.insert(out.end(), nb.begin(), nb.end());
  l2_normalize_inplace(out);
  return out;
}

}  // namespace

std::vector<int> RegionGrid::counts_per_scale() const {
  std::vector<int> counts(scales, 0);
  for (const auto& r : regions) ++counts.at(r.scale - 1);
  return counts;
}

int region_side(int width, int height, int scale) {
  const int short_side = std::min(width, height);
  if (scale <= 1) return short_side;
  return std::max(1, div_round(2L * short_side, scale + 1));
}

double long_axis_overlap(int width, int height, int m) {
  const int extent = std::max(width, height);
  const double side = region_side(width, height, 2);
  const double spacing = (extent - side) / m;
  return (side - spacing) / side;
}

int choose_region_m(int width, int height) {
  const int extent = std::max(width, height);
  const int side = region_side(width, height, 2);
  if (extent <= side) return 1;
  // Overlap grows monotonically with m, so the optimum brackets the
  // continuous solution of overlap(m) = 0.4.
  const double ideal = (extent - side) / (0.6 * side);
  const int lo = std::max(1, static_cast<int>(std::floor(ideal)));
  const int hi = std::max(1, static_cast<int>(std::ceil(ideal)));
  const double dlo = std::abs(long_axis_overlap(width, height, lo) - 0.4);
  const double dhi = std::abs(long_axis_overlap(width, height, hi) - 0.4);
  return dhi < dlo ? hi : lo;
}

RegionGrid build_region_grid(int width, int height, int scales, std::optional<int> m) {
  if (width < 1 || height < 1) throw std::invalid_argument("region grid needs a non-empty map");
  if (scales < 1) throw std::invalid_argument("region grid needs at least one scale");
  RegionGrid grid;
  grid.scales = scales;
  grid.m = m ? std::max(1, *m) : choose_region_m(width, height);
  const bool wide = width >= height;
  for (int l = 1; l <= scales; ++l) {
    const int side = region_side(width, height, l);
    const int long_count = l + grid.m - 1;
    const auto xs = anchors(width, side, wide ? long_count : l);
    const auto ys = anchors(height, side, wide ? l : long_count);
    for (int y : ys) {
      for (int x : xs) {
        const Region r{x, y, side, l};
        const bool dup = std::any_of(grid.regions.begin(), grid.regions.end(), [&](const Region& o) {
          return o.scale == r.scale && o.x == r.x && o.y == r.y && o.side == r.side;
        });
        if (!dup) grid.regions.push_back(r);
      }
    }
  }
  return grid;
}

std::string_view to_string(QueryKind kind) {
  switch (kind) {
    case QueryKind::GAP: return "GAP";
    case QueryKind::GMP: return "GMP";
    case QueryKind::GAMP: return "GA&MP";
    case QueryKind::RAAC: return "R-AAC";
    case QueryKind::RMAC: return "R-MAC";
    case QueryKind::RAMAC: return "R-AMAC";
  }
  return "?";
}

std::string_view to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::AP: return "AP";
    case TargetKind::MP: return "MP";
    case TargetKind::AMP: return "A&MP";
  }
  return "?";
}

QueryKind parse_query_kind(std::string_view s) {
  if (s == "GAP") return QueryKind::GAP;
  if (s == "GMP") return QueryKind::GMP;
  if (s == "GA&MP" || s == "GAMP") return QueryKind::GAMP;
  if (s == "R-AAC" || s == "RAAC") return QueryKind::RAAC;
  if (s == "R-MAC" || s == "RMAC") return QueryKind::RMAC;
  if (s == "R-AMAC" || s == "RAMAC") return QueryKind::RAMAC;
  throw std::invalid_argument("unknown query aggregation '" + std::string(s) + "'");
}

TargetKind parse_target_kind(std::string_view s) {
  if (s == "AP") return TargetKind::AP;
  if (s == "MP") return TargetKind::MP;
  if (s == "A&MP" || s == "AMP") return TargetKind::AMP;
  throw std::invalid_argument("unknown target aggregation '" + std::string(s) + "'");
}

TargetKind compatible_target(QueryKind kind) {
  switch (kind) {
    case QueryKind::GAP:
    case QueryKind::RAAC: return TargetKind::AP;
    case QueryKind::GMP:
    case QueryKind::RMAC: return TargetKind::MP;
    case QueryKind::GAMP:
    case QueryKind::RAMAC: return TargetKind::AMP;
  }
  return TargetKind::AMP;
}

QueryDescriptor regional_descriptor(const FeatureMap& fm, const RegionGrid& grid, Branch branch, int block) {
  if (grid.regions.empty()) throw std::invalid_argument("no regions");
  const int C = fm.channels();
  std::vector<double> sum_avg(C, 0.0), sum_max(C, 0.0);
  std::vector<float> avg, max;
  for (const auto& r : grid.regions) {
    if (r.x < 0 || r.y < 0 || r.x + r.side > fm.width() || r.y + r.side > fm.height())
      throw std::invalid_argument("region outside feature map");
    accumulate_region(fm, r, avg, max);
    l2_normalize_inplace(avg);
    l2_normalize_inplace(max);
    for (int c = 0; c < C; ++c) {
      sum_avg[c] += avg[c];
      sum_max[c] += max[c];
    }
  }
  std::vector<float> a(sum_avg.begin(), sum_avg.end()), m(sum_max.begin(), sum_max.end());
  QueryDescriptor d;
  d.block = block;
  switch (branch) {
    case Branch::Avg:
      d.kind = QueryKind::RAAC;
      d.vector = l2_normalize(a);
      break;
    case Branch::Max:
      d.kind = QueryKind::RMAC;
      d.vector = l2_normalize(m);
      break;
    case Branch::Both:
      d.kind = QueryKind::RAMAC;
      d.vector = concat_normalized(a, m);
      break;
  }
  return d;
}

QueryDescriptor global_descriptor(const FeatureMap& fm, QueryKind kind, int block) {
  if (fm.empty()) throw std::invalid_argument("empty feature map");
  const int C = fm.channels();
  std::vector<float> avg(C), max(C);
  const double inv = 1.0 / static_cast<double>(fm.plane_size());
  for (int c = 0; c < C; ++c) {
    const auto p = fm.plane(c);
    double s = 0.0;
    float mx = p[0];
    for (float v : p) {
      s += v;
      mx = std::max(mx, v);
    }
    avg[c] = static_cast<float>(s * inv);
    max[c] = mx;
  }
  QueryDescriptor d;
  d.block = block;
  d.kind = kind;
  switch (kind) {
    case QueryKind::GAP: d.vector = l2_normalize(avg); break;
    case QueryKind::GMP: d.vector = l2_normalize(max); break;
    case QueryKind::GAMP: d.vector = concat_normalized(avg, max); break;
    default: throw std::invalid_argument("global_descriptor expects GAP, GMP or GA&MP");
  }
  return d;
}

QueryDescriptor describe(const FeatureMap& fm, QueryKind kind, int block, int scales) {
  switch (kind) {
    case QueryKind::GAP:
    case QueryKind::GMP:
    case QueryKind::GAMP: return global_descriptor(fm, kind, block);
    case QueryKind::RAAC: return regional_descriptor(fm, build_region_grid(fm.width(), fm.height(), scales), Branch::Avg, block);
    case QueryKind::RMAC: return regional_descriptor(fm, build_region_grid(fm.width(), fm.height(), scales), Branch::Max, block);
    case QueryKind::RAMAC:
      return regional_descriptor(fm, build_region_grid(fm.width(), fm.height(), scales), Branch::Both, block);
  }
  throw std::invalid_argument("unknown query kind");
}

std::vector<int> AggregationSetting::enabled_blocks() const {
  std::vector<int> out;
  for (int b = 1; b <= kNumBlocks; ++b)
    if (block(b).enabled()) out.push_back(b);
  return out;
}

void AggregationSetting::validate() const {
  bool any = false;
  for (int b = 1; b <= kNumBlocks; ++b) {
    const auto& s = block(b);
    if (s.query.has_value() != s.target.has_value())
      throw std::invalid_argument("block " + std::to_string(b) + " is only partially configured");
    if (!s.query) continue;
    any = true;
    if (compatible_target(*s.query) != *s.target)
      throw std::invalid_argument("block " + std::to_string(b) + ": " + std::string(to_string(*s.query)) +
                                  " is incompatible with target " + std::string(to_string(*s.target)));
  }
  if (!any) throw std::invalid_argument("aggregation setting enables no blocks");
  if (region_scales < 1) throw std::invalid_argument("region_scales must be >= 1");
}

std::vector<std::string> AggregationSetting::preset_labels() { return {"a", "b", "c", "d", "e", "f", "g"}; }

AggregationSetting AggregationSetting::preset(std::string_view label) {
  AggregationSetting s;
  s.name = std::string(label);
  auto fill = [&](QueryKind low, QueryKind high) {
    for (int b = 0; b < kNumBlocks; ++b) {
      const QueryKind q = b < 3 ? low : high;
      s.blocks[b] = {q, compatible_target(q)};
    }
  };
  if (label == "a") {
    fill(QueryKind::GAMP, QueryKind::RAMAC);
  } else if (label == "b") {
    s.blocks[4] = {QueryKind::RAMAC, TargetKind::AMP};
  } else if (label == "c") {
    fill(QueryKind::GAMP, QueryKind::GAMP);
  } else if (label == "d") {
    fill(QueryKind::GAP, QueryKind::GAP);
  } else if (label == "e") {
    fill(QueryKind::GMP, QueryKind::GMP);
  } else if (label == "f") {
    fill(QueryKind::GAP, QueryKind::RAAC);
  } else if (label == "g") {
    fill(QueryKind::GMP, QueryKind::RMAC);
  } else {
    throw std::invalid_argument("unknown setting '" + std::string(label) + "' (expected a..g)");
  }
  return s;
}

AggregationSetting AggregationSetting::parse(std::string_view text) {
  if (text.size() == 1) return preset(text);
  AggregationSetting s;
  s.name = std::string(text);
  std::stringstream ss{std::string(text)};
  std::string item;
  int b = 0;
  while (std::getline(ss, item, ',')) {
    if (b >= kNumBlocks) throw std::invalid_argument("inline setting lists more than 5 blocks");
    if (item != "-") {
      const auto slash = item.find('/');
      if (slash == std::string::npos) throw std::invalid_argument("inline setting entry '" + item + "' lacks '/'");
      s.blocks[b] = {parse_query_kind(item.substr(0, slash)), parse_target_kind(item.substr(slash + 1))};
    }
    ++b;
  }
  if (b != kNumBlocks) throw std::invalid_argument("inline setting must list exactly 5 blocks");
  s.validate();
  return s;
}

std::string AggregationSetting::to_spec() const {
  std::string out;
  for (int b = 0; b < kNumBlocks; ++b) {
    if (b) out += ',';
    if (!blocks[b].enabled()) {
      out += '-';
    } else {
      out += std::string(to_string(*blocks[b].query)) + "/" + std::string(to_string(*blocks[b].target));
    }
  }
  return out;
}

std::array<std::optional<QueryDescriptor>, kNumBlocks> query_descriptors(const FeaturePyramid& pyr,
                                                                         const AggregationSetting& setting) {
  setting.validate();
  std::array<std::optional<QueryDescriptor>, kNumBlocks> out;
  for (int b = 1; b <= kNumBlocks; ++b) {
    const auto& s = setting.block(b);
    if (s.query) out[b - 1] = describe(pyr.block(b), *s.query, b, setting.region_scales);
  }
  return out;
}

ScoreGeometry PooledMap::geometry() const {
  const double s = features.stride();
  ScoreGeometry g;
  g.step_x = s;
  g.step_y = s;
  g.window_w = window_w * s;
  g.window_h = window_h * s;
  g.origin_x = g.window_w / 2.0;
  g.origin_y = g.window_h / 2.0;
  return g;
}

PooledMap target_feature_map(const FeatureMap& fm, TargetKind kind, int win_w, int win_h) {
  PooledMap out;
  out.window_w = win_w;
  out.window_h = win_h;
  out.kind = kind;
  switch (kind) {
    case TargetKind::AP:
      out.features = window_average_map(fm, win_w, win_h);
      normalize_positions(out.features);
      break;
    case TargetKind::MP:
      out.features = window_max_map(fm, win_w, win_h);
      normalize_positions(out.features);
      break;
    case TargetKind::AMP: {
      FeatureMap avg = window_average_map(fm, win_w, win_h);
      normalize_positions(avg);
      FeatureMap max = window_max_map(fm, win_w, win_h);
      normalize_positions(max);
      std::vector<float> data = std::move(avg.data());
      data.insert(data.end(), max.data().begin(), max.data().end());
      out.features = FeatureMap(max.width(), max.height(), 2 * fm.channels(), fm.stride(), std::move(data));
      normalize_positions(out.features);
      break;
    }
  }
  return out;
}

}  // namespace oneshot
