// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. `oneshot_acceptance 3 6` runs a subset.

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "golden.hpp"
#include "oneshot/detection.hpp"
#include "oneshot/eval.hpp"
#include "oneshot/io.hpp"
#include "oneshot/synthetic.hpp"
#include "oracles.hpp"

using namespace oneshot;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::shared_ptr<const WeightsBundle> weights() {
  static const auto w = std::make_shared<const WeightsBundle>(synthetic_vgg16_weights(0));
  return w;
}

const std::array<QueryKind, 6> kQueryKinds{QueryKind::GAP,  QueryKind::GMP,  QueryKind::GAMP,
                                           QueryKind::RAAC, QueryKind::RMAC, QueryKind::RAMAC};

int code_of(TargetKind k) { return k == TargetKind::AP ? 0 : k == TargetKind::MP ? 1 : 2; }

Outcome window_oracle() {
  std::mt19937_64 rng(1001);
  double worst_rel = 0.0;
  long max_mismatch = 0;
  for (int t = 0; t < 50; ++t) {
    const int w = 1 + static_cast<int>(rng() % 32), h = 1 + static_cast<int>(rng() % 32);
    const int c = 1 + static_cast<int>(rng() % 8);
    const int ww = 1 + static_cast<int>(rng() % w), wh = 1 + static_cast<int>(rng() % h);
    const auto fm = oracle::random_map(rng, w, h, c, true);
    const auto avg = window_average_map(fm, ww, wh), ref_avg = oracle::window_mean(fm, ww, wh);
    const auto mx = window_max_map(fm, ww, wh), ref_max = oracle::window_max(fm, ww, wh);
    if (avg.data().size() != ref_avg.data().size() || mx.data().size() != ref_max.data().size())
      return {false, fmt::format("shape mismatch on trial {}", t)};
    for (std::size_t i = 0; i < avg.data().size(); ++i) {
      const double ref = ref_avg.data()[i];
      worst_rel = std::max(worst_rel, std::abs(avg.data()[i] - ref) / std::max(std::abs(ref), 1e-30));
      if (mx.data()[i] != ref_max.data()[i]) ++max_mismatch;
    }
  }

  std::mt19937_64 big_rng(7);
  const auto big = oracle::random_map(big_rng, 128, 128, 64, true);
  auto t0 = Clock::now();
  const auto fast_avg = window_average_map(big, 32, 32);
  const auto fast_max = window_max_map(big, 32, 32);
  const double fast = seconds_since(t0);
  t0 = Clock::now();
  const auto slow_avg = oracle::window_mean(big, 32, 32);
  const auto slow_max = oracle::window_max(big, 32, 32);
  const double slow = seconds_since(t0);
  const bool big_equal = fast_max.data() == slow_max.data() && fast_avg.data().size() == slow_avg.data().size();

  Outcome o;
  o.pass = worst_rel <= 1e-5 && max_mismatch == 0 && big_equal && fast <= slow / 5.0;
  o.detail = fmt::format("50 maps: avg max rel err {:.2e}, max mismatches {}; 128x128x64/32x32: fast {:.4f}s vs naive "
                         "{:.3f}s (ratio 1/{:.0f})",
                         worst_rel, max_mismatch, fast, slow, slow / fast);
  return o;
}

Outcome score_map_equivalence() {
  std::mt19937_64 rng(2002);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const QueryKind kind = kQueryKinds[t % 6];
    const TargetKind tk = compatible_target(kind);
    const int c = 2 + static_cast<int>(rng() % 15);
    const int qw = 1 + static_cast<int>(rng() % 6), qh = 1 + static_cast<int>(rng() % 6);
    const int tw = qw + static_cast<int>(rng() % 20), th = qh + static_cast<int>(rng() % 20);
    const auto q = oracle::random_map(rng, qw, qh, c, true);
    const auto target = oracle::random_map(rng, tw, th, c, true);
    const auto qd = describe(q, kind);
    const auto sm = block_score_map(qd, target_feature_map(target, tk, qw, qh));
    if (sm.width != tw - qw + 1 || sm.height != th - qh + 1) return {false, fmt::format("trial {}: bad shape", t)};
    for (int y = 0; y < sm.height; ++y)
      for (int x = 0; x < sm.width; ++x) {
        const auto crop = oracle::rect_descriptor(target, x, y, qw, qh, code_of(tk));
        worst = std::max(worst, std::abs(sm.at(x, y) - oracle::dot(crop, qd.vector)));
      }
  }
  return {worst <= 1e-5, fmt::format("20 pairs, max |score - crop dot| = {:.2e}", worst)};
}

Outcome backbone_golden() {
  double worst = 0.0;
  int images = 0;
  bool shapes = true;
  for (const auto& c : golden::load()) {
    const auto pyr = forward(*weights(), preprocess_native(c.image));
    for (int b = 1; b <= kNumBlocks; ++b) {
      const auto& got = pyr.block(b);
      const auto& ref = c.blocks[b - 1];
      if (got.width() != ref.width() || got.height() != ref.height() || got.channels() != ref.channels()) {
        shapes = false;
        continue;
      }
      worst = std::max(worst, golden::max_abs_diff(got, ref));
    }
    ++images;
  }
  const auto pyr = forward(*weights(), preprocess(synthetic::background(320, 240, 1), 224));
  std::string sides;
  const std::array<int, kNumBlocks> expect{112, 56, 28, 14, 7};
  for (int b = 1; b <= kNumBlocks; ++b) {
    shapes = shapes && pyr.block(b).width() == expect[b - 1] && pyr.block(b).height() == expect[b - 1] &&
             pyr.block(b).channels() == kBlockChannels[b - 1];
    sides += fmt::format("{}{}", b > 1 ? "," : "", pyr.block(b).width());
  }
  return {images == 3 && shapes && worst <= 1e-3,
          fmt::format("{} reference images, max |delta| {:.2e}; block sides at 224: {}", images, worst, sides)};
}

Outcome region_grid() {
  bool counts_ok = true;
  for (int side = 5; side <= 64; ++side)
    counts_ok = counts_ok && build_region_grid(side, side, 3, 1).counts_per_scale() == std::vector<int>{1, 4, 9};

  std::mt19937_64 rng(4004);
  int optimal = 0;
  std::string worst;
  for (int t = 0; t < 20; ++t) {
    const int w = 2 + static_cast<int>(rng() % 63), h = 2 + static_cast<int>(rng() % 63);
    const int levels = 1 + static_cast<int>(rng() % 4);
    const auto grid = build_region_grid(w, h, levels);
    double best = 1e9;
    for (int m = 1; m <= 8; ++m) best = std::min(best, std::abs(oracle::scale2_overlap(w, h, m) - 0.4));
    const double dev = std::abs(oracle::scale2_overlap(w, h, grid.m) - 0.4);
    if (dev <= best + 1e-12 && static_cast<int>(grid.counts_per_scale().size()) == levels)
      ++optimal;
    else
      worst = fmt::format(" (failed at {}x{} L={}: m={})", w, h, levels, grid.m);
  }
  return {counts_ok && optimal == 20,
          fmt::format("square m=1 counts 1/4/9 for sides 5..64: {}; overlap-optimal m in {}/20 random (W,H,L){}",
                      counts_ok ? "yes" : "no", optimal, worst)};
}

Outcome descriptor_invariants() {
  std::mt19937_64 rng(5005);
  double norm_err = 0.0, desc_diff = 0.0, score_diff = 0.0;
  for (int t = 0; t < 10; ++t) {
    const int w = 4 + static_cast<int>(rng() % 12), h = 4 + static_cast<int>(rng() % 12);
    const auto fm = oracle::random_map(rng, w, h, 8, true);
    const auto target = oracle::random_map(rng, w + 9, h + 7, 8, true);
    for (double k : {1e-3, 0.37, 3.7, 1e3}) {
      FeatureMap scaled = fm, tscaled = target;
      for (auto& v : scaled.data()) v = static_cast<float>(v * k);
      for (auto& v : tscaled.data()) v = static_cast<float>(v * k);
      for (QueryKind kind : kQueryKinds) {
        const auto a = describe(fm, kind), b = describe(scaled, kind);
        double n = 0.0;
        for (std::size_t i = 0; i < a.vector.size(); ++i) {
          n += static_cast<double>(a.vector[i]) * a.vector[i];
          desc_diff = std::max(desc_diff, static_cast<double>(std::abs(a.vector[i] - b.vector[i])));
        }
        norm_err = std::max(norm_err, std::abs(std::sqrt(n) - 1.0));
        const TargetKind tk = compatible_target(kind);
        const auto pa = target_feature_map(target, tk, w, h), pb = target_feature_map(tscaled, tk, w, h);
        for (std::size_t i = 0; i < pa.features.data().size(); ++i)
          desc_diff = std::max(desc_diff, static_cast<double>(std::abs(pa.features.data()[i] - pb.features.data()[i])));
        const auto sa = block_score_map(a, pa), sb = block_score_map(b, pb);
        for (std::size_t i = 0; i < sa.values.size(); ++i)
          score_diff = std::max(score_diff, static_cast<double>(std::abs(sa.values[i] - sb.values[i])));
      }
    }
  }
  return {norm_err <= 1e-6 && desc_diff <= 1e-6 && score_diff <= 1e-6,
          fmt::format("max | |d| - 1 | {:.1e}; under scaling by 1e-3..1e3: descriptors {:.1e}, score maps {:.1e}",
                      norm_err, desc_diff, score_diff)};
}

Outcome planted_query() {
  DetectionConfig cfg;
  cfg.query_side = 64;
  const Detector det(weights(), AggregationSetting::preset("a"), cfg);
  int found = 0, quiet = 0;
  double iou_sum = 0.0;
  for (int s = 0; s < 10; ++s) {
    const Image query = synthetic::tank_object(64, s);
    const auto scene = synthetic::make_scene(query, {256, 256, 1, 1, 0}, 100 + s);
    const auto model = det.prepare_query(query, "q");
    double best = 0.0;
    for (const auto& d : det.detect(model, scene.image, "scene").detections) best = std::max(best, iou(d.box, scene.planted[0]));
    iou_sum += best;
    if (best >= 0.5) ++found;

    const std::uint8_t r = static_cast<std::uint8_t>(25 * s), g = static_cast<std::uint8_t>(255 - 20 * s);
    if (det.detect(model, synthetic::blank(256, 256, r, g, 128), "blank").detections.empty()) ++quiet;
  }
  return {found >= 9 && quiet == 10,
          fmt::format("planted found {}/10 (mean best IoU {:.3f}); blank targets with no detections {}/10", found,
                      iou_sum / 10, quiet)};
}

Outcome two_stage_direction() {
  const auto corpus = synthetic::make_corpus({});
  DetectionConfig cfg;
  cfg.query_side = 64;
  const Detector det(weights(), AggregationSetting::preset("a"), cfg);
  std::vector<QueryRun> first, second;
  int scenes = 0, subset = 0;
  for (const auto& q : corpus.queries) {
    const auto model = det.prepare_query(q.image, q.id);
    QueryRun a{q.id, q.target_ids, {}}, b{q.id, q.target_ids, {}};
    for (const auto& t : q.target_ids) {
      const auto r = det.detect(model, corpus.target(t).image, t);
      ++scenes;
      const bool ok = std::all_of(r.detections.begin(), r.detections.end(), [&](const Detection& d) {
        return std::any_of(r.candidates.begin(), r.candidates.end(), [&](const Detection& c) { return c.box == d.box; });
      });
      if (ok) ++subset;
      a.detections.insert(a.detections.end(), r.candidates.begin(), r.candidates.end());
      b.detections.insert(b.detections.end(), r.detections.begin(), r.detections.end());
    }
    first.push_back(std::move(a));
    second.push_back(std::move(b));
  }
  const auto e1 = evaluate(first, corpus.ground_truth), e2 = evaluate(second, corpus.ground_truth);
  return {e2.mean_precision >= e1.mean_precision && e2.mean_recall <= e1.mean_recall && subset == scenes,
          fmt::format("{} scenes: precision {:.3f} -> {:.3f}, recall {:.3f} -> {:.3f}, stage-2 subset of stage-1 in "
                      "{}/{}",
                      scenes, e1.mean_precision, e2.mean_precision, e1.mean_recall, e2.mean_recall, subset, scenes)};
}

Outcome threshold_formula() {
  struct Case {
    ScoreMap map;
    double expect;
  };
  std::vector<Case> cases;
  cases.push_back({ScoreMap(5, 5, 0.42f), 0.42});
  {
    ScoreMap m(2, 1);
    m.values = {0.0f, 1.0f};
    cases.push_back({m, 0.75});
  }
  {
    ScoreMap m(4, 1);
    m.values = {0.25f, 0.25f, 0.25f, 1.0f};
    cases.push_back({m, (0.4375 + 1.0) / 2});
  }
  {
    ScoreMap m(2, 2);
    m.values = {-0.5f, 0.5f, 0.25f, 0.75f};
    cases.push_back({m, (0.25 + 0.75) / 2});
  }
  {
    ScoreMap m(3, 3, 0.0f);
    m.at(1, 1) = 0.9f;
    cases.push_back({m, (0.1 + 0.9) / 2});
  }
  int formula_ok = 0;
  for (const auto& c : cases)
    if (std::abs(adaptive_threshold(c.map) - c.expect) <= 1e-6) ++formula_ok;

  const DetectionConfig defaults;
  const bool bounds = defaults.first_threshold == 0.7 && defaults.second_threshold == 0.9 &&
                      !above_threshold(0.7, defaults.first_threshold) &&
                      above_threshold(std::nextafter(0.7, 1.0), defaults.first_threshold) &&
                      !above_threshold(0.9, defaults.second_threshold) &&
                      above_threshold(std::nextafter(0.9, 1.0), defaults.second_threshold);

  // The same boundary through candidate extraction, at a value floats hold exactly.
  DetectionConfig cfg;
  cfg.first_threshold = 0.75;
  cfg.second_threshold = 0.75;
  cfg.min_region_px = 1;
  ScoreMap at(8, 8, 0.0f), over(8, 8, 0.0f);
  at.at(3, 3) = 0.75f;
  over.at(3, 3) = std::nextafter(0.75f, 1.0f);
  const bool pipeline = extract_candidates(at, cfg).empty() && extract_candidates(over, cfg).size() == 1;

  return {formula_ok == 5 && bounds && pipeline,
          fmt::format("(mean+max)/2 on {}/5 maps; 0.7 and 0.9 rejected, next float up kept: {}; strict in extraction: {}",
                      formula_ok, bounds ? "yes" : "no", pipeline ? "yes" : "no")};
}

Outcome benchmark_shape() {
  const auto corpus = synthetic::make_corpus({});
  BenchmarkOptions opt;
  opt.detection.query_side = 64;
  const auto t0 = Clock::now();
  const auto r1 = run_benchmark(corpus, weights(), opt);
  const double secs = seconds_since(t0);
  const auto r2 = run_benchmark(corpus, weights(), opt);
  const std::string text = format_report(r1);
  const bool same = text == format_report(r2) && report_to_json(r1) == report_to_json(r2);

  // Parse the first table: header, then a recall and a precision line per method.
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::istringstream header(line);
  std::vector<std::string> columns;
  for (std::string tok; header >> tok;) columns.push_back(tok);
  int rows = 0;
  bool cells_ok = true;
  std::set<std::string> methods;
  for (int i = 0; i < 14 && std::getline(in, line); ++i) {
    std::istringstream row(line);
    std::vector<std::string> toks;
    for (std::string tok; row >> tok;) toks.push_back(tok);
    const bool recall_row = i % 2 == 0;
    if (recall_row && !toks.empty()) methods.insert(toks.front());
    const std::size_t numbers = toks.size() - (recall_row ? 2 : 1);
    cells_ok = cells_ok && numbers == 6;
    ++rows;
  }
  const bool layout = columns.size() == 7 && columns.front() == "method" && columns.back() == "mean" && rows == 14 &&
                      methods.size() == 7 && cells_ok && r1.settings.size() == 7;
  return {layout && same, fmt::format("{} methods x ({} queries + mean), recall and precision rows; identical across "
                                      "two runs: {}; {:.1f}s per run",
                                      methods.size(), columns.size() >= 2 ? columns.size() - 2 : 0, same ? "yes" : "no",
                                      secs)};
}

Outcome desk_runtime() {
  const Image query = synthetic::tank_object(224, 2);
  const auto scene = synthetic::make_scene(query, {1024, 1024, 1, 2, 1}, 77);
  const auto t0 = Clock::now();
  const Detector det(weights(), AggregationSetting::preset("a"), {});
  const auto r = det.detect(det.prepare_query(query, "q"), scene.image, "big");
  const double secs = seconds_since(t0);
  double best = 0.0;
  for (const auto& d : r.detections) best = std::max(best, iou(d.box, scene.planted[0]));
  return {secs < 120.0, fmt::format("1024x1024 target, 224 query, setting a, 2-stage: {:.1f}s, {} candidates, {} "
                                    "detections (best IoU {:.2f})",
                                    secs, r.candidates.size(), r.detections.size(), best)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"sliding-window oracle equivalence and speed", window_oracle},
      {"score map equals crop-then-describe dot products", score_map_equivalence},
      {"backbone golden activations and block shapes", backbone_golden},
      {"region grid counts and overlap-optimal m", region_grid},
      {"descriptor unit norm and scale invariance", descriptor_invariants},
      {"planted query found, blank targets silent", planted_query},
      {"two-stage precision/recall direction", two_stage_direction},
      {"threshold formula and strict boundaries", threshold_formula},
      {"benchmark table shape and determinism", benchmark_shape},
      {"desk-scale runtime", desk_runtime},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    fmt::print("{} {:>2}. {}: {}\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
