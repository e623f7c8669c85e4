#include "oneshot/eval.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <set>

namespace oneshot {

MatchCounts match_detections(const std::vector<Detection>& dets, const GroundTruth& gt, double iou_min) {
  if (!(iou_min > 0.0 && iou_min <= 1.0)) throw std::invalid_argument("iou_min must be in (0, 1]");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<bool> taken(gt.boxes.size(), false);
  MatchCounts c;
  for (std::size_t i : order) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(dets[i].box, gt.boxes[g]);
      if (v >= iou_min && v > best_iou) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return c;
}

double precision(const MatchCounts& c) { return c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fp); }

double recall(const MatchCounts& c) { return c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fn); }

EvalResult evaluate(const std::vector<QueryRun>& runs, const GroundTruthSet& gts, double iou_min) {
  EvalResult out;
  out.iou_min = iou_min;
  for (const auto& run : runs) {
    std::set<std::string> images(run.image_ids.begin(), run.image_ids.end());
    for (const auto& d : run.detections) images.insert(d.image_id);
    QueryScore qs;
    qs.query_id = run.query_id;
    for (const auto& image : images) {
      auto it = gts.find(image);
      if (it == gts.end()) throw EvalError("missing ground truth for image '" + image + "'");
      std::vector<Detection> mine;
      for (const auto& d : run.detections)
        if (d.image_id == image) mine.push_back(d);
      qs.counts += match_detections(mine, it->second, iou_min);
    }
    qs.precision = precision(qs.counts);
    qs.recall = recall(qs.counts);
    out.per_query.push_back(std::move(qs));
  }
  if (!out.per_query.empty()) {
    for (const auto& q : out.per_query) {
      out.mean_precision += q.precision;
      out.mean_recall += q.recall;
    }
    out.mean_precision /= static_cast<double>(out.per_query.size());
    out.mean_recall /= static_cast<double>(out.per_query.size());
  }
  return out;
}

std::vector<QueryRun> group_runs(const std::vector<Detection>& dets, const GroundTruthSet& gts) {
  std::vector<std::string> ids;
  auto note = [&](const std::string& id) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  };
  for (const auto& d : dets) note(d.query_id);
  for (const auto& [image, gt] : gts)
    if (!gt.category.empty()) note(gt.category);
  if (ids.empty()) ids.push_back("");

  std::vector<QueryRun> runs;
  for (const auto& id : ids) {
    QueryRun run;
    run.query_id = id;
    for (const auto& [image, gt] : gts)
      if (gt.category.empty() || gt.category == id) run.image_ids.push_back(image);
    for (const auto& d : dets)
      if (d.query_id == id) run.detections.push_back(d);
    runs.push_back(std::move(run));
  }
  return runs;
}

const CorpusTarget& Corpus::target(const std::string& id) const {
  for (const auto& t : targets)
    if (t.id == id) return t;
  throw std::invalid_argument("corpus has no target '" + id + "'");
}

BenchmarkReport run_benchmark(const Corpus& corpus, std::shared_ptr<const WeightsBundle> weights,
                              const BenchmarkOptions& options) {
  if (corpus.queries.empty()) throw std::invalid_argument("benchmark corpus has no queries");
  for (const auto& q : corpus.queries)
    for (const auto& t : q.target_ids) {
      corpus.target(t);
      if (!corpus.ground_truth.count(t)) throw EvalError("missing ground truth for image '" + t + "'");
    }

  BenchmarkReport report;
  report.iou_min = options.iou_min;
  for (const auto& q : corpus.queries) report.query_ids.push_back(q.id);

  std::vector<AggregationSetting> settings;
  for (const auto& label : options.settings) settings.push_back(AggregationSetting::parse(label));
  const AggregationSetting stage_setting = AggregationSetting::parse(options.stage_setting);

  // Everything that does not depend on the setting is computed once.
  const Detector base(weights, stage_setting, options.detection);
  std::map<std::string, FeaturePyramid> target_pyramids;
  for (const auto& q : corpus.queries)
    for (const auto& t : q.target_ids)
      if (!target_pyramids.count(t)) target_pyramids.emplace(t, base.extract_target(corpus.target(t).image, t));
  std::vector<QueryModel> bare;
  for (const auto& q : corpus.queries) bare.push_back(base.prepare_query(q.image, q.id));
  CropDescriptorCache cache;

  struct Runs {
    std::vector<QueryRun> candidates;  // stage 1
    std::vector<QueryRun> detections;  // final
  };
  auto run_setting = [&](const AggregationSetting& setting, const DetectionConfig& cfg) {
    const Detector det(weights, setting, cfg);
    Runs runs;
    for (std::size_t qi = 0; qi < corpus.queries.size(); ++qi) {
      const auto& q = corpus.queries[qi];
      QueryModel model = bare[qi];
      model.descriptors = query_descriptors(model.pyramid, setting);
      QueryRun first{q.id, q.target_ids, {}};
      QueryRun kept{q.id, q.target_ids, {}};
      for (const auto& t : q.target_ids) {
        const DetectionResult r = det.run(model, corpus.target(t).image, target_pyramids.at(t), t, &cache);
        first.detections.insert(first.detections.end(), r.candidates.begin(), r.candidates.end());
        kept.detections.insert(kept.detections.end(), r.detections.begin(), r.detections.end());
      }
      runs.candidates.push_back(std::move(first));
      runs.detections.push_back(std::move(kept));
    }
    return runs;
  };

  for (std::size_t i = 0; i < settings.size(); ++i) {
    spdlog::info("bench: setting {} ({})", options.settings[i], settings[i].to_spec());
    const Runs runs = run_setting(settings[i], options.detection);
    report.settings.push_back({options.settings[i], evaluate(runs.detections, corpus.ground_truth, options.iou_min)});
  }

  if (options.stage_comparison) {
    spdlog::info("bench: 1-stage vs 2-stage with setting {}", options.stage_setting);
    DetectionConfig cfg = options.detection;
    cfg.stage2_enabled = true;
    const Runs runs = run_setting(stage_setting, cfg);
    report.stages.push_back({"1-stage", evaluate(runs.candidates, corpus.ground_truth, options.iou_min)});
    report.stages.push_back({"2-stage", evaluate(runs.detections, corpus.ground_truth, options.iou_min)});
  }
  return report;
}

namespace {

void append_table(std::string& out, const std::string& title, const std::vector<std::string>& query_ids,
                  const std::vector<BenchmarkRow>& rows) {
  std::size_t label_w = 6;
  for (const auto& r : rows) label_w = std::max(label_w, r.label.size());
  std::size_t col_w = 6;
  for (const auto& q : query_ids) col_w = std::max(col_w, q.size());

  out += title + "\n";
  out += fmt::format("{:<{}}  {:<9}", "method", label_w, "");
  for (const auto& q : query_ids) out += fmt::format("  {:>{}}", q, col_w);
  out += fmt::format("  {:>{}}\n", "mean", col_w);
  for (const auto& r : rows) {
    out += fmt::format("{:<{}}  {:<9}", r.label, label_w, "recall");
    for (const auto& q : r.result.per_query) out += fmt::format("  {:>{}.3f}", q.recall, col_w);
    out += fmt::format("  {:>{}.3f}\n", r.result.mean_recall, col_w);
    out += fmt::format("{:<{}}  {:<9}", "", label_w, "precision");
    for (const auto& q : r.result.per_query) out += fmt::format("  {:>{}.3f}", q.precision, col_w);
    out += fmt::format("  {:>{}.3f}\n", r.result.mean_precision, col_w);
  }
}

}  // namespace

std::string format_report(const BenchmarkReport& report) {
  std::string out;
  if (!report.settings.empty())
    append_table(out, fmt::format("Aggregation settings (IoU >= {:.2f})", report.iou_min), report.query_ids,
                 report.settings);
  if (!report.stages.empty()) {
    if (!out.empty()) out += "\n";
    append_table(out, fmt::format("1-stage vs 2-stage (IoU >= {:.2f})", report.iou_min), report.query_ids,
                 report.stages);
  }
  return out;
}

}  // namespace oneshot
