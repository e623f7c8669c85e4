#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "oneshot/detection.hpp"

namespace oneshot {

struct GroundTruth {
  std::string image_id;
  std::vector<Box> boxes;
  // Query the boxes belong to; empty applies them to every query.
  std::string category;

  bool operator==(const GroundTruth&) const = default;
};

using GroundTruthSet = std::map<std::string, GroundTruth>;  // by image_id

struct MatchCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const MatchCounts&) const = default;
};

/// Greedy one-to-one matching in descending score order. A detection takes
/// the unmatched GT box of highest IoU, provided IoU >= iou_min.
MatchCounts match_detections(const std::vector<Detection>& dets, const GroundTruth& gt, double iou_min);

/// TP / (TP + FP), 0 without detections.
double precision(const MatchCounts& c);
/// TP / (TP + FN), 1 when there is nothing to find.
double recall(const MatchCounts& c);

/// Everything one query produced over its targets.
struct QueryRun {
  std::string query_id;
  std::vector<std::string> image_ids;
  std::vector<Detection> detections;  // image_id selects the GT entry
};

struct QueryScore {
  std::string query_id;
  MatchCounts counts;
  double precision = 0.0;
  double recall = 0.0;
};

struct EvalResult {
  std::vector<QueryScore> per_query;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double iou_min = 0.5;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws EvalError when a run names an image without ground truth.
EvalResult evaluate(const std::vector<QueryRun>& runs, const GroundTruthSet& gts, double iou_min = 0.5);

/// Groups a flat detection list into runs: one per query id found in the
/// detections or among GT categories. Each query is evaluated on the GT
/// images whose category is its id or empty.
std::vector<QueryRun> group_runs(const std::vector<Detection>& dets, const GroundTruthSet& gts);

struct CorpusQuery {
  std::string id;
  Image image;
  std::vector<std::string> target_ids;
};

struct CorpusTarget {
  std::string id;
  Image image;
};

struct Corpus {
  std::vector<CorpusQuery> queries;
  std::vector<CorpusTarget> targets;
  GroundTruthSet ground_truth;

  const CorpusTarget& target(const std::string& id) const;
};

struct BenchmarkOptions {
  std::vector<std::string> settings = AggregationSetting::preset_labels();
  DetectionConfig detection;
  double iou_min = 0.5;
  // Adds 1-stage and 2-stage rows for `stage_setting`.
  bool stage_comparison = true;
  std::string stage_setting = "a";
};

struct BenchmarkRow {
  std::string label;
  EvalResult result;
};

struct BenchmarkReport {
  std::vector<std::string> query_ids;
  std::vector<BenchmarkRow> settings;
  std::vector<BenchmarkRow> stages;  // empty unless requested
  double iou_min = 0.5;
};

/// Runs every (setting, query) pair over the query's targets. Target
/// pyramids are computed once and shared by all settings.
BenchmarkReport run_benchmark(const Corpus& corpus, std::shared_ptr<const WeightsBundle> weights,
                              const BenchmarkOptions& options);

/// Plain-text tables: method rows, recall and precision per query, mean last.
std::string format_report(const BenchmarkReport& report);

}  // namespace oneshot
