#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <iostream>

#include "oneshot/backbone.hpp"
#include "oneshot/detection.hpp"
#include "oneshot/eval.hpp"
#include "oneshot/io.hpp"
#include "oneshot/synthetic.hpp"

namespace fs = std::filesystem;
using namespace oneshot;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

// A problem with the user's inputs rather than with the program.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Shared {
  std::string weights;
  std::string setting = "a";
  DetectionConfig detection;
  bool no_stage2 = false;
  double iou = 0.5;
  std::string out = ".";
  bool verbose = false;
};

std::shared_ptr<const WeightsBundle> require_weights(const Shared& s) {
  if (s.weights.empty()) throw UsageError("--weights is required");
  if (!fs::exists(s.weights)) throw UsageError("weights file not found: " + s.weights);
  return std::make_shared<const WeightsBundle>(load_weights(s.weights));
}

Image require_image(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw UsageError(fmt::format("{} image not found: {}", what, path));
  return load_image(path);
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_detect(const Shared& s, const std::vector<std::string>& queries, const std::vector<std::string>& targets,
               bool emit_scoremap, bool emit_overlay) {
  DetectionConfig cfg = s.detection;
  cfg.stage2_enabled = !s.no_stage2;
  const Detector det(require_weights(s), AggregationSetting::parse(s.setting), cfg);
  spdlog::info("setting {}: {}", s.setting, det.setting().to_spec());

  std::vector<Detection> all;
  for (const auto& qpath : queries) {
    const QueryModel model = det.prepare_query(require_image(qpath, "query"), stem(qpath));
    for (const auto& tpath : targets) {
      const Image target = require_image(tpath, "target");
      const std::string image_id = stem(tpath);
      const DetectionResult r = det.detect(model, target, image_id);
      spdlog::info("{} on {}: {} candidates, {} detections", model.id, image_id, r.candidates.size(),
                   r.detections.size());
      const fs::path base = fs::path(s.out) / (image_id + "_" + model.id);
      if (emit_scoremap)
        write_atomic(base.string() + "_score.png",
                     [&](const fs::path& tmp) { save_score_png(tmp, r.score.final_map); });
      if (emit_overlay)
        write_atomic(base.string() + "_overlay.png",
                     [&](const fs::path& tmp) { save_png(tmp, render_overlay(target, r.detections)); });
      all.insert(all.end(), r.detections.begin(), r.detections.end());
    }
  }
  const fs::path out = fs::path(s.out) / "detections.json";
  write_json_atomic(out, detections_to_json(all));
  std::cout << fmt::format("{} detection(s) written to {}\n", all.size(), out.string());
  return kExitOk;
}

int cmd_extract(const Shared& s, const std::string& image_path, bool native) {
  const auto weights = require_weights(s);
  const Detector det(weights, AggregationSetting::parse(s.setting), s.detection);
  const Image image = require_image(image_path, "input");
  nlohmann::json doc{{"image", image_path}, {"setting", det.setting().to_spec()}};
  nlohmann::json blocks = nlohmann::json::array();
  if (native) {
    const FeaturePyramid pyr = det.extract_target(image, stem(image_path));
    doc["input"] = {pyr.input_width, pyr.input_height};
    for (int b = 1; b <= kNumBlocks; ++b) {
      const auto& fm = pyr.block(b);
      blocks.push_back({{"block", b}, {"shape", {fm.channels(), fm.height(), fm.width()}}});
    }
  } else {
    const QueryModel model = det.prepare_query(image, stem(image_path));
    doc["input"] = {model.side, model.side};
    for (int b = 1; b <= kNumBlocks; ++b) {
      const auto& fm = model.pyramid.block(b);
      nlohmann::json entry{{"block", b}, {"shape", {fm.channels(), fm.height(), fm.width()}}};
      if (const auto& d = model.descriptors[b - 1]) {
        entry["kind"] = std::string(to_string(d->kind));
        entry["descriptor"] = d->vector;
      }
      blocks.push_back(std::move(entry));
    }
  }
  doc["blocks"] = std::move(blocks);
  const fs::path out = fs::path(s.out) / (stem(image_path) + "_features.json");
  write_json_atomic(out, doc);
  std::cout << "features written to " << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const Shared& s, const std::string& dets_path, const std::string& gt_path, const std::string& report) {
  for (const auto& p : {dets_path, gt_path})
    if (!fs::exists(p)) throw UsageError("file not found: " + p);
  const auto dets = detections_from_json(read_json(dets_path));
  const auto gts = ground_truth_from_json(read_json(gt_path));
  const EvalResult r = evaluate(group_runs(dets, gts), gts, s.iou);
  for (const auto& q : r.per_query)
    std::cout << fmt::format("{:<12} precision {:.3f} recall {:.3f}  (tp {} fp {} fn {})\n",
                             q.query_id.empty() ? "-" : q.query_id, q.precision, q.recall, q.counts.tp, q.counts.fp,
                             q.counts.fn);
  std::cout << fmt::format("{:<12} precision {:.3f} recall {:.3f}\n", "mean", r.mean_precision, r.mean_recall);
  if (!report.empty()) write_json_atomic(report, eval_to_json(r));
  return kExitOk;
}

int cmd_bench(const Shared& s, const std::string& corpus_path, const std::vector<std::string>& settings,
              const synthetic::CorpusOptions& synth) {
  const auto weights = require_weights(s);
  Corpus corpus;
  if (corpus_path.empty()) {
    corpus = synthetic::make_corpus(synth);
  } else {
    if (!fs::exists(corpus_path)) throw UsageError("corpus manifest not found: " + corpus_path);
    corpus = load_corpus(corpus_path);
  }
  BenchmarkOptions opts;
  if (!settings.empty()) opts.settings = settings;
  opts.detection = s.detection;
  opts.iou_min = s.iou;
  opts.stage_comparison = s.no_stage2;
  opts.stage_setting = s.setting;
  const BenchmarkReport report = run_benchmark(corpus, weights, opts);
  const std::string text = format_report(report);
  std::cout << text;
  write_text_atomic(fs::path(s.out) / "bench.txt", text);
  write_json_atomic(fs::path(s.out) / "bench.json", report_to_json(report));
  return kExitOk;
}

int cmd_check_weights(const Shared& s) {
  const auto w = require_weights(s);
  std::size_t params = 0;
  for (const auto& e : w->manifest()) params += static_cast<std::size_t>(e.numel());
  const auto& pre = w->preprocessing();
  std::cout << fmt::format("ok: {} tensors, {} parameters, input side {}, mean [{:.3f} {:.3f} {:.3f}], "
                           "std [{:.3f} {:.3f} {:.3f}]\n",
                           w->manifest().size(), params, pre.input_side, pre.mean[0], pre.mean[1], pre.mean[2],
                           pre.std[0], pre.std[1], pre.std[2]);
  return kExitOk;
}

int cmd_synth(const Shared& s, const synthetic::CorpusOptions& synth, const std::string& weights_out,
              std::uint64_t weights_seed) {
  const Corpus corpus = synthetic::make_corpus(synth);
  save_corpus(s.out, corpus);
  std::cout << fmt::format("{} queries, {} targets written to {}\n", corpus.queries.size(), corpus.targets.size(),
                           (fs::path(s.out) / "corpus.json").string());
  if (!weights_out.empty()) {
    write_atomic(weights_out,
                 [&](const fs::path& tmp) { save_weights(tmp, synthetic_vgg16_weights(weights_seed)); });
    std::cout << "synthetic weights written to " << weights_out << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free one-shot object detection on VGG16 features"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value file; command-line flags override it");

  Shared s;
  app.add_option("--weights", s.weights, "VGG16 weights file (.oswb)");
  app.add_option("--setting", s.setting, "Preset a..g or inline spec such as \"-,-,-,-,R-AMAC/A&MP\"");
  app.add_option("--first-threshold", s.detection.first_threshold, "Stage-1 score threshold")->capture_default_str();
  app.add_option("--second-threshold", s.detection.second_threshold, "Stage-2 score threshold")
      ->capture_default_str();
  app.add_option("--crop-expand", s.detection.crop_expand, "Stage-2 crop scale")->capture_default_str();
  app.add_option("--min-region", s.detection.min_region_px, "Smallest candidate area in pixels")
      ->capture_default_str();
  app.add_option("--query-side", s.detection.query_side, "Query resize side; 0 uses the weights' input side");
  app.add_flag("--no-stage2", s.no_stage2,
               "detect: skip crop re-scoring. bench: add 1-stage vs 2-stage rows for --setting");
  app.add_option("--iou", s.iou, "IoU needed for a match")->capture_default_str();
  app.add_option("--out", s.out, "Output directory")->capture_default_str();
  app.add_flag("-v,--verbose", s.verbose, "Debug logging");

  std::vector<std::string> queries, targets;
  bool emit_scoremap = false, emit_overlay = false;
  auto* detect = app.add_subcommand("detect", "Detect a query object in target images");
  detect->add_option("--query", queries, "Query image(s)")->required();
  detect->add_option("--target", targets, "Target image(s)")->required();
  detect->add_flag("--emit-scoremap", emit_scoremap, "Write the fused score map as 16-bit PNG");
  detect->add_flag("--emit-overlay", emit_overlay, "Write the target with detections drawn");

  std::string extract_image;
  bool native = false;
  auto* extract = app.add_subcommand("extract", "Write backbone shapes and query descriptors as JSON");
  extract->add_option("image", extract_image, "Input image")->required();
  extract->add_flag("--native", native, "Process at native resolution like a target (shapes only)");

  std::string dets_path, gt_path, report_path;
  auto* eval = app.add_subcommand("eval", "Score detections against ground truth");
  eval->add_option("--detections", dets_path, "Detections JSON")->required();
  eval->add_option("--gt", gt_path, "Ground-truth JSON")->required();
  eval->add_option("--report", report_path, "Also write the result as JSON");

  std::string corpus_path;
  std::vector<std::string> settings;
  synthetic::CorpusOptions synth;
  auto add_synth_options = [&](CLI::App* cmd) {
    cmd->add_option("--queries", synth.queries)->capture_default_str();
    cmd->add_option("--targets-per-query", synth.targets_per_query)->capture_default_str();
    cmd->add_option("--object-side", synth.query_side)->capture_default_str();
    cmd->add_option("--target-side", synth.target_side)->capture_default_str();
    cmd->add_option("--seed", synth.seed)->capture_default_str();
  };
  auto* bench = app.add_subcommand("bench", "Run the settings table over a corpus");
  bench->add_option("--corpus", corpus_path, "corpus.json; omitted means a synthetic corpus");
  bench->add_option("--settings", settings, "Settings to run (default a..g)")->delimiter(',');
  add_synth_options(bench);

  auto* check = app.add_subcommand("convert-weights-check", "Validate a weights bundle");

  std::string weights_out;
  std::uint64_t weights_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus (and optionally weights)");
  add_synth_options(synth_cmd);
  synth_cmd->add_option("--weights-out", weights_out, "Also write synthetic weights here");
  synth_cmd->add_option("--weights-seed", weights_seed)->capture_default_str();

  for (auto* cmd : app.get_subcommands({})) cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto logger = spdlog::stderr_color_mt("oneshot");
  spdlog::set_default_logger(logger);
  spdlog::set_level(s.verbose ? spdlog::level::debug : spdlog::level::warn);
  spdlog::set_pattern("[%l] %v");

  try {
    s.detection.validate();
    if (!(s.iou > 0.0 && s.iou <= 1.0)) throw UsageError("--iou must be in (0, 1]");
    if (*detect) return cmd_detect(s, queries, targets, emit_scoremap, emit_overlay);
    if (*extract) return cmd_extract(s, extract_image, native);
    if (*eval) return cmd_eval(s, dets_path, gt_path, report_path);
    if (*bench) return cmd_bench(s, corpus_path, settings, synth);
    if (*check) return cmd_check_weights(s);
    if (*synth_cmd) return cmd_synth(s, synth, weights_out, weights_seed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const WeightsError& e) {
    std::cerr << "error: weights: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    std::cerr << "error: invalid document at " << e.what() << "\n";
    return kExitUsage;
  } catch (const ImageError& e) {
    std::cerr << "error: image: " << e.what() << "\n";
    return kExitUsage;
  } catch (const EvalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    // Bad settings, thresholds, or a query larger than its target.
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
