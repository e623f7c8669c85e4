#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oneshot/detection.hpp"
#include "oneshot/eval.hpp"

namespace oneshot {

/// A document does not match its schema. what() starts with the JSON path of
/// the offending field, e.g. "[2].boxes[0][2]: must be >= 1".
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& field, const std::string& problem)
      : std::runtime_error(field + ": " + problem), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

nlohmann::json detections_to_json(const std::vector<Detection>& dets);
std::vector<Detection> detections_from_json(const nlohmann::json& doc);

nlohmann::json ground_truth_to_json(const GroundTruthSet& gts);
/// Throws SchemaError on malformed entries and on duplicate image ids.
GroundTruthSet ground_truth_from_json(const nlohmann::json& doc);

nlohmann::json eval_to_json(const EvalResult& result);
nlohmann::json report_to_json(const BenchmarkReport& report);

/// Corpus manifest: {"queries": [{id, image, targets}], "targets": [{id,
/// image}], "ground_truth": path}. Paths are relative to the manifest.
Corpus load_corpus(const std::filesystem::path& manifest);
/// Writes PNGs under queries/ and targets/, gt.json and corpus.json into dir.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);

/// Parses a JSON file; syntax errors become SchemaError with field "$".
nlohmann::json read_json(const std::filesystem::path& path);

/// Runs `write` against a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::function<void(const std::filesystem::path&)>& write);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& doc);

/// Copy of `target` with every detection outlined and labelled with its
/// score. The highest-scoring box is red, the rest yellow.
Image render_overlay(const Image& target, const std::vector<Detection>& dets);

}  // namespace oneshot
