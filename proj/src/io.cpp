#include "oneshot/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

namespace oneshot {

using nlohmann::json;

namespace {

std::string idx(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }
std::string at(const std::string& base, const char* key) { return base.empty() ? key : base + "." + key; }

const json& member(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw SchemaError(at(path, key), "missing");
  return obj.at(key);
}

std::string string_field(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_string()) throw SchemaError(at(path, key), "must be a string");
  return v.get<std::string>();
}

int int_value(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw SchemaError(path, "must be an integer");
  const auto n = v.get<std::int64_t>();
  if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max())
    throw SchemaError(path, "out of range");
  return static_cast<int>(n);
}

Box box_value(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 4) throw SchemaError(path, "must be [x, y, w, h]");
  const Box b{int_value(v[0], idx(path, 0)), int_value(v[1], idx(path, 1)), int_value(v[2], idx(path, 2)),
              int_value(v[3], idx(path, 3))};
  if (b.x < 0) throw SchemaError(idx(path, 0), "must be >= 0");
  if (b.y < 0) throw SchemaError(idx(path, 1), "must be >= 0");
  if (b.w < 1) throw SchemaError(idx(path, 2), "must be >= 1");
  if (b.h < 1) throw SchemaError(idx(path, 3), "must be >= 1");
  return b;
}

json box_json(const Box& b) { return json::array({b.x, b.y, b.w, b.h}); }

json query_scores(const EvalResult& r) {
  json per = json::array();
  for (const auto& q : r.per_query)
    per.push_back({{"query_id", q.query_id},
                   {"tp", q.counts.tp},
                   {"fp", q.counts.fp},
                   {"fn", q.counts.fn},
                   {"precision", q.precision},
                   {"recall", q.recall}});
  return per;
}

json rows_json(const std::vector<BenchmarkRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row = eval_to_json(r.result);
    row.erase("iou_min");
    row["label"] = r.label;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

json detections_to_json(const std::vector<Detection>& dets) {
  json doc = json::array();
  for (const auto& d : dets)
    doc.push_back({{"query_id", d.query_id},
                   {"image_id", d.image_id},
                   {"box", box_json(d.box)},
                   {"score", d.score},
                   {"stage", d.stage}});
  return doc;
}

std::vector<Detection> detections_from_json(const json& doc) {
  if (!doc.is_array()) throw SchemaError("$", "detections document must be an array");
  std::vector<Detection> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string path = idx("", i);
    const json& e = doc[i];
    if (!e.is_object()) throw SchemaError(path, "must be an object");
    Detection d;
    d.query_id = string_field(e, path, "query_id");
    d.image_id = e.contains("image_id") ? string_field(e, path, "image_id") : std::string{};
    d.box = box_value(member(e, path, "box"), at(path, "box"));
    const json& score = member(e, path, "score");
    if (!score.is_number()) throw SchemaError(at(path, "score"), "must be a number");
    d.score = score.get<double>();
    if (!(d.score >= 0.0 && d.score <= 1.0)) throw SchemaError(at(path, "score"), "must be in [0, 1]");
    d.stage = int_value(member(e, path, "stage"), at(path, "stage"));
    if (d.stage != 1 && d.stage != 2) throw SchemaError(at(path, "stage"), "must be 1 or 2");
    out.push_back(std::move(d));
  }
  return out;
}

json ground_truth_to_json(const GroundTruthSet& gts) {
  json doc = json::array();
  for (const auto& [id, gt] : gts) {
    json boxes = json::array();
    for (const auto& b : gt.boxes) boxes.push_back(box_json(b));
    doc.push_back({{"image_id", gt.image_id}, {"boxes", boxes}, {"category", gt.category}});
  }
  return doc;
}

GroundTruthSet ground_truth_from_json(const json& doc) {
  if (!doc.is_array()) throw SchemaError("$", "ground-truth document must be an array");
  GroundTruthSet out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string path = idx("", i);
    const json& e = doc[i];
    if (!e.is_object()) throw SchemaError(path, "must be an object");
    GroundTruth gt;
    gt.image_id = string_field(e, path, "image_id");
    gt.category = e.contains("category") ? string_field(e, path, "category") : std::string{};
    const json& boxes = member(e, path, "boxes");
    if (!boxes.is_array()) throw SchemaError(at(path, "boxes"), "must be an array");
    for (std::size_t k = 0; k < boxes.size(); ++k) gt.boxes.push_back(box_value(boxes[k], idx(at(path, "boxes"), k)));
    if (out.count(gt.image_id)) throw SchemaError(at(path, "image_id"), "duplicate image id '" + gt.image_id + "'");
    out.emplace(gt.image_id, std::move(gt));
  }
  return out;
}

json eval_to_json(const EvalResult& r) {
  return {{"iou_min", r.iou_min},
          {"per_query", query_scores(r)},
          {"mean_precision", r.mean_precision},
          {"mean_recall", r.mean_recall}};
}

json report_to_json(const BenchmarkReport& report) {
  json doc{{"iou_min", report.iou_min}, {"queries", report.query_ids}, {"settings", rows_json(report.settings)}};
  if (!report.stages.empty()) doc["stages"] = rows_json(report.stages);
  return doc;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("not valid JSON (") + e.what() + ")");
  }
}

void write_atomic(const std::filesystem::path& path, const std::function<void(const std::filesystem::path&)>& write) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += fmt::format(".tmp{}", ::getpid());
  try {
    write(tmp);
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_atomic(path, [&](const std::filesystem::path& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  });
}

void write_json_atomic(const std::filesystem::path& path, const json& doc) {
  write_text_atomic(path, doc.dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& manifest) {
  const json doc = read_json(manifest);
  const auto base = manifest.parent_path();
  if (!doc.is_object()) throw SchemaError("$", "corpus manifest must be an object");
  Corpus corpus;
  corpus.ground_truth = ground_truth_from_json(read_json(base / string_field(doc, "", "ground_truth")));
  const json& targets = member(doc, "", "targets");
  if (!targets.is_array()) throw SchemaError("targets", "must be an array");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::string path = idx("targets", i);
    corpus.targets.push_back(
        {string_field(targets[i], path, "id"), load_image(base / string_field(targets[i], path, "image"))});
  }
  const json& queries = member(doc, "", "queries");
  if (!queries.is_array()) throw SchemaError("queries", "must be an array");
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::string path = idx("queries", i);
    CorpusQuery q;
    q.id = string_field(queries[i], path, "id");
    q.image = load_image(base / string_field(queries[i], path, "image"));
    const json& ids = member(queries[i], path, "targets");
    if (!ids.is_array()) throw SchemaError(at(path, "targets"), "must be an array");
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!ids[k].is_string()) throw SchemaError(idx(at(path, "targets"), k), "must be a string");
      q.target_ids.push_back(ids[k].get<std::string>());
    }
    corpus.queries.push_back(std::move(q));
  }
  return corpus;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  json queries = json::array(), targets = json::array();
  for (const auto& q : corpus.queries) {
    const std::string rel = "queries/" + q.id + ".png";
    write_atomic(dir / rel, [&](const std::filesystem::path& tmp) { save_png(tmp, q.image); });
    queries.push_back({{"id", q.id}, {"image", rel}, {"targets", q.target_ids}});
  }
  for (const auto& t : corpus.targets) {
    const std::string rel = "targets/" + t.id + ".png";
    write_atomic(dir / rel, [&](const std::filesystem::path& tmp) { save_png(tmp, t.image); });
    targets.push_back({{"id", t.id}, {"image", rel}});
  }
  write_json_atomic(dir / "gt.json", ground_truth_to_json(corpus.ground_truth));
  write_json_atomic(dir / "corpus.json", {{"queries", queries}, {"targets", targets}, {"ground_truth", "gt.json"}});
}

Image render_overlay(const Image& target, const std::vector<Detection>& dets) {
  Image out = target;
  if (out.channels != 3) throw ImageError("overlay needs an RGB image");
  std::vector<const Detection*> order;
  for (const auto& d : dets) order.push_back(&d);
  std::stable_sort(order.begin(), order.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
  // Draw weakest first so the top box ends up on top.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Detection& d = **it;
    const bool top = *it == order.front();
    const std::uint8_t r = 255, g = top ? 0 : 220, b = 0;
    draw_rect(out, d.box, r, g, b, 3);
    const int ty = d.box.y >= 14 ? d.box.y - 13 : d.box.y + 4;
    draw_text(out, d.box.x + 4, ty, fmt::format("{:.3f}", d.score), r, g, b, 2);
  }
  return out;
}

}  // namespace oneshot
