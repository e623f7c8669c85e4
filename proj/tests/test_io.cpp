#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oneshot/io.hpp"
#include "oneshot/synthetic.hpp"

using namespace oneshot;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("oneshot_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string schema_field(const json& doc) {
  try {
    detections_from_json(doc);
  } catch (const SchemaError& e) {
    return e.field();
  }
  return "(accepted)";
}

}  // namespace

TEST_CASE("detections round trip") {
  Detection d;
  d.query_id = "q";
  d.image_id = "img";
  d.box = {1, 2, 30, 40};
  d.score = 0.875;
  d.stage = 2;
  const auto back = detections_from_json(detections_to_json({d}));
  REQUIRE(back.size() == 1);
  CHECK(back[0] == d);
}

TEST_CASE("detection schema errors name the field") {
  const json ok = json::parse(R"([{"query_id":"q","box":[0,0,5,5],"score":0.5,"stage":1}])");
  CHECK(schema_field(ok) == "(accepted)");
  auto with = [&](const char* key, json v) {
    json doc = ok;
    doc[0][key] = std::move(v);
    return doc;
  };
  CHECK(schema_field(json::object()) == "$");
  CHECK(schema_field(with("box", json::array({0, 0, -2, 5}))) == "[0].box[2]");
  CHECK(schema_field(with("box", json::array({0, 0, 5}))) == "[0].box");
  CHECK(schema_field(with("box", json::array({0.5, 0, 5, 5}))) == "[0].box[0]");
  CHECK(schema_field(with("score", 1.5)) == "[0].score");
  CHECK(schema_field(with("score", "high")) == "[0].score");
  CHECK(schema_field(with("stage", 3)) == "[0].stage");
  CHECK(schema_field(with("query_id", 7)) == "[0].query_id");
  json missing = ok;
  missing[0].erase("score");
  CHECK(schema_field(missing) == "[0].score");
  CHECK_THROWS_WITH(detections_from_json(with("box", json::array({0, 0, -2, 5}))), "[0].box[2]: must be >= 1");
}

TEST_CASE("ground truth round trip and duplicates") {
  GroundTruthSet gts;
  gts["a"] = {"a", {{0, 0, 4, 4}, {10, 10, 3, 3}}, "q1"};
  gts["b"] = {"b", {}, ""};
  CHECK(ground_truth_from_json(ground_truth_to_json(gts)) == gts);

  const json dup = json::parse(R"([{"image_id":"a","boxes":[]},{"image_id":"a","boxes":[]}])");
  CHECK_THROWS_WITH_AS(ground_truth_from_json(dup), doctest::Contains("[1].image_id"), SchemaError);
}

TEST_CASE("read_json reports syntax errors as schema errors") {
  const auto dir = scratch_dir("json");
  std::ofstream(dir / "bad.json") << "[{";
  CHECK_THROWS_AS(read_json(dir / "bad.json"), SchemaError);
  CHECK_THROWS_AS(read_json(dir / "absent.json"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("atomic writes leave no temporary behind") {
  const auto dir = scratch_dir("atomic");
  write_json_atomic(dir / "sub" / "x.json", json{{"k", 1}});
  CHECK(read_json(dir / "sub" / "x.json")["k"] == 1);
  CHECK_THROWS(write_atomic(dir / "y.txt", [](const fs::path& tmp) {
    std::ofstream(tmp) << "partial";
    throw std::runtime_error("boom");
  }));
  CHECK_FALSE(fs::exists(dir / "y.txt"));
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
  fs::remove_all(dir);
}

TEST_CASE("corpus save and load") {
  synthetic::CorpusOptions opt;
  opt.queries = 2;
  opt.targets_per_query = 1;
  opt.target_side = 96;
  opt.query_side = 32;
  const auto corpus = synthetic::make_corpus(opt);
  const auto dir = scratch_dir("corpus");
  save_corpus(dir, corpus);
  const auto back = load_corpus(dir / "corpus.json");
  REQUIRE(back.queries.size() == 2);
  CHECK(back.queries[0].image.pixels == corpus.queries[0].image.pixels);
  CHECK(back.queries[1].target_ids == corpus.queries[1].target_ids);
  CHECK(back.targets[1].image.pixels == corpus.targets[1].image.pixels);
  CHECK(back.ground_truth == corpus.ground_truth);
  fs::remove_all(dir);
}

TEST_CASE("images and score maps survive PNG round trips") {
  const auto dir = scratch_dir("png");
  const Image img = synthetic::background(37, 21, 4);
  save_png(dir / "a.png", img);
  const Image back = load_image(dir / "a.png");
  CHECK(back.width == 37);
  CHECK(back.pixels == img.pixels);

  ScoreMap sm(5, 4);
  for (std::size_t i = 0; i < sm.values.size(); ++i) sm.values[i] = static_cast<float>(i) / 19.0f;
  sm.values[0] = -0.5f;
  save_score_png(dir / "s.png", sm);
  const auto sb = load_score_png(dir / "s.png");
  CHECK(sb.values[0] == 0.0f);
  for (std::size_t i = 1; i < sm.values.size(); ++i) CHECK(sb.values[i] == doctest::Approx(sm.values[i]).epsilon(2e-5));

  std::ofstream(dir / "junk.png") << "not an image";
  CHECK_THROWS_AS(load_image(dir / "junk.png"), ImageError);
  CHECK_THROWS_AS(load_image(dir / "none.png"), ImageError);
  fs::remove_all(dir);
}

TEST_CASE("overlay colours the top box red") {
  const Image img = synthetic::blank(64, 64, 0, 0, 0);
  Detection a, b;
  a.box = {2, 20, 20, 20};
  a.score = 0.9;
  b.box = {40, 40, 20, 20};
  b.score = 0.8;
  const auto out = render_overlay(img, {b, a});
  CHECK(out.at(2, 30, 0) == 255);
  CHECK(out.at(2, 30, 1) == 0);
  CHECK(out.at(59, 50, 1) == 220);
  CHECK(out.at(62, 2, 0) == 0);
}
