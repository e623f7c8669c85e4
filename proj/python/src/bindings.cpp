#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "oneshot/aggregation.hpp"
#include "oneshot/backbone.hpp"
#include "oneshot/detection.hpp"
#include "oneshot/eval.hpp"
#include "oneshot/image.hpp"
#include "oneshot/synthetic.hpp"

namespace py = pybind11;
using namespace oneshot;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image to_image(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an HxWx3 uint8 array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 3);
  std::memcpy(img.pixels.data(), a.data(), img.pixels.size());
  return img;
}

py::array_t<std::uint8_t> from_image(const Image& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, img.channels});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
  return out;
}

FeatureMap to_feature_map(const F32Array& a) {
  if (a.ndim() != 3) throw py::value_error("expected a CxHxW float array");
  std::vector<float> data(a.data(), a.data() + a.size());
  return FeatureMap(static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 1,
                    std::move(data));
}

py::array_t<float> from_feature_map(const FeatureMap& fm) {
  py::array_t<float> out({fm.channels(), fm.height(), fm.width()});
  std::memcpy(out.mutable_data(), fm.data().data(), fm.data().size() * sizeof(float));
  return out;
}

py::array_t<float> from_score_map(const ScoreMap& m) {
  py::array_t<float> out({m.height, m.width});
  std::memcpy(out.mutable_data(), m.values.data(), m.values.size() * sizeof(float));
  return out;
}

ScoreMap to_score_map(const F32Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected an HxW float array");
  ScoreMap m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(m.values.data(), a.data(), m.values.size() * sizeof(float));
  return m;
}

py::array_t<float> from_vector(const std::vector<float>& v) {
  py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(float));
  return out;
}

py::tuple box_tuple(const Box& b) { return py::make_tuple(b.x, b.y, b.w, b.h); }

py::dict detection_dict(const Detection& d) {
  py::dict out;
  out["query_id"] = d.query_id;
  out["image_id"] = d.image_id;
  out["box"] = box_tuple(d.box);
  out["score"] = d.score;
  out["stage"] = d.stage;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "One-shot object detection on VGG16 features";

  py::register_exception<WeightsError>(m, "WeightsError", PyExc_ValueError);
  py::register_exception<ImageError>(m, "ImageError", PyExc_ValueError);

  py::class_<WeightsBundle, std::shared_ptr<WeightsBundle>>(m, "Weights")
      .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<WeightsBundle>(load_weights(p)); })
      .def_static("synthetic", [](std::uint64_t seed) { return std::make_shared<WeightsBundle>(synthetic_vgg16_weights(seed)); },
                  py::arg("seed") = 0)
      .def("save", [](const WeightsBundle& w, const std::filesystem::path& p) { save_weights(p, w); })
      .def_property_readonly("input_side", [](const WeightsBundle& w) { return w.preprocessing().input_side; })
      .def_property_readonly("tensor_names", [](const WeightsBundle& w) {
        std::vector<std::string> names;
        for (const auto& e : w.manifest()) names.push_back(e.name);
        return names;
      })
      .def("tensor", [](const WeightsBundle& w, const std::string& name) {
        const auto& e = w.entry(name);
        const auto span = w.tensor(name);
        std::vector<py::ssize_t> shape(e.shape.begin(), e.shape.end());
        py::array_t<float> out(shape);
        std::memcpy(out.mutable_data(), span.data(), span.size_bytes());
        return out;
      });

  m.def("load_image", [](const std::filesystem::path& p) { return from_image(load_image(p)); });

  m.def(
      "features",
      [](const WeightsBundle& w, const U8Array& image, int side) {
        const Image img = to_image(image);
        const FeatureMap input = side > 0 ? preprocess(img, side, w.preprocessing()) : preprocess_native(img, w.preprocessing());
        const FeaturePyramid pyr = forward(w, input);
        py::list out;
        for (int b = 1; b <= kNumBlocks; ++b) out.append(from_feature_map(pyr.block(b)));
        return out;
      },
      py::arg("weights"), py::arg("image"), py::arg("side") = 0,
      "Per-block activations (C, H, W). side > 0 resizes to a square, 0 pads to a multiple of 32.");

  m.def("window_average_map", [](const F32Array& a, int w, int h) { return from_feature_map(window_average_map(to_feature_map(a), w, h)); });
  m.def("window_max_map", [](const F32Array& a, int w, int h) { return from_feature_map(window_max_map(to_feature_map(a), w, h)); });

  m.def(
      "region_grid",
      [](int width, int height, int scales, std::optional<int> mm) {
        const RegionGrid g = build_region_grid(width, height, scales, mm);
        py::list regions;
        for (const auto& r : g.regions) regions.append(py::make_tuple(r.x, r.y, r.side, r.scale));
        return py::make_tuple(g.m, regions);
      },
      py::arg("width"), py::arg("height"), py::arg("scales") = 3, py::arg("m") = py::none(),
      "Returns (m, [(x, y, side, scale), ...]).");

  m.def(
      "describe",
      [](const F32Array& a, const std::string& kind, int scales) {
        const QueryDescriptor d = describe(to_feature_map(a), parse_query_kind(kind), 1, scales);
        return from_vector(d.vector);
      },
      py::arg("features"), py::arg("kind"), py::arg("scales") = 3);

  m.def("adaptive_threshold", [](const F32Array& a) { return adaptive_threshold(to_score_map(a)); });
  m.def("setting_spec", [](const std::string& label) { return AggregationSetting::parse(label).to_spec(); });
  m.def("setting_labels", &AggregationSetting::preset_labels);

  m.def(
      "detect",
      [](std::shared_ptr<WeightsBundle> weights, const U8Array& query, const U8Array& target, const std::string& setting,
         double first, double second, bool stage2, int query_side) {
        DetectionConfig cfg;
        cfg.first_threshold = first;
        cfg.second_threshold = second;
        cfg.stage2_enabled = stage2;
        cfg.query_side = query_side;
        const Image q = to_image(query), t = to_image(target);
        DetectionResult r;
        {
          py::gil_scoped_release release;
          const Detector det(weights, AggregationSetting::parse(setting), cfg);
          r = det.detect(det.prepare_query(q), t);
        }
        py::dict out;
        py::list dets, cands;
        for (const auto& d : r.detections) dets.append(detection_dict(d));
        for (const auto& d : r.candidates) cands.append(detection_dict(d));
        out["detections"] = dets;
        out["candidates"] = cands;
        out["score_map"] = from_score_map(r.score.final_map);
        out["adaptive_threshold"] = r.adaptive_threshold;
        return out;
      },
      py::arg("weights"), py::arg("query"), py::arg("target"), py::arg("setting") = "a", py::arg("first_threshold") = 0.7,
      py::arg("second_threshold") = 0.9, py::arg("stage2") = true, py::arg("query_side") = 0);

  m.def(
      "match",
      [](const std::vector<std::tuple<int, int, int, int, double>>& dets, const std::vector<std::tuple<int, int, int, int>>& gt,
         double iou_min) {
        std::vector<Detection> ds;
        for (const auto& [x, y, w, h, s] : dets) ds.push_back({{x, y, w, h}, s});
        GroundTruth g;
        for (const auto& [x, y, w, h] : gt) g.boxes.push_back({x, y, w, h});
        const MatchCounts c = match_detections(ds, g, iou_min);
        return py::make_tuple(c.tp, c.fp, c.fn);
      },
      py::arg("detections"), py::arg("ground_truth"), py::arg("iou_min") = 0.5,
      "detections are (x, y, w, h, score); returns (tp, fp, fn).");

  m.def(
      "tank_object", [](int side, std::uint64_t variant) { return from_image(synthetic::tank_object(side, variant)); },
      py::arg("side"), py::arg("variant") = 0);
  m.def(
      "planted_scene",
      [](const U8Array& query, int width, int height, std::uint64_t seed) {
        synthetic::SceneOptions o;
        o.width = width;
        o.height = height;
        const synthetic::Scene s = synthetic::make_scene(to_image(query), o, seed);
        py::list boxes;
        for (const auto& b : s.planted) boxes.append(box_tuple(b));
        return py::make_tuple(from_image(s.image), boxes);
      },
      py::arg("query"), py::arg("width") = 384, py::arg("height") = 384, py::arg("seed") = 0);
}
