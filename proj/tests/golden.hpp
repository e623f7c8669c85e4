#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oneshot/backbone.hpp"
#include "oneshot/image.hpp"

namespace golden {

inline std::filesystem::path dir() { return std::filesystem::path(ONESHOT_TEST_DATA) / "golden"; }

struct Case {
  std::string name;
  oneshot::Image image;
  std::array<oneshot::FeatureMap, oneshot::kNumBlocks> blocks;
};

inline std::vector<Case> load() {
  std::ifstream in(dir() / "manifest.json");
  const auto doc = nlohmann::json::parse(in);
  std::vector<Case> out;
  for (const auto& e : doc.at("images")) {
    Case c;
    c.name = e.at("name").get<std::string>();
    c.image = oneshot::load_image(dir() / e.at("image").get<std::string>());
    std::ifstream f(dir() / e.at("activations").get<std::string>(), std::ios::binary);
    std::vector<float> all;
    float v;
    while (f.read(reinterpret_cast<char*>(&v), sizeof v)) all.push_back(v);
    int b = 0;
    for (const auto& blk : e.at("blocks")) {
      const auto shape = blk.at("shape").get<std::vector<int>>();
      const auto off = blk.at("offset").get<std::size_t>();
      const std::size_t n = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
      std::vector<float> data(all.begin() + off, all.begin() + off + n);
      c.blocks[b] = oneshot::FeatureMap(shape[2], shape[1], shape[0], 2 << b, std::move(data));
      ++b;
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline double max_abs_diff(const oneshot::FeatureMap& a, const oneshot::FeatureMap& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, static_cast<double>(std::abs(a.data()[i] - b.data()[i])));
  return m;
}

}  // namespace golden
