#include "oneshot/backbone.hpp"

#include "oneshot/synthetic.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <json.hpp>

namespace oneshot {

namespace {

constexpr char kMagic[8] = {'O', 'S', 'V', 'G', 'G', 'W', '0', '1'};
constexpr std::size_t kBlobAlign = 64;

static_assert(std::endian::native == std::endian::little, "weights loader assumes a little-endian host");

std::vector<std::int64_t> expected_shape(const ConvSpec& conv, bool weight) {
  if (weight) return {conv.out_channels, conv.in_channels, 3, 3};
  return {conv.out_channels};
}

}  // namespace

const std::vector<ConvSpec>& vgg16_convs() {
  static const std::vector<ConvSpec> convs = [] {
    std::vector<ConvSpec> v;
    const std::array<int, kNumBlocks> depth{2, 2, 3, 3, 3};
    int in = 3;
    for (int b = 0; b < kNumBlocks; ++b) {
      for (int i = 0; i < depth[b]; ++i) {
        v.push_back({"conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1), b + 1, in, kBlockChannels[b]});
        in = kBlockChannels[b];
      }
    }
    return v;
  }();
  return convs;
}

std::int64_t TensorEntry::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

WeightsBundle::WeightsBundle(std::vector<TensorEntry> manifest, std::vector<float> blob, Preprocessing pre)
    : manifest_(std::move(manifest)), blob_(std::move(blob)), pre_(pre) {
  const std::uint64_t blob_bytes = blob_.size() * sizeof(float);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (const auto& e : manifest_) {
    if (e.offset % sizeof(float) != 0) throw WeightsError("corrupt weights file: misaligned tensor " + e.name);
    if (e.offset + e.length > blob_bytes || e.offset + e.length < e.offset)
      throw WeightsError("corrupt weights file: tensor " + e.name + " extends past end of blob");
    ranges.emplace_back(e.offset, e.offset + e.length);
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i].first < ranges[i - 1].second) throw WeightsError("corrupt weights file: overlapping tensors");

  for (const auto& conv : vgg16_convs()) {
    for (bool weight : {true, false}) {
      const std::string name = conv.name + (weight ? ".weight" : ".bias");
      auto it = std::find_if(manifest_.begin(), manifest_.end(), [&](const TensorEntry& e) { return e.name == name; });
      if (it == manifest_.end()) throw WeightsError("incomplete weights: missing " + name);
      if (it->shape != expected_shape(conv, weight)) throw WeightsError("architecture mismatch: " + name);
      if (it->length != static_cast<std::uint64_t>(it->numel()) * sizeof(float))
        throw WeightsError("architecture mismatch: byte length of " + name);
    }
  }
  if (pre_.input_side < 32) throw WeightsError("corrupt weights file: input_side must be >= 32");
  for (float s : pre_.std)
    if (!(s > 0.0f)) throw WeightsError("corrupt weights file: std must be positive");
}

const TensorEntry& WeightsBundle::entry(const std::string& name) const {
  for (const auto& e : manifest_)
    if (e.name == name) return e;
  throw WeightsError("incomplete weights: missing " + name);
}

std::span<const float> WeightsBundle::tensor(const std::string& name) const {
  const auto& e = entry(name);
  return {blob_.data() + e.offset / sizeof(float), static_cast<std::size_t>(e.length / sizeof(float))};
}

WeightsBundle load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightsError("cannot open weights file: " + path.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);

  char magic[8];
  std::uint64_t manifest_len = 0;
  if (file_size < 16 || !in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw WeightsError("corrupt weights file: bad magic in " + path.string());
  in.read(reinterpret_cast<char*>(&manifest_len), 8);
  if (manifest_len > file_size - 16) throw WeightsError("corrupt weights file: manifest length out of range");

  std::string text(manifest_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(manifest_len));

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(std::string("corrupt weights file: manifest is not valid JSON: ") + e.what());
  }

  std::vector<TensorEntry> manifest;
  Preprocessing pre;
  try {
    for (const auto& t : doc.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<std::vector<std::int64_t>>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.length = t.at("length").get<std::uint64_t>();
      manifest.push_back(std::move(e));
    }
    if (doc.contains("preprocessing")) {
      const auto& p = doc["preprocessing"];
      pre.input_side = p.value("input_side", pre.input_side);
      if (p.contains("mean")) pre.mean = p["mean"].get<std::array<float, 3>>();
      if (p.contains("std")) pre.std = p["std"].get<std::array<float, 3>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(std::string("corrupt weights file: malformed manifest: ") + e.what());
  }

  const std::uint64_t header = 16 + manifest_len;
  const std::uint64_t blob_start = (header + kBlobAlign - 1) / kBlobAlign * kBlobAlign;
  std::uint64_t needed = 0;
  for (const auto& e : manifest) needed = std::max(needed, e.offset + e.length);
  if (blob_start > file_size || file_size - blob_start < needed)
    throw WeightsError("corrupt weights file: blob is truncated");

  std::vector<float> blob((file_size - blob_start) / sizeof(float));
  in.seekg(static_cast<std::streamoff>(blob_start));
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!in) throw WeightsError("corrupt weights file: short read");
  return WeightsBundle(std::move(manifest), std::move(blob), pre);
}

void save_weights(const std::filesystem::path& path, const WeightsBundle& bundle) {
  nlohmann::json doc;
  doc["format"] = "oneshot-vgg16-weights";
  doc["version"] = 1;
  const auto& pre = bundle.preprocessing();
  doc["preprocessing"] = {{"input_side", pre.input_side}, {"mean", pre.mean}, {"std", pre.std}};
  doc["tensors"] = nlohmann::json::array();
  for (const auto& e : bundle.manifest())
    doc["tensors"].push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}, {"length", e.length}});
  const std::string text = doc.dump();
  const std::uint64_t len = text.size();
  const std::uint64_t header = 16 + len;
  const std::uint64_t blob_start = (header + kBlobAlign - 1) / kBlobAlign * kBlobAlign;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightsError("cannot write weights file: " + path.string());
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(len));
  const std::string pad(blob_start - header, '\0');
  out.write(pad.data(), static_cast<std::streamsize>(pad.size()));
  out.write(reinterpret_cast<const char*>(bundle.blob().data()),
            static_cast<std::streamsize>(bundle.blob().size() * sizeof(float)));
  if (!out) throw WeightsError("cannot write weights file: " + path.string());
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

FeatureMap preprocess(const Image& image, int side, const Preprocessing& pre) {
  if (image.empty() || image.channels != 3) throw ImageError("unsupported image");
  if (side < 32) throw std::invalid_argument("preprocess side must be >= 32");
  FeatureMap out(side, side, 3, 1);
  const double sx = static_cast<double>(image.width) / side;
  const double sy = static_cast<double>(image.height) / side;
  for (int y = 0; y < side; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < side; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0, c) * (1 - wx) + image.at(x1, y0, c) * wx;
        const double bot = image.at(x0, y1, c) * (1 - wx) + image.at(x1, y1, c) * wx;
        const double v = (top * (1 - wy) + bot * wy) / 255.0;
        out.at(c, y, x) = static_cast<float>((v - pre.mean[c]) / pre.std[c]);
      }
    }
  }
  return out;
}

FeatureMap preprocess_native(const Image& image, const Preprocessing& pre, int multiple) {
  if (image.empty() || image.channels != 3) throw ImageError("unsupported image");
  if (multiple < 1) throw std::invalid_argument("padding multiple must be positive");
  auto round_up = [&](int v) { return std::max(32, (v + multiple - 1) / multiple * multiple); };
  FeatureMap out(round_up(image.width), round_up(image.height), 3, 1);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        out.at(c, y, x) = static_cast<float>((image.at(x, y, c) / 255.0 - pre.mean[c]) / pre.std[c]);
  return out;
}

namespace {

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 3x3 convolution, zero padding 1, optionally followed by ReLU. im2col is
// built in row stripes so the scratch buffer stays bounded for large targets.
FeatureMap conv3x3(const FeatureMap& in, std::span<const float> weight, std::span<const float> bias, int out_ch,
                   bool relu = true) {
  const int W = in.width(), H = in.height(), C = in.channels();
  const int K = C * 9;
  FeatureMap out(W, H, out_ch, in.stride());
  const Eigen::Map<const RowMajor> wmat(weight.data(), out_ch, K);

  constexpr std::size_t kScratchFloats = std::size_t{1} << 22;
  const int rows_per_tile = std::clamp(static_cast<int>(kScratchFloats / K / W), 1, H);
  std::vector<float> cols(static_cast<std::size_t>(K) * rows_per_tile * W);

  for (int y0 = 0; y0 < H; y0 += rows_per_tile) {
    const int rows = std::min(rows_per_tile, H - y0);
    const int n = rows * W;
    for (int c = 0; c < C; ++c) {
      const auto src = in.plane(c);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          float* dst = cols.data() + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * n;
          for (int r = 0; r < rows; ++r) {
            const int sy = y0 + r + ky - 1;
            float* drow = dst + static_cast<std::size_t>(r) * W;
            if (sy < 0 || sy >= H) {
              std::fill(drow, drow + W, 0.0f);
              continue;
            }
            const float* srow = src.data() + static_cast<std::size_t>(sy) * W;
            const int shift = kx - 1;
            const int lo = std::max(0, -shift), hi = std::min(W, W - shift);
            std::fill(drow, drow + lo, 0.0f);
            std::copy(srow + lo + shift, srow + hi + shift, drow + lo);
            std::fill(drow + hi, drow + W, 0.0f);
          }
        }
      }
    }
    const Eigen::Map<const RowMajor> cmat(cols.data(), K, n);
    Eigen::Map<RowMajor, 0, Eigen::OuterStride<>> omat(out.data().data() + static_cast<std::size_t>(y0) * W, out_ch, n,
                                                        Eigen::OuterStride<>(static_cast<Eigen::Index>(out.plane_size())));
    omat.noalias() = wmat * cmat;
    for (int co = 0; co < out_ch; ++co) {
      float* row = omat.row(co).data();
      const float b = bias[co];
      if (relu)
        for (int i = 0; i < n; ++i) row[i] = std::max(row[i] + b, 0.0f);
      else
        for (int i = 0; i < n; ++i) row[i] += b;
    }
  }
  return out;
}

FeatureMap max_pool2(const FeatureMap& in) {
  const int W = in.width() / 2, H = in.height() / 2;
  FeatureMap out(W, H, in.channels(), in.stride() * 2);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const float a = std::max(in.at(c, 2 * y, 2 * x), in.at(c, 2 * y, 2 * x + 1));
        const float b = std::max(in.at(c, 2 * y + 1, 2 * x), in.at(c, 2 * y + 1, 2 * x + 1));
        out.at(c, y, x) = std::max(a, b);
      }
    }
  }
  return out;
}

}  // namespace

FeaturePyramid forward(const WeightsBundle& weights, const FeatureMap& input, std::string source) {
  if (input.channels() != 3) throw std::invalid_argument("backbone input must have 3 channels");
  if (input.width() < 32 || input.height() < 32) throw std::invalid_argument("backbone input must be at least 32x32");
  FeaturePyramid pyr;
  pyr.source = std::move(source);
  pyr.input_width = input.width();
  pyr.input_height = input.height();

  FeatureMap x = input;
  int block = 1;
  for (const auto& conv : vgg16_convs()) {
    if (conv.block != block) {
      pyr.blocks[block - 1] = max_pool2(x);
      x = pyr.blocks[block - 1];
      block = conv.block;
    }
    x = conv3x3(x, weights.tensor(conv.name + ".weight"), weights.tensor(conv.name + ".bias"), conv.out_channels);
  }
  pyr.blocks[kNumBlocks - 1] = max_pool2(x);
  return pyr;
}

WeightsBundle synthetic_vgg16_weights(std::uint64_t seed) {
  // Random zero-mean filters, then each layer is standardised on a fixed
  // calibration image: every output channel gets unit pre-activation spread
  // and a bias of -kOffset[block]. Sparse early blocks keep flat textures
  // from matching everything; dense late blocks tolerate misalignment.
  constexpr std::array<double, kNumBlocks> kOffset{1.5, 1.0, 0.5, 0.0, 0.0};
  constexpr int kCalibrationSide = 128;

  Image calib = synthetic::background(kCalibrationSide, kCalibrationSide, 0x5EED);
  synthetic::paste(calib, synthetic::tank_object(48, 3), 16, 40);
  synthetic::paste(calib, synthetic::distractor_object(40, 2), 72, 12);

  std::vector<TensorEntry> manifest;
  std::vector<float> blob;
  std::uint64_t tensor_index = 0;
  FeatureMap x = preprocess(calib, kCalibrationSide);
  int block = 1;
  for (const auto& conv : vgg16_convs()) {
    if (conv.block != block) {
      x = max_pool2(x);
      block = conv.block;
    }
    const int fan_in = conv.in_channels * 9;
    std::vector<float> weight(static_cast<std::size_t>(conv.out_channels) * fan_in);
    const std::uint64_t key = (seed << 48) ^ (tensor_index << 32);
    for (int o = 0; o < conv.out_channels; ++o) {
      float* f = weight.data() + static_cast<std::size_t>(o) * fan_in;
      double mean = 0.0;
      for (int k = 0; k < fan_in; ++k) {
        const auto idx = static_cast<std::uint64_t>(o) * fan_in + k;
        f[k] = static_cast<float>(2.0 * (static_cast<double>(splitmix64(key ^ idx) >> 40) * 0x1p-24) - 1.0);
        mean += f[k];
      }
      mean /= fan_in;
      for (int k = 0; k < fan_in; ++k) f[k] = static_cast<float>(f[k] - mean);
    }
    const std::vector<float> zero(conv.out_channels, 0.0f);
    FeatureMap pre = conv3x3(x, weight, zero, conv.out_channels, false);

    std::vector<float> bias(conv.out_channels);
    for (int o = 0; o < conv.out_channels; ++o) {
      const auto p = pre.plane(o);
      double sum = 0.0, sq = 0.0;
      for (float v : p) {
        sum += v;
        sq += static_cast<double>(v) * v;
      }
      const double mu = sum / p.size();
      const double sd = std::sqrt(std::max(sq / p.size() - mu * mu, 0.0));
      const double scale = sd > 1e-6 ? 1.0 / sd : 1.0;
      float* f = weight.data() + static_cast<std::size_t>(o) * fan_in;
      for (int k = 0; k < fan_in; ++k) f[k] = static_cast<float>(f[k] * scale);
      const double off = kOffset[block - 1];
      bias[o] = static_cast<float>(-mu * scale - off);
      for (float& v : pre.plane(o)) v = std::max(static_cast<float>((v - mu) * scale - off), 0.0f);
    }
    x = std::move(pre);

    for (bool is_weight : {true, false}) {
      const auto& src = is_weight ? weight : bias;
      TensorEntry e;
      e.name = conv.name + (is_weight ? ".weight" : ".bias");
      e.shape = expected_shape(conv, is_weight);
      e.offset = blob.size() * sizeof(float);
      e.length = src.size() * sizeof(float);
      blob.insert(blob.end(), src.begin(), src.end());
      manifest.push_back(std::move(e));
      ++tensor_index;
    }
  }
  return WeightsBundle(std::move(manifest), std::move(blob), Preprocessing{});
}

}  // namespace oneshot
