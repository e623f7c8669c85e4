#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oneshot/image.hpp"
#include "oneshot/tensor.hpp"

namespace oneshot {

class WeightsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kNumBlocks = 5;
inline constexpr std::array<int, kNumBlocks> kBlockChannels{64, 128, 256, 512, 512};

/// One 3x3 convolution of the VGG16 trunk.
struct ConvSpec {
  std::string name;  // e.g. "conv3_2"
  int block;         // 1..5
  int in_channels;
  int out_channels;
};

/// The 13 convolutions of VGG16 in execution order.
const std::vector<ConvSpec>& vgg16_convs();

struct TensorEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::uint64_t offset = 0;  // bytes from start of blob
  std::uint64_t length = 0;  // bytes

  std::int64_t numel() const;
};

struct Preprocessing {
  int input_side = 224;
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

/// Validated VGG16 convolution weights. Immutable once constructed.
class WeightsBundle {
 public:
  WeightsBundle() = default;
  /// Validates the manifest against the blob and the VGG16 layer table.
  WeightsBundle(std::vector<TensorEntry> manifest, std::vector<float> blob, Preprocessing pre);

  const std::vector<TensorEntry>& manifest() const { return manifest_; }
  const Preprocessing& preprocessing() const { return pre_; }
  const std::vector<float>& blob() const { return blob_; }

  const TensorEntry& entry(const std::string& name) const;
  std::span<const float> tensor(const std::string& name) const;

 private:
  std::vector<TensorEntry> manifest_;
  std::vector<float> blob_;
  Preprocessing pre_;
};

/// Reads a weights container (see docs/weights_format.md).
WeightsBundle load_weights(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const WeightsBundle& bundle);

/// Deterministic stand-in weights for tests and demos when no trained file is
/// at hand. Filters are zero-mean uniform draws from splitmix64(seed, t, k).
/// Each layer is then standardised per output channel on a fixed synthetic
/// calibration image, with a per-block negative bias offset.
WeightsBundle synthetic_vgg16_weights(std::uint64_t seed = 0);

/// Bilinear resize to side x side, scale to [0, 1], per-channel standardise.
FeatureMap preprocess(const Image& image, int side, const Preprocessing& pre = {});

/// Standardises at native resolution, padding right/bottom with zeros (the
/// channel mean) up to a multiple of `multiple` pixels.
FeatureMap preprocess_native(const Image& image, const Preprocessing& pre = {}, int multiple = 32);

struct FeaturePyramid {
  std::array<FeatureMap, kNumBlocks> blocks;
  std::string source;
  int input_width = 0;
  int input_height = 0;

  const FeatureMap& block(int index) const { return blocks.at(index - 1); }
};

/// Runs the 13-conv trunk. Block i is read after its max-pool (stride 2^i).
FeaturePyramid forward(const WeightsBundle& weights, const FeatureMap& input, std::string source = {});

}  // namespace oneshot
