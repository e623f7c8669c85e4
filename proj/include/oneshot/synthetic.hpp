#pragma once

#include <cstdint>
#include <vector>

#include "oneshot/eval.hpp"
#include "oneshot/image.hpp"
#include "oneshot/tensor.hpp"

namespace oneshot::synthetic {

/// Smooth multi-octave colour texture standing in for terrain.
Image background(int width, int height, std::uint64_t seed);

/// A query-like object (clustered circular tanks on a concrete pad) filling
/// a side x side square. `variant` changes layout and palette.
Image tank_object(int side, std::uint64_t variant);

/// A non-query object of similar size: striped fields or blocky buildings.
Image distractor_object(int side, std::uint64_t seed);

void paste(Image& dst, const Image& src, int x, int y);

struct Scene {
  Image image;
  std::vector<Box> planted;      // copies of the query
  std::vector<Box> distractors;  // other objects
  std::vector<Box> decoys;       // tank_object variants that differ from the query
};

struct SceneOptions {
  int width = 384;
  int height = 384;
  int plants = 1;
  int distractors = 0;
  int decoys = 0;
};

/// Textured scene containing `plants` verbatim copies of `query` and
/// `distractors` plus `decoys` other objects of the same size, without
/// overlaps. Decoy variants are drawn from 1000 upwards.
Scene make_scene(const Image& query, const SceneOptions& options, std::uint64_t seed);

struct CorpusOptions {
  int queries = 5;
  int targets_per_query = 2;
  int query_side = 64;
  int target_side = 256;
  int plants = 1;
  int distractors = 1;
  int decoys = 1;
  std::uint64_t seed = 0;
};

/// Query i is tank_object(query_side, i). Each of its targets holds
/// `plants` copies (the ground truth, category = query id) among distractors
/// and decoys. Ids are "query<i+1>" and "query<i+1>_t<j+1>".
Corpus make_corpus(const CorpusOptions& options = {});

/// Uniform colour image.
Image blank(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);

}  // namespace oneshot::synthetic
