#pragma once

#include <string>
#include <vector>

#include "data/dataio.hpp"

namespace ap::data {

// Packed snippet store for fast re-training. Header records the extraction
// parameters; the body holds per-recording maps and packed snippets with their
// recording-level split tags.
struct SnippetCache {
  double dt = 0.3;
  size_t horizon = 10;
  int segments = 1;
  kin::VehicleGeometry geometry;
  ExtractStats stats;

  std::vector<SceneMap> maps;         // indexed by Snippet::map_index
  std::vector<Snippet> snippets;
  std::vector<uint8_t> split;         // 0 train / 1 val / 2 test, parallel to snippets

  std::string fingerprint;            // fnv1a-64 hex of the serialized body

  std::vector<size_t> indices_of(const std::string& split_name) const;
};

// Extracts from every recording and assigns recording-level splits (8:1:1 when
// there are at least 3 recordings; everything becomes `train` otherwise).
SnippetCache build_cache(const std::vector<Recording>& recordings, const ExtractConfig& cfg);

// Writes the cache and fills in its fingerprint.
void save_cache(SnippetCache& cache, const std::string& path);
SnippetCache load_cache(const std::string& path);

}  // namespace ap::data
