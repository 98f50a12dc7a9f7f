#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgeformer/config.hpp"
#include "kgeformer/data.hpp"
#include "kgeformer/knowledge_graph.hpp"
#include "kgeformer/transformer.hpp"

namespace kgeformer {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointManifest = "checkpoint.json";
inline constexpr const char* kCheckpointBlob = "checkpoint.bin";

struct CheckpointMeta {
  RunConfig config;
  std::string config_hash;
  ModelConfig model;  // resolved: channels, frequency and graph size filled in
  std::string dataset;
  std::vector<std::string> columns;
  StandardScaler scaler;
  std::optional<AdjacencyMatrix> adjacency;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::unique_ptr<Model<float>> model;
};

// <dir>/checkpoint.json (manifest) + <dir>/checkpoint.bin (little-endian f32,
// tensors concatenated in manifest order). Both are written atomically.
void save_checkpoint(const std::string& dir, const Model<float>& model, const CheckpointMeta& meta);

// Refuses (validation error) when the manifest's config hash does not match
// its own config, or `expected_hash` is given and differs, unless `force`.
Checkpoint load_checkpoint(const std::string& dir, const std::string& expected_hash = {}, bool force = false);

}  // namespace kgeformer
