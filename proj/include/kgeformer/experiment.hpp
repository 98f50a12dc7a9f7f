#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "kgeformer/data.hpp"
#include "kgeformer/knowledge_graph.hpp"
#include "kgeformer/training.hpp"
#include "kgeformer/transformer.hpp"

namespace kgeformer {

// Split, scaler and window views for one dataset under one window shape.
struct PreparedData {
  std::string dataset;
  SplitScheme scheme = SplitScheme::ratio;
  SplitBorders borders;
  StandardScaler scaler;
  std::shared_ptr<const PreparedSeries> series;
  std::optional<WindowDataset> train, val, test;
};

PreparedData prepare_data(const RawSeries& raw, WindowShape shape, SplitScheme scheme);
// Same split, but with a scaler supplied by the caller (e.g. from a checkpoint).
PreparedData prepare_data(const RawSeries& raw, WindowShape shape, SplitScheme scheme, const StandardScaler& scaler);

struct RunResult {
  std::unique_ptr<Model<float>> model;
  TrainHistory history;
  MetricsRecord test;
};

// Builds, trains and tests one model. `adjacency` is required iff use_kge.
RunResult run_experiment(const PreparedData& data, const ModelConfig& model_config, const TrainConfig& train_config,
                         const std::optional<AdjacencyMatrix>& adjacency, const EpochCallback& on_epoch = {});

}  // namespace kgeformer
