#pragma once

#include <functional>
#include <json.hpp>
#include <optional>
#include <string>

#include "kgeformer/config.hpp"
#include "kgeformer/data.hpp"
#include "kgeformer/knowledge_graph.hpp"

namespace kgeformer {

using LogFn = std::function<void(const std::string&)>;

struct LoadedData {
  RawSeries raw;
  std::optional<KnowledgeGraphSpec> graph;
  std::optional<AdjacencyMatrix> adjacency;  // in column order
};

// Dataset (CSV or generated) plus the graph when one is configured or implied.
LoadedData load_run_data(const RunConfig& config);
RawSeries synthesize_series(const RunConfig& config, KnowledgeGraphSpec& graph);

nlohmann::json cmd_train(const RunConfig& config, const LogFn& log);

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string dump_csv;
  std::string metrics_path;
  std::string expected_hash;
  bool force = false;
};
nlohmann::json cmd_evaluate(const EvaluateArgs& args);

nlohmann::json cmd_compare(const RunConfig& config, const LogFn& log);
nlohmann::json cmd_synthesize(const RunConfig& config, std::string csv_path, std::string graph_path);
std::string cmd_inspect_graph(const std::string& graph_path, const std::string& data_path);

}  // namespace kgeformer
