#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kgeformer {

// A human-authored conceptual graph over dataset variables. Node i stands for
// channel i of the series once mapped against a dataset.
struct KnowledgeGraphSpec {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  bool directed = true;
  bool self_loops = false;

  std::size_t node_index(std::string_view name) const;  // npos when absent
  bool operator==(const KnowledgeGraphSpec&) const = default;
};

struct AdjacencyMatrix {
  std::size_t size = 0;
  std::vector<std::uint8_t> values;  // row-major size x size, entries 0/1
  std::vector<std::string> node_order;

  std::uint8_t at(std::size_t row, std::size_t col) const { return values[row * size + col]; }
  std::size_t edge_count() const;
  bool operator==(const AdjacencyMatrix&) const = default;
};

// Line format:
//   # comment
//   directed true|false
//   self_loops true|false
//   node <name>
//   edge <src> -> <dst>
// Names may contain spaces; edges are split on " -> ".
KnowledgeGraphSpec parse_graph(std::string_view text);
KnowledgeGraphSpec load_graph_file(const std::string& path);
std::string serialize_graph(const KnowledgeGraphSpec& spec);

AdjacencyMatrix to_adjacency(const KnowledgeGraphSpec& spec);

struct ChannelMapping {
  // channel_to_node[c] = index of the node bound to dataset column c
  std::vector<std::size_t> channel_to_node;
  AdjacencyMatrix adjacency;  // permuted into dataset column order
};

// Binds nodes to dataset feature columns by name and permutes A into column
// order. Fails listing unmatched names on either side.
ChannelMapping validate_against_dataset(const KnowledgeGraphSpec& spec, const std::vector<std::string>& columns);

// Random directed graph over the same nodes with exactly `edge_count` edges
// (no self-loops); the placebo control for graph-content effects.
AdjacencyMatrix scrambled_adjacency(const AdjacencyMatrix& reference, std::uint64_t seed);

}  // namespace kgeformer
