#include "kgeformer/knowledge_graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "kgeformer/error.hpp"
#include "kgeformer/rng.hpp"

namespace kgeformer {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void parse_error(std::size_t line, const std::string& message) {
  fail(ErrorKind::parse, "graph line " + std::to_string(line) + ": " + message);
}

bool parse_bool(std::string_view value, std::size_t line) {
  if (value == "true") return true;
  if (value == "false") return false;
  parse_error(line, "expected true or false, got '" + std::string(value) + "'");
}

}  // namespace

std::size_t KnowledgeGraphSpec::node_index(std::string_view name) const {
  const auto it = std::find(nodes.begin(), nodes.end(), name);
  return it == nodes.end() ? std::string::npos : static_cast<std::size_t>(it - nodes.begin());
}

std::size_t AdjacencyMatrix::edge_count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

KnowledgeGraphSpec parse_graph(std::string_view text) {
  KnowledgeGraphSpec spec;
  struct PendingEdge {
    std::string src, dst;
    std::size_t line;
  };
  std::vector<PendingEdge> pending;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;

    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto space = line.find_first_of(" \t");
    const std::string_view keyword = line.substr(0, space);
    const std::string_view rest = space == std::string_view::npos ? std::string_view{} : trim(line.substr(space));

    if (keyword == "directed") {
      spec.directed = parse_bool(rest, line_no);
    } else if (keyword == "self_loops") {
      spec.self_loops = parse_bool(rest, line_no);
    } else if (keyword == "node") {
      if (rest.empty()) parse_error(line_no, "node declaration without a name");
      if (spec.node_index(rest) != std::string::npos) {
        parse_error(line_no, "duplicate node '" + std::string(rest) + "'");
      }
      spec.nodes.emplace_back(rest);
    } else if (keyword == "edge") {
      const auto arrow = rest.find("->");
      if (arrow == std::string_view::npos) parse_error(line_no, "edge must have the form 'edge <src> -> <dst>'");
      const std::string_view src = trim(rest.substr(0, arrow));
      const std::string_view dst = trim(rest.substr(arrow + 2));
      if (src.empty() || dst.empty()) parse_error(line_no, "edge with an empty endpoint");
      pending.push_back({std::string(src), std::string(dst), line_no});
    } else {
      parse_error(line_no, "unknown directive '" + std::string(keyword) + "'");
    }
  }

  // Edges may precede node lines; resolve once every node is known.
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const PendingEdge& e : pending) {
    const std::size_t s = spec.node_index(e.src);
    const std::size_t d = spec.node_index(e.dst);
    if (s == std::string::npos) parse_error(e.line, "edge references unknown node '" + e.src + "'");
    if (d == std::string::npos) parse_error(e.line, "edge references unknown node '" + e.dst + "'");
    if (s == d) parse_error(e.line, "self edge on '" + e.src + "'; use 'self_loops true' instead");
    const auto key = spec.directed ? std::pair{s, d} : std::pair{std::min(s, d), std::max(s, d)};
    if (!seen.insert(key).second) continue;
    spec.edges.emplace_back(e.src, e.dst);
  }
  return spec;
}

KnowledgeGraphSpec load_graph_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open graph file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_graph(buffer.str());
}

std::string serialize_graph(const KnowledgeGraphSpec& spec) {
  std::ostringstream os;
  os << "directed " << (spec.directed ? "true" : "false") << '\n';
  os << "self_loops " << (spec.self_loops ? "true" : "false") << '\n';
  for (const auto& n : spec.nodes) os << "node " << n << '\n';
  for (const auto& [src, dst] : spec.edges) os << "edge " << src << " -> " << dst << '\n';
  return os.str();
}

AdjacencyMatrix to_adjacency(const KnowledgeGraphSpec& spec) {
  AdjacencyMatrix a;
  a.size = spec.nodes.size();
  a.node_order = spec.nodes;
  a.values.assign(a.size * a.size, 0);
  for (const auto& [src, dst] : spec.edges) {
    const std::size_t s = spec.node_index(src);
    const std::size_t d = spec.node_index(dst);
    if (s == std::string::npos || d == std::string::npos) {
      fail(ErrorKind::validation, "edge " + src + " -> " + dst + " references an undeclared node");
    }
    a.values[s * a.size + d] = 1;
    if (!spec.directed) a.values[d * a.size + s] = 1;
  }
  for (std::size_t i = 0; i < a.size; ++i) a.values[i * a.size + i] = spec.self_loops ? 1 : 0;
  return a;
}

ChannelMapping validate_against_dataset(const KnowledgeGraphSpec& spec, const std::vector<std::string>& columns) {
  std::vector<std::string> missing_columns;  // nodes with no column
  std::vector<std::string> missing_nodes;    // columns with no node
  for (const auto& n : spec.nodes) {
    if (std::find(columns.begin(), columns.end(), n) == columns.end()) missing_columns.push_back(n);
  }
  for (const auto& c : columns) {
    if (spec.node_index(c) == std::string::npos) missing_nodes.push_back(c);
  }
  if (!missing_columns.empty() || !missing_nodes.empty()) {
    std::string message = "graph/dataset mismatch;";
    auto join = [](const std::vector<std::string>& names) {
      std::string out;
      for (const auto& n : names) out += (out.empty() ? "" : ", ") + ("'" + n + "'");
      return out.empty() ? std::string("none") : out;
    };
    message += " nodes without a column: " + join(missing_columns);
    message += "; columns without a node: " + join(missing_nodes);
    fail(ErrorKind::validation, message);
  }

  const AdjacencyMatrix base = to_adjacency(spec);
  ChannelMapping mapping;
  mapping.channel_to_node.reserve(columns.size());
  for (const auto& c : columns) mapping.channel_to_node.push_back(spec.node_index(c));
  AdjacencyMatrix& a = mapping.adjacency;
  a.size = columns.size();
  a.node_order = columns;
  a.values.assign(a.size * a.size, 0);
  for (std::size_t i = 0; i < a.size; ++i)
    for (std::size_t j = 0; j < a.size; ++j)
      a.values[i * a.size + j] = base.at(mapping.channel_to_node[i], mapping.channel_to_node[j]);
  return mapping;
}

AdjacencyMatrix scrambled_adjacency(const AdjacencyMatrix& reference, std::uint64_t seed) {
  const std::size_t v = reference.size;
  std::size_t off_diagonal = 0;
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j)
      if (i != j && reference.at(i, j)) ++off_diagonal;

  // Fisher-Yates over the off-diagonal slots; take the first edge_count.
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j)
      if (i != j) slots.push_back(i * v + j);
  Rng rng(seed);
  for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[rng.below(i)]);

  AdjacencyMatrix out;
  out.size = v;
  out.node_order = reference.node_order;
  out.values.assign(v * v, 0);
  for (std::size_t k = 0; k < off_diagonal; ++k) out.values[slots[k]] = 1;
  for (std::size_t i = 0; i < v; ++i) out.values[i * v + i] = reference.at(i, i);
  return out;
}

}  // namespace kgeformer
