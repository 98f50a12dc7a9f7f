#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "kgeformer/checkpoint.hpp"
#include "kgeformer/experiment.hpp"
#include "kgeformer/io.hpp"
#include "kgeformer/synthetic.hpp"

namespace kgeformer {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string path_in(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

std::string format_line(const char* fmt, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

ModelConfig resolve_model(const RunConfig& config, const RawSeries& raw, const std::optional<AdjacencyMatrix>& adjacency) {
  ModelConfig m = config.model;
  m.channels = raw.channels();
  m.freq = raw.freq;
  m.graph_nodes = adjacency ? adjacency->size : 0;
  return m;
}

json metrics_json(const MetricsRecord& r, const std::string& hash) {
  return {{"record", "test"}, {"dataset", r.dataset}, {"horizon", r.horizon}, {"use_kge", r.use_kge},
          {"seed", r.seed},   {"epoch", nullptr},     {"train_mse", nullptr},  {"val_mse", nullptr},
          {"test_mse", num(r.mse)}, {"test_mae", num(r.mae)}, {"windows", r.windows}, {"config_hash", hash}};
}

}  // namespace

RawSeries synthesize_series(const RunConfig& config, KnowledgeGraphSpec& graph) {
  if (config.graph.empty()) {
    graph = default_synthetic_graph(config.synth_channels);
  } else {
    graph = load_graph_file(config.graph);
    if (graph.nodes != synthetic_columns(config.synth_channels)) {
      fail(ErrorKind::validation, "synthetic data needs a graph over nodes x0..x" + std::to_string(config.synth_channels - 1));
    }
  }
  SyntheticSpec spec = config.synthetic_spec();
  spec.coupling = coupling_on_graph(to_adjacency(graph), config.synth_self_weight, config.synth_edge_weight,
                                    config.synth_max_radius, config.synth_seed);
  return generate(spec);
}

LoadedData load_run_data(const RunConfig& config) {
  LoadedData d;
  if (config.synthetic()) {
    KnowledgeGraphSpec g;
    d.raw = synthesize_series(config, g);
    d.graph = std::move(g);
  } else {
    if (config.data.empty()) fail(ErrorKind::config, "no dataset given (--data)");
    d.raw = load_csv(config.data);
    if (!config.graph.empty()) d.graph = load_graph_file(config.graph);
  }
  if (d.graph) d.adjacency = validate_against_dataset(*d.graph, d.raw.columns).adjacency;
  return d;
}

json cmd_train(const RunConfig& config, const LogFn& log) {
  config.validate();
  LoadedData data = load_run_data(config);
  const std::string hash = config.hash();
  const PreparedData prepared = prepare_data(data.raw, config.model.window_shape(), config.split);
  const std::optional<AdjacencyMatrix> adjacency =
      config.model.use_kge ? data.adjacency : std::optional<AdjacencyMatrix>{};
  const ModelConfig model_config = resolve_model(config, data.raw, adjacency);

  std::string history;
  auto on_epoch = [&](const EpochRecord& e) {
    json line = {{"record", "epoch"},  {"dataset", prepared.dataset}, {"horizon", model_config.pred_len},
                 {"use_kge", model_config.use_kge}, {"seed", config.train.seed}, {"epoch", e.epoch},
                 {"train_mse", num(e.train_mse)}, {"val_mse", num(e.val_mse)}, {"test_mse", nullptr},
                 {"test_mae", nullptr}, {"steps", e.steps}, {"learning_rate", e.learning_rate},
                 {"config_hash", hash}};
    history += line.dump() + "\n";
    if (log) log("epoch " + std::to_string(e.epoch) + format_line("  train_mse %.6f  val_mse %.6f", e.train_mse, e.val_mse));
  };
  if (log) {
    log("train " + prepared.dataset + ": " + std::to_string(prepared.train->size()) + " train / " +
        std::to_string(prepared.val->size()) + " val / " + std::to_string(prepared.test->size()) +
        " test windows, config " + hash);
  }
  RunResult result = run_experiment(prepared, model_config, config.train, adjacency, on_epoch);

  const json metrics = metrics_json(result.test, hash);
  history += metrics.dump() + "\n";

  CheckpointMeta meta;
  meta.config = config;
  meta.config_hash = hash;
  meta.model = model_config;
  meta.dataset = prepared.dataset;
  meta.columns = data.raw.columns;
  meta.scaler = prepared.scaler;
  meta.adjacency = adjacency;
  save_checkpoint(config.out, *result.model, meta);
  write_file_atomic(path_in(config.out, "config.txt"), "# config_hash " + hash + "\n" + config.canonical());
  write_file_atomic(path_in(config.out, "history.jsonl"), history);
  json summary = metrics;
  summary["best_epoch"] = result.history.best_epoch;
  summary["steps"] = result.history.steps;
  summary["early_stopped"] = result.history.early_stopped;
  summary["parameter_count"] = result.model->parameter_count();
  summary["out"] = config.out;
  write_file_atomic(path_in(config.out, "metrics.json"), summary.dump(2) + "\n");
  if (log) log(format_line("test  mse %.6f  mae %.6f", result.test.mse, result.test.mae));
  return summary;
}

json cmd_evaluate(const EvaluateArgs& args) {
  Checkpoint ck = load_checkpoint(args.checkpoint, args.expected_hash, args.force);
  const CheckpointMeta& meta = ck.meta;
  RawSeries raw;
  if (args.data.empty() || args.data == "synthetic") {
    if (!meta.config.synthetic() && args.data.empty()) {
      fail(ErrorKind::config, "no dataset given; the checkpoint was trained on '" + meta.config.data + "'");
    }
    KnowledgeGraphSpec g;
    raw = synthesize_series(meta.config, g);
  } else {
    raw = load_csv(args.data);
  }
  if (raw.channels() != meta.model.channels) {
    fail(ErrorKind::validation, "checkpoint expects M=" + std::to_string(meta.model.channels) + " channels, dataset '" +
                                    raw.name + "' has M=" + std::to_string(raw.channels()));
  }
  if (raw.columns != meta.columns) {
    std::string expected, found;
    for (const auto& c : meta.columns) expected += (expected.empty() ? "" : ",") + c;
    for (const auto& c : raw.columns) found += (found.empty() ? "" : ",") + c;
    fail(ErrorKind::validation, "dataset columns differ from the checkpoint: expected " + expected + ", found " + found);
  }
  if (raw.freq != meta.model.freq) {
    fail(ErrorKind::validation, "checkpoint expects " + to_string(meta.model.freq) + " data, dataset is " + to_string(raw.freq));
  }
  const PreparedData prepared = prepare_data(raw, meta.model.window_shape(), meta.config.split, meta.scaler);
  const WindowDataset& test = *prepared.test;

  std::string dump;
  PredictionSink<float> sink;
  const std::size_t h = meta.model.pred_len, m = meta.model.channels, l = meta.model.seq_len;
  if (!args.dump_csv.empty()) {
    dump = "timestamp,window,step,channel,truth,prediction,truth_raw,prediction_raw\n";
    sink = [&](std::size_t w, std::span<const float> pred, std::span<const float> truth) {
      const std::size_t first = test.start_row(w) + l;
      char buf[256];
      for (std::size_t s = 0; s < h; ++s) {
        const std::string ts = format_timestamp(raw.timestamps[first + s]);
        for (std::size_t c = 0; c < m; ++c) {
          const double t = truth[s * m + c], p = pred[s * m + c];
          std::snprintf(buf, sizeof buf, ",%zu,%zu,%s,%.9g,%.9g,%.9g,%.9g\n", w, s, raw.columns[c].c_str(), t, p,
                        meta.scaler.invert(t, c), meta.scaler.invert(p, c));
          dump += ts;
          dump += buf;
        }
      }
    };
  }
  MetricsRecord r = evaluate(*ck.model, test, meta.config.train.batch_size, sink);
  r.seed = meta.config.train.seed;
  json out = metrics_json(r, meta.config_hash);
  if (!args.dump_csv.empty()) {
    write_file_atomic(args.dump_csv, dump);
    out["dump_rows"] = test.size() * h * m;
  }
  const std::string metrics_path = args.metrics_path.empty() ? path_in(args.checkpoint, "eval_metrics.json") : args.metrics_path;
  write_file_atomic(metrics_path, out.dump(2) + "\n");
  return out;
}

json cmd_compare(const RunConfig& config, const LogFn& log) {
  if (config.seeds.empty()) fail(ErrorKind::config, "compare needs a non-empty seed list (seeds = 1..5)");
  RunConfig base = config;
  base.model.use_kge = false;
  base.validate();
  LoadedData data = load_run_data(config);
  if (!data.adjacency) fail(ErrorKind::config, "compare needs a knowledge graph (--graph)");
  const std::string hash = config.hash();
  const PreparedData prepared = prepare_data(data.raw, config.model.window_shape(), config.split);
  const ModelConfig model_config = resolve_model(base, data.raw, data.adjacency);

  AbOptions options;
  options.include_placebo = config.synthetic() && config.placebo;
  options.jobs = config.jobs;
  options.config_hash = hash;
  options.on_row = [&](const AbRow& row) {
    if (log) {
      log(row.arm + " seed " + std::to_string(row.seed) +
          format_line("  test mse %.6f  mae %.6f", row.metrics.mse, row.metrics.mae));
    }
  };
  if (log) {
    log("compare " + prepared.dataset + ": " + std::to_string(config.seeds.size()) + " seeds, " +
        (options.include_placebo ? "3" : "2") + " arms, config " + hash);
  }
  const AbReport report = run_ab(prepared, *data.adjacency, model_config, config.train, config.seeds, options);

  json rows = json::array();
  std::string jsonl;
  for (const AbRow& row : report.rows) {
    json r = metrics_json(row.metrics, hash);
    r["arm"] = row.arm;
    r["parameter_count"] = row.parameter_count;
    r["best_epoch"] = row.best_epoch;
    r["steps"] = row.steps;
    jsonl += r.dump() + "\n";
    rows.push_back(r);
  }
  json arms = json::array();
  for (const AbArmSummary& a : report.arms) {
    arms.push_back({{"arm", a.arm}, {"runs", a.runs}, {"mean_mse", a.mean_mse}, {"std_mse", a.std_mse},
                    {"mean_mae", a.mean_mae}, {"std_mae", a.std_mae}, {"paired_diff_mean", a.paired_diff_mean},
                    {"paired_diff_se", a.paired_diff_se}, {"parameter_count", a.parameter_count}});
  }
  json out = {{"config_hash", hash},
              {"dataset", prepared.dataset},
              {"horizon", model_config.pred_len},
              {"seeds", config.seeds},
              {"rows", rows},
              {"arms", arms},
              {"kge_parameter_delta", report.kge_parameter_delta},
              {"expected_kge_parameter_delta", report.expected_kge_parameter_delta},
              {"parameter_delta_ok", report.kge_parameter_delta == report.expected_kge_parameter_delta}};
  const double base_mse = report.arm(kArmNoKge).mean_mse;
  out["kge_mse_ratio"] = num(report.arm(kArmKge).mean_mse / base_mse);
  if (options.include_placebo) {
    const AbArmSummary& p = report.arm(kArmPlacebo);
    out["placebo_mse_ratio"] = num(p.mean_mse / base_mse);
    out["placebo_within_2se"] = std::abs(p.paired_diff_mean) <= 2.0 * p.paired_diff_se;
  }
  write_file_atomic(path_in(config.out, "compare.jsonl"), jsonl);
  write_file_atomic(path_in(config.out, "compare_report.json"), out.dump(2) + "\n");
  write_file_atomic(path_in(config.out, "config.txt"), "# config_hash " + hash + "\n" + config.canonical());
  return out;
}

json cmd_synthesize(const RunConfig& config, std::string csv_path, std::string graph_path) {
  config.validate();
  if (csv_path.empty()) csv_path = path_in(config.out, "synthetic.csv");
  if (graph_path.empty()) graph_path = path_in(config.out, "synthetic.graph");
  KnowledgeGraphSpec graph;
  RawSeries raw = synthesize_series(config, graph);
  write_file_atomic(csv_path, to_csv(raw));
  write_file_atomic(graph_path, serialize_graph(graph));
  return {{"csv", csv_path},
          {"graph", graph_path},
          {"rows", raw.rows()},
          {"channels", raw.channels()},
          {"generator", to_string(config.synth_generator)},
          {"edges", to_adjacency(graph).edge_count()},
          {"seed", config.synth_seed}};
}

std::string cmd_inspect_graph(const std::string& graph_path, const std::string& data_path) {
  const KnowledgeGraphSpec graph = load_graph_file(graph_path);
  const AdjacencyMatrix a = to_adjacency(graph);
  std::ostringstream out;
  out << "graph: " << graph_path << "\n";
  out << "nodes (V): " << a.size << "\n";
  out << "edges: " << graph.edges.size() << (graph.directed ? " (directed)" : " (undirected)")
      << ", adjacency non-zeros: " << a.edge_count() << "\n";
  out << "self_loops: " << (graph.self_loops ? "true" : "false") << "\n";
  if (a.edge_count() == 0) out << "warning: graph has no edges; A = 0, so the knowledge-graph embedding will be inert\n";
  std::size_t width = 4;
  for (const auto& n : graph.nodes) width = std::max(width, n.size());
  out << "\n" << std::left << std::setw(static_cast<int>(width)) << "node" << "  out_degree  in_degree\n";
  for (std::size_t i = 0; i < a.size; ++i) {
    std::size_t outd = 0, ind = 0;
    for (std::size_t j = 0; j < a.size; ++j) {
      if (i == j) continue;
      outd += a.at(i, j);
      ind += a.at(j, i);
    }
    out << std::left << std::setw(static_cast<int>(width)) << graph.nodes[i] << "  " << std::right << std::setw(10)
        << outd << "  " << std::setw(9) << ind << "\n";
  }
  if (!data_path.empty()) {
    const RawSeries raw = load_csv(data_path);
    const ChannelMapping mapping = validate_against_dataset(graph, raw.columns);
    out << "\nchannel mapping (" << raw.name << ", M=" << raw.channels() << "):\n";
    for (std::size_t c = 0; c < mapping.channel_to_node.size(); ++c) {
      out << "  channel " << c << " " << raw.columns[c] << " -> node " << mapping.channel_to_node[c] << "\n";
    }
  }
  return out.str();
}

}  // namespace kgeformer
