// Command-line front end. Talks to the library only through the C API.
#include <CLI11.hpp>
#include <cstdio>
#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgeformer/kgeformer.h"

namespace {

struct Owned {
  char* p = nullptr;
  ~Owned() { kgf_string_free(p); }
};

int report(kgf_status st) {
  if (st != KGF_OK) std::fprintf(stderr, "error: %s: %s\n", kgf_status_name(st), kgf_last_error());
  return kgf_exit_code(st);
}

void print_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

// Options shared by the config-driven subcommands. Flags override the file.
struct RunFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value config file");
    const std::vector<std::pair<std::string, std::string>> flags{
        {"--data", "dataset CSV, or 'synthetic'"}, {"--graph", "knowledge-graph file"},
        {"--use-kge", "true/false"},               {"--seq-len", "lookback L"},
        {"--label-len", "decoder label length"},   {"--pred-len", "horizon H"},
        {"--d-model", "model width D"},            {"--n-heads", "attention heads"},
        {"--seed", "run seed"},                    {"--out", "output directory"},
        {"--seeds", "seed list for compare, e.g. 1..5"}};
    for (const auto& [flag, help] : flags) {
      std::string key = flag.substr(2);
      for (char& c : key)
        if (c == '-') c = '_';
      cmd->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
    }
    cmd->add_option("--set", sets, "extra key=value overrides (repeatable)");
  }

  kgf_status build(kgf_config** out) const {
    kgf_status st = kgf_config_create(out);
    if (st != KGF_OK) return st;
    if (!config_file.empty() && (st = kgf_config_load_file(*out, config_file.c_str())) != KGF_OK) return st;
    for (const auto& [k, v] : values)
      if ((st = kgf_config_set(*out, k.c_str(), v.c_str())) != KGF_OK) return st;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
        return KGF_ERR_CONFIG;
      }
      if ((st = kgf_config_set(*out, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != KGF_OK) return st;
    }
    return KGF_OK;
  }
};

using ConfigPtr = std::unique_ptr<kgf_config, decltype(&kgf_config_destroy)>;

int with_config(const RunFlags& flags, int (*body)(kgf_config*)) {
  kgf_config* raw = nullptr;
  const kgf_status st = flags.build(&raw);
  ConfigPtr config(raw, &kgf_config_destroy);
  if (st != KGF_OK) return report(st);
  return body(config.get());
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Large activation buffers are freed and reallocated every step; keep them
  // on the heap instead of paying an mmap/munmap round trip each time.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Transformer forecaster with knowledge-graph embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kgf_version());

  RunFlags train_flags, compare_flags, synth_flags, config_flags;
  auto* train = app.add_subcommand("train", "train one model; writes checkpoint, config snapshot and history");
  train_flags.attach(train);

  std::string ck_dir, eval_data, dump_csv, metrics_path, expected_config;
  bool force = false;
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split of a dataset");
  evaluate->add_option("--checkpoint", ck_dir, "checkpoint directory")->required();
  evaluate->add_option("--data", eval_data, "dataset CSV (defaults to regenerating synthetic data)");
  evaluate->add_option("--dump", dump_csv, "write timestamp,channel,truth,prediction rows here");
  evaluate->add_option("--metrics", metrics_path, "metrics JSON path (default <checkpoint>/eval_metrics.json)");
  evaluate->add_option("--config", expected_config, "refuse the checkpoint unless it matches this config");
  evaluate->add_flag("--force", force, "load despite a config-hash mismatch");

  auto* compare = app.add_subcommand("compare", "KGE vs no-KGE arms over several seeds");
  compare_flags.attach(compare);

  std::string synth_csv, synth_graph;
  auto* synth = app.add_subcommand("synthesize", "write a synthetic CSV and its true graph");
  synth_flags.attach(synth);
  synth->add_option("--csv", synth_csv, "CSV path (default <out>/synthetic.csv)");
  synth->add_option("--graph-out", synth_graph, "graph path (default <out>/synthetic.graph)");

  std::string inspect_graph, inspect_data;
  auto* inspect = app.add_subcommand("inspect-graph", "summarize a graph file and its channel mapping");
  inspect->add_option("--graph", inspect_graph, "graph file")->required();
  inspect->add_option("--data", inspect_data, "dataset CSV to map against");

  auto* show = app.add_subcommand("config", "print the canonical config and its hash");
  config_flags.attach(show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*train) {
    return with_config(train_flags, [](kgf_config* c) {
      Owned out;
      const kgf_status st = kgf_train(c, print_line, nullptr, &out.p);
      if (st == KGF_OK) std::printf("%s\n", out.p);
      return report(st);
    });
  }
  if (*compare) {
    return with_config(compare_flags, [](kgf_config* c) {
      Owned out;
      const kgf_status st = kgf_compare(c, print_line, nullptr, &out.p);
      if (st == KGF_OK) std::printf("%s\n", out.p);
      return report(st);
    });
  }
  if (*evaluate) {
    std::string hash;
    if (!expected_config.empty()) {
      kgf_config* raw = nullptr;
      kgf_status st = kgf_config_create(&raw);
      ConfigPtr c(raw, &kgf_config_destroy);
      if (st == KGF_OK) st = kgf_config_load_file(c.get(), expected_config.c_str());
      Owned h;
      if (st == KGF_OK) st = kgf_config_hash(c.get(), &h.p);
      if (st != KGF_OK) return report(st);
      hash = h.p;
    }
    Owned out;
    const kgf_status st = kgf_evaluate(ck_dir.c_str(), eval_data.c_str(), dump_csv.c_str(), metrics_path.c_str(),
                                       hash.c_str(), force ? 1 : 0, &out.p);
    if (st == KGF_OK) std::printf("%s\n", out.p);
    return report(st);
  }
  if (*synth) {
    kgf_config* raw = nullptr;
    kgf_status st = synth_flags.build(&raw);
    ConfigPtr c(raw, &kgf_config_destroy);
    if (st != KGF_OK) return report(st);
    Owned out;
    st = kgf_synthesize(c.get(), synth_csv.c_str(), synth_graph.c_str(), &out.p);
    if (st == KGF_OK) std::printf("%s\n", out.p);
    return report(st);
  }
  if (*inspect) {
    Owned out;
    const kgf_status st = kgf_inspect_graph(inspect_graph.c_str(), inspect_data.c_str(), &out.p);
    if (st == KGF_OK) std::printf("%s", out.p);
    return report(st);
  }
  if (*show) {
    return with_config(config_flags, [](kgf_config* c) {
      Owned text, hash;
      kgf_status st = kgf_config_canonical(c, &text.p);
      if (st == KGF_OK) st = kgf_config_hash(c, &hash.p);
      if (st == KGF_OK) std::printf("# config_hash %s\n%s", hash.p, text.p);
      return report(st);
    });
  }
  return 2;
}
