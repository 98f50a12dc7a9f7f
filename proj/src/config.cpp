#include "kgeformer/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "kgeformer/rng.hpp"

namespace kgeformer {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(ErrorKind::config, "invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                              std::string(expected) + ")");
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "non-negative integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "non-negative integer");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true/false");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(key, member) \
  {key, {[](RunConfig& c, std::string_view v) { c.member = to_size(key, v); }, [](const RunConfig& c) { return fmt(c.member); }}}
#define DOUBLE_FIELD(key, member) \
  {key, {[](RunConfig& c, std::string_view v) { c.member = to_double(key, v); }, [](const RunConfig& c) { return fmt(c.member); }}}
#define BOOL_FIELD(key, member) \
  {key, {[](RunConfig& c, std::string_view v) { c.member = to_bool(key, v); }, [](const RunConfig& c) { return fmt(c.member); }}}
#define STRING_FIELD(key, member) \
  {key, {[](RunConfig& c, std::string_view v) { c.member = std::string(v); }, [](const RunConfig& c) { return c.member; }}}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table{
      STRING_FIELD("data", data),
      STRING_FIELD("graph", graph),
      STRING_FIELD("out", out),
      {"split",
       {[](RunConfig& c, std::string_view v) { c.split = parse_split_scheme(v); },
        [](const RunConfig& c) { return to_string(c.split); }}},
      SIZE_FIELD("seq_len", model.seq_len),
      SIZE_FIELD("label_len", model.label_len),
      SIZE_FIELD("pred_len", model.pred_len),
      SIZE_FIELD("d_model", model.d_model),
      SIZE_FIELD("n_heads", model.n_heads),
      SIZE_FIELD("d_k", model.d_k),
      SIZE_FIELD("d_v", model.d_v),
      SIZE_FIELD("e_layers", model.enc_layers),
      SIZE_FIELD("d_layers", model.dec_layers),
      SIZE_FIELD("d_ff", model.d_ff),
      DOUBLE_FIELD("dropout", model.dropout),
      SIZE_FIELD("kernel_width", model.kernel_width),
      BOOL_FIELD("use_kge", model.use_kge),
      {"kge_reduce",
       {[](RunConfig& c, std::string_view v) { c.model.kge_reduce = parse_kge_reduce(v); },
        [](const RunConfig& c) { return std::string(to_string(c.model.kge_reduce)); }}},
      DOUBLE_FIELD("learning_rate", train.learning_rate),
      SIZE_FIELD("batch_size", train.batch_size),
      SIZE_FIELD("max_epochs", train.max_epochs),
      SIZE_FIELD("patience", train.patience),
      BOOL_FIELD("lr_decay", train.lr_decay),
      DOUBLE_FIELD("grad_clip", train.grad_clip_norm),
      SIZE_FIELD("steps_per_epoch", train.steps_per_epoch),
      SIZE_FIELD("max_steps", train.max_steps),
      {"seed",
       {[](RunConfig& c, std::string_view v) { c.train.seed = to_u64("seed", v); },
        [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
      {"loss",
       {[](RunConfig& c, std::string_view v) {
          if (v == "mean") c.train.loss = LossReduction::mean;
          else if (v == "sum") c.train.loss = LossReduction::sum;
          else bad_value("loss", v, "mean or sum");
        },
        [](const RunConfig& c) { return std::string(c.train.loss == LossReduction::mean ? "mean" : "sum"); }}},
      {"seeds",
       {[](RunConfig& c, std::string_view v) { c.seeds = parse_seed_list(v); },
        [](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
          return s;
        }}},
      SIZE_FIELD("jobs", jobs),
      BOOL_FIELD("placebo", placebo),
      {"synth_generator",
       {[](RunConfig& c, std::string_view v) { c.synth_generator = parse_generator(v); },
        [](const RunConfig& c) { return to_string(c.synth_generator); }}},
      SIZE_FIELD("synth_channels", synth_channels),
      SIZE_FIELD("synth_length", synth_length),
      DOUBLE_FIELD("synth_noise", synth_noise),
      DOUBLE_FIELD("synth_self_weight", synth_self_weight),
      DOUBLE_FIELD("synth_edge_weight", synth_edge_weight),
      DOUBLE_FIELD("synth_max_radius", synth_max_radius),
      {"synth_seed",
       {[](RunConfig& c, std::string_view v) { c.synth_seed = to_u64("synth_seed", v); },
        [](const RunConfig& c) { return std::to_string(c.synth_seed); }}},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

std::string normalize_key(std::string_view key) {
  std::string k(trim(key));
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, field] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

bool is_hash_excluded_key(std::string_view key) {
  return key == "use_kge" || key == "graph" || key == "out" || key == "jobs";
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  text = trim(text);
  if (text.empty() || text == "[]") return seeds;
  if (text.front() == '[' && text.back() == ']') text = text.substr(1, text.size() - 2);
  while (!text.empty()) {
    const std::size_t comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    const std::size_t dots = item.find("..");
    if (dots != std::string_view::npos) {
      const std::uint64_t lo = to_u64("seeds", trim(item.substr(0, dots)));
      const std::uint64_t hi = to_u64("seeds", trim(item.substr(dots + 2)));
      if (hi < lo) bad_value("seeds", item, "ascending range a..b");
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else if (!item.empty()) {
      seeds.push_back(to_u64("seeds", item));
    }
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return seeds;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string k = normalize_key(key);
  const auto it = fields().find(k);
  if (it == fields().end()) fail(ErrorKind::config, "unknown config key '" + k + "'");
  it->second.set(*this, trim(value));
}

std::string RunConfig::get(std::string_view key) const {
  const std::string k = normalize_key(key);
  const auto it = fields().find(k);
  if (it == fields().end()) fail(ErrorKind::config, "unknown config key '" + k + "'");
  return it->second.get(*this);
}

void RunConfig::merge_text(std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string_view::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::config, "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const Error& e) {
      fail(e.kind(), "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str());
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(*this));
  return out;
}

std::string RunConfig::canonical() const {
  std::string s;
  for (const auto& [k, v] : entries()) s += k + " = " + v + "\n";
  return s;
}

std::string RunConfig::hash() const {
  std::string s;
  for (const auto& [k, v] : entries())
    if (!is_hash_excluded_key(k)) s += k + " = " + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
  return buf;
}

void RunConfig::validate() const {
  if (model.pred_len == 0) fail(ErrorKind::config, "pred_len must be a positive integer");
  ModelConfig m = model;
  m.graph_nodes = 0;
  m.validate();
  train.validate();
  if (model.use_kge && graph.empty() && !synthetic()) {
    fail(ErrorKind::config, "use_kge = true requires a graph file (--graph)");
  }
  if (jobs == 0) fail(ErrorKind::config, "jobs must be positive");
  if (synth_noise < 0.0) fail(ErrorKind::config, "synth_noise must be non-negative");
  if (synth_channels == 0 || synth_length == 0) fail(ErrorKind::config, "synthetic channels and length must be positive");
  if (!(synth_max_radius > 0.0 && synth_max_radius < 1.0)) {
    fail(ErrorKind::config, "synth_max_radius must lie in (0, 1)");
  }
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec spec;
  spec.channels = synth_channels;
  spec.length = synth_length;
  spec.noise_std = synth_noise;
  spec.generator = synth_generator;
  spec.seed = synth_seed;
  return spec;
}

}  // namespace kgeformer
