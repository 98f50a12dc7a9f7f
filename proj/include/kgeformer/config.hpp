#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgeformer/data.hpp"
#include "kgeformer/synthetic.hpp"
#include "kgeformer/training.hpp"
#include "kgeformer/transformer.hpp"

namespace kgeformer {

// Everything one run needs. Model channels, frequency and graph size are not
// keys: they come from the dataset and graph files.
struct RunConfig {
  std::string data;  // CSV path, or "synthetic" for compare/train on generated data
  std::string graph;
  std::string out = "runs/kgeformer";
  SplitScheme split = SplitScheme::automatic;
  ModelConfig model;
  TrainConfig train;

  // compare
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  bool placebo = true;

  // synthetic data
  Generator synth_generator = Generator::var1;
  std::size_t synth_channels = 7;
  std::size_t synth_length = 8000;
  double synth_noise = 1.0;
  double synth_self_weight = 0.5;
  double synth_edge_weight = 0.4;
  double synth_max_radius = 0.9;
  std::uint64_t synth_seed = 0;

  // Unknown keys and unparsable values raise config errors.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  // `key = value` lines; '#' starts a comment.
  void merge_text(std::string_view text);
  void merge_file(const std::string& path);

  // Sorted key/value pairs covering every key.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string canonical() const;
  // FNV-1a over the canonical form minus the per-arm and output keys
  // (use_kge, graph, out, jobs), so both arms of a comparison share it.
  std::string hash() const;
  void validate() const;

  bool synthetic() const { return data == "synthetic"; }
  SyntheticSpec synthetic_spec() const;
};

const std::vector<std::string>& run_config_keys();
bool is_hash_excluded_key(std::string_view key);
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace kgeformer
