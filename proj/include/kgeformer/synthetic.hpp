#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "kgeformer/data.hpp"
#include "kgeformer/experiment.hpp"
#include "kgeformer/knowledge_graph.hpp"
#include "kgeformer/training.hpp"
#include "kgeformer/transformer.hpp"

namespace kgeformer {

enum class Generator { var1, coupled_sines };
Generator parse_generator(std::string_view text);
std::string to_string(Generator generator);

struct SyntheticSpec {
  std::size_t channels = 7;
  std::size_t length = 8000;
  // channels x channels, row-major; coupling[i * M + j] is the weight of
  // channel j's lagged value (var1) or sinusoid (coupled_sines) in channel i.
  std::vector<double> coupling;
  double noise_std = 1.0;
  Generator generator = Generator::var1;
  std::uint64_t seed = 0;
  std::size_t burn_in = 100;
  // coupled_sines only; empty -> defaults from default_frequencies/phases.
  std::vector<double> frequencies;  // radians per step
  std::vector<double> phases;
  std::int64_t start = 1467331200;  // 2016-07-01 00:00, hourly steps
};

// Largest |eigenvalue| of a square row-major matrix.
double spectral_radius(const std::vector<double>& matrix, std::size_t n);

// x_t = C x_{t-1} + e_t, e_t ~ N(0, noise_std^2); the burn-in is discarded.
RawSeries generate_var1(const SyntheticSpec& spec);
// x_i(t) = sin(w_i t + phi_i) + sum_j C[i, j] sin(w_j t) + noise.
RawSeries generate_coupled_sines(const SyntheticSpec& spec);
RawSeries generate(const SyntheticSpec& spec);

std::vector<double> default_frequencies(std::size_t channels);
std::vector<std::string> synthetic_columns(std::size_t channels);

// Coupling supported on the graph: an edge i -> j lets channel i drive channel
// j, so C[j, i] != 0. Diagonal entries carry `self_weight`; edge weights are
// drawn with random sign and magnitude in [0.5, 1] * edge_weight. The result is
// rescaled so its spectral radius does not exceed `max_radius`.
std::vector<double> coupling_on_graph(const AdjacencyMatrix& graph, double self_weight, double edge_weight,
                                      double max_radius, std::uint64_t seed);

// Default "true" graph for synthetic channels x0..x{M-1}: a directed chain
// plus a few skip links.
KnowledgeGraphSpec default_synthetic_graph(std::size_t channels);

struct AbRow {
  std::string arm;
  std::uint64_t seed = 0;
  MetricsRecord metrics;
  std::size_t parameter_count = 0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

struct AbArmSummary {
  std::string arm;
  std::size_t runs = 0;
  double mean_mse = 0.0, std_mse = 0.0;
  double mean_mae = 0.0, std_mae = 0.0;
  // Paired against the no-KGE arm, per seed: mean and standard error of
  // (arm MSE - no-KGE MSE).
  double paired_diff_mean = 0.0;
  double paired_diff_se = 0.0;
  std::size_t parameter_count = 0;
};

struct AbReport {
  std::string config_hash;
  std::vector<AbRow> rows;  // arm-major, then seed order
  std::vector<AbArmSummary> arms;
  std::size_t kge_parameter_delta = 0;
  std::size_t expected_kge_parameter_delta = 0;

  const AbArmSummary& arm(std::string_view name) const;
};

struct AbOptions {
  bool include_placebo = true;
  std::size_t jobs = 1;
  std::string config_hash;
  std::function<void(const AbRow&)> on_row;  // called as each run finishes, serialized
};

inline constexpr std::string_view kArmNoKge = "no_kge";
inline constexpr std::string_view kArmKge = "kge";
inline constexpr std::string_view kArmPlacebo = "kge_placebo";

// Trains every arm for every seed on identical data, batches and schedules;
// only use_kge and the adjacency differ between arms. The placebo arm uses a
// random graph with the true graph's edge count, re-drawn per seed.
AbReport run_ab(const PreparedData& data, const AdjacencyMatrix& true_graph, const ModelConfig& model_config,
                const TrainConfig& train_config, const std::vector<std::uint64_t>& seeds, const AbOptions& options = {});

}  // namespace kgeformer
