// Shared fixtures and reference implementations for the test binaries.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "kgeformer/data.hpp"
#include "kgeformer/experiment.hpp"
#include "kgeformer/knowledge_graph.hpp"
#include "kgeformer/rng.hpp"
#include "kgeformer/synthetic.hpp"
#include "kgeformer/tensor.hpp"
#include "kgeformer/transformer.hpp"

namespace testing {

using namespace kgeformer;

inline Buffer<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Buffer<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, bool param = false) {
  const auto vals = random_values(shape_size(shape), seed);
  Buffer<T> data(vals.begin(), vals.end());
  return param ? Tensor<T>::parameter(std::move(shape), std::move(data)) : Tensor<T>::from(std::move(shape), std::move(data));
}

// Naive triple loop, [m,k] x [k,n].
inline std::vector<double> naive_matmul(std::span<const double> a, std::span<const double> b, std::size_t m,
                                        std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

inline std::size_t enumerate_windows(std::size_t t, std::size_t l, std::size_t h) {
  std::size_t count = 0;
  for (std::size_t s = 0; s + l + h <= t; ++s) ++count;
  return count;
}

inline AdjacencyMatrix adjacency_from(std::size_t n, std::vector<std::uint8_t> values) {
  AdjacencyMatrix a;
  a.size = n;
  a.values = std::move(values);
  for (std::size_t i = 0; i < n; ++i) a.node_order.push_back("x" + std::to_string(i));
  return a;
}

inline AdjacencyMatrix zero_adjacency(std::size_t n) { return adjacency_from(n, std::vector<std::uint8_t>(n * n, 0)); }

inline RawSeries sine_series(std::size_t channels, std::size_t length, double noise, std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.generator = Generator::coupled_sines;
  spec.channels = channels;
  spec.length = length;
  spec.noise_std = noise;
  spec.seed = seed;
  return generate(spec);
}

// Batch of `count` consecutive windows taken from the start of the series.
template <typename T>
Batch<T> sample_batch(const RawSeries& raw, WindowShape shape, std::size_t count, std::size_t stride = 1) {
  const auto scaler = StandardScaler::fit(raw, raw.rows());
  auto series = std::make_shared<const PreparedSeries>(prepare(raw, scaler));
  WindowDataset windows(series, Partition{0, raw.rows()}, shape);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < count; ++i) idx.push_back(i * stride);
  return make_batch<T>(windows, idx);
}

inline ModelConfig micro_config(bool use_kge) {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.d_ff = 16;
  c.dropout = 0.0;
  c.seq_len = 8;
  c.label_len = 4;
  c.pred_len = 4;
  c.channels = 3;
  c.graph_nodes = 3;
  c.use_kge = use_kge;
  return c;
}

inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("kgeformer_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

template <typename T>
bool all_zero(const Tensor<T>& t) {
  for (T v : t.data())
    if (v != T(0)) return false;
  return true;
}

template <typename T>
bool bit_equal(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace testing
