#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kgeformer/data.hpp"
#include "kgeformer/parameters.hpp"
#include "kgeformer/transformer.hpp"

namespace kgeformer {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t patience = 3;
  bool lr_decay = true;  // halve after every epoch
  std::uint64_t seed = 0;
  double grad_clip_norm = 5.0;  // 0 disables clipping
  std::size_t steps_per_epoch = 0;  // 0: one pass over the training windows
  std::size_t max_steps = 0;  // 0: unbounded
  // mean: average over all H*M entries. sum: (1/M) * sum of per-channel
  // squared norms, averaged over the batch.
  LossReduction loss = LossReduction::mean;

  void validate() const;
};

double mse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);

template <typename T>
struct AdamState {
  std::vector<Buffer<T>> m, v;
  std::size_t step = 0;
};

// One bias-corrected adaptive-moment update over every parameter with a grad.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Rescales all grads so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm);

struct MetricsRecord {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t horizon = 0;
  std::string dataset;
  bool use_kge = false;
  std::uint64_t seed = 0;
  std::size_t windows = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // cumulative optimizer steps
  double learning_rate = 0.0;
  double train_mse = 0.0;
  double val_mse = 0.0;  // NaN without a validation set
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  std::size_t steps = 0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

template <typename T>
using PredictionSink = std::function<void(std::size_t window, std::span<const T> pred, std::span<const T> truth)>;

// Metrics over every window, in window order (eval mode).
template <typename T>
MetricsRecord evaluate(const Model<T>& model, const WindowDataset& windows, std::size_t batch_size,
                       const PredictionSink<T>& sink = {});

// Minibatch training with early stopping on validation MSE; the parameters of
// the best validation epoch are restored before returning. Without a
// validation set the final parameters are kept.
template <typename T>
TrainHistory train(Model<T>& model, const WindowDataset& train_windows, const WindowDataset* val_windows,
                   const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace kgeformer
