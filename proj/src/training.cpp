#include "kgeformer/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "kgeformer/rng.hpp"

namespace kgeformer {

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::config, m); };
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (batch_size == 0) bad("batch_size must be positive");
  if (max_epochs == 0) bad("max_epochs must be positive");
  if (patience == 0) bad("patience must be positive");
  if (patience > max_epochs) bad("patience cannot exceed max_epochs");
  if (grad_clip_norm < 0.0) bad("grad_clip_norm must be non-negative");
}

double mse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) fail(ErrorKind::shape, "mse needs equal, non-empty inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return total / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) fail(ErrorKind::shape, "mae needs equal, non-empty inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - truth[i]);
  return total / static_cast<double>(pred.size());
}

template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr, double beta1, double beta2, double eps) {
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.second.size(), T(0));
      state.v.emplace_back(e.second.size(), T(0));
    }
  }
  if (state.m.size() != entries.size()) fail(ErrorKind::contract, "optimizer state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor<T>& param = entries[p].second;
    if (!param.has_grad()) continue;
    auto value = param.mutable_data();
    const auto grad = param.grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * g;
      const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      value[i] = static_cast<T>(value[i] - lr * m_hat / (std::sqrt(v_hat) + eps));
    }
  }
}

template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries())
    for (T g : e.second.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / (norm + 1e-6));
    for (auto& e : params.entries())
      for (T& g : e.second.mutable_grad()) g *= factor;
  }
  return norm;
}

template <typename T>
MetricsRecord evaluate(const Model<T>& model, const WindowDataset& windows, std::size_t batch_size,
                       const PredictionSink<T>& sink) {
  if (windows.size() == 0) fail(ErrorKind::config, "cannot evaluate on an empty window set");
  if (batch_size == 0) fail(ErrorKind::config, "batch_size must be positive");
  const std::size_t per_window = model.config().pred_len * model.config().channels;
  double sse = 0.0, sae = 0.0;
  std::vector<std::size_t> indices;
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t end = std::min(windows.size(), begin + batch_size);
    indices.resize(end - begin);
    std::iota(indices.begin(), indices.end(), begin);
    const Batch<T> batch = make_batch<T>(windows, indices);
    const Tensor<T> pred = model.forward(batch, false);
    const auto p = pred.data();
    const auto y = batch.y.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = static_cast<double>(p[i]) - static_cast<double>(y[i]);
      sse += d * d;
      sae += std::abs(d);
    }
    if (sink) {
      for (std::size_t b = 0; b < indices.size(); ++b) {
        sink(indices[b], p.subspan(b * per_window, per_window), y.subspan(b * per_window, per_window));
      }
    }
  }
  MetricsRecord r;
  const double n = static_cast<double>(windows.size() * per_window);
  r.mse = sse / n;
  r.mae = sae / n;
  r.horizon = model.config().pred_len;
  r.dataset = windows.series().name;
  r.use_kge = model.config().use_kge;
  r.windows = windows.size();
  return r;
}

template <typename T>
TrainHistory train(Model<T>& model, const WindowDataset& train_windows, const WindowDataset* val_windows,
                   const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_windows.size() == 0) fail(ErrorKind::config, "no training windows");
  ParameterSet<T>& params = model.parameters();
  AdamState<T> adam;
  TrainHistory history;
  history.best_val_mse = std::numeric_limits<double>::infinity();
  Buffer<T> best_snapshot;
  std::size_t bad_epochs = 0;
  const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");
  const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");

  std::vector<std::size_t> order(train_windows.size());
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = config.lr_decay ? config.learning_rate * std::pow(0.5, static_cast<double>(epoch - 1))
                                      : config.learning_rate;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(shuffle_seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::size_t batches = (order.size() + config.batch_size - 1) / config.batch_size;
    if (config.steps_per_epoch > 0) batches = std::min(batches, config.steps_per_epoch);
    double loss_total = 0.0;
    std::size_t loss_count = 0;
    bool budget_exhausted = false;
    for (std::size_t b = 0; b < batches; ++b) {
      if (config.max_steps > 0 && history.steps >= config.max_steps) {
        budget_exhausted = true;
        break;
      }
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const Batch<T> batch =
          make_batch<T>(train_windows, std::span<const std::size_t>(order.data() + begin, end - begin));

      Tape<T> tape;
      double loss_value = 0.0;
      {
        typename Tape<T>::Recording recording(tape);
        const Tensor<T> pred = model.forward(batch, true, derive_seed(dropout_seed, history.steps));
        Tensor<T> loss = mse_loss(pred, batch.y, config.loss);
        if (config.loss == LossReduction::sum) {
          loss = scale(loss, T(1) / static_cast<T>(batch.size * model.config().channels));
        }
        loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
          fail(ErrorKind::divergence, "non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                          std::to_string(history.steps + 1));
        }
        backward(loss, tape);
      }
      tape.clear();
      clip_grad_norm(params, config.grad_clip_norm);
      adam_step(params, adam, lr);
      params.zero_grad();
      ++history.steps;
      loss_total += loss_value;
      ++loss_count;
    }
    if (loss_count == 0) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = history.steps;
    rec.learning_rate = lr;
    rec.train_mse = loss_total / static_cast<double>(loss_count);
    rec.val_mse = std::numeric_limits<double>::quiet_NaN();
    if (val_windows != nullptr) {
      rec.val_mse = evaluate(model, *val_windows, config.batch_size).mse;
      if (!std::isfinite(rec.val_mse)) fail(ErrorKind::divergence, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val_windows != nullptr) {
      if (rec.val_mse < history.best_val_mse) {
        history.best_val_mse = rec.val_mse;
        history.best_epoch = epoch;
        best_snapshot = params.snapshot();
        bad_epochs = 0;
      } else if (++bad_epochs >= config.patience) {
        history.early_stopped = true;
        break;
      }
    } else {
      history.best_epoch = epoch;
    }
    if (budget_exhausted || (config.max_steps > 0 && history.steps >= config.max_steps)) break;
  }
  if (!best_snapshot.empty()) params.restore(best_snapshot);
  return history;
}

#define KGEFORMER_INSTANTIATE(T)                                                                          \
  template struct AdamState<T>;                                                                           \
  template void adam_step(ParameterSet<T>&, AdamState<T>&, double, double, double, double);               \
  template double clip_grad_norm(ParameterSet<T>&, double);                                               \
  template MetricsRecord evaluate(const Model<T>&, const WindowDataset&, std::size_t,                     \
                                  const PredictionSink<T>&);                                              \
  template TrainHistory train(Model<T>&, const WindowDataset&, const WindowDataset*, const TrainConfig&,  \
                              const EpochCallback&);

KGEFORMER_INSTANTIATE(float)
KGEFORMER_INSTANTIATE(double)

#undef KGEFORMER_INSTANTIATE

}  // namespace kgeformer
