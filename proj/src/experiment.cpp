#include "kgeformer/experiment.hpp"

namespace kgeformer {

PreparedData prepare_data(const RawSeries& raw, WindowShape shape, SplitScheme scheme) {
  const SplitScheme resolved = resolve_split_scheme(scheme, raw.name);
  const SplitBorders borders = split(raw.rows(), raw.freq, resolved, shape.lookback, shape.horizon);
  return prepare_data(raw, shape, resolved, StandardScaler::fit(raw, borders.train.end));
}

PreparedData prepare_data(const RawSeries& raw, WindowShape shape, SplitScheme scheme, const StandardScaler& scaler) {
  PreparedData d;
  d.dataset = raw.name;
  d.scheme = resolve_split_scheme(scheme, raw.name);
  d.borders = split(raw.rows(), raw.freq, d.scheme, shape.lookback, shape.horizon);
  d.scaler = scaler;
  d.series = std::make_shared<const PreparedSeries>(prepare(raw, scaler));
  d.train.emplace(d.series, d.borders.train, shape);
  d.val.emplace(d.series, d.borders.val, shape);
  d.test.emplace(d.series, d.borders.test, shape);
  return d;
}

RunResult run_experiment(const PreparedData& data, const ModelConfig& model_config, const TrainConfig& train_config,
                         const std::optional<AdjacencyMatrix>& adjacency, const EpochCallback& on_epoch) {
  if (model_config.channels != data.series->channels) {
    fail(ErrorKind::validation, "model expects M=" + std::to_string(model_config.channels) + " channels, dataset has " +
                                    std::to_string(data.series->channels));
  }
  if (model_config.freq != data.series->freq) {
    fail(ErrorKind::validation, "model was configured for " + to_string(model_config.freq) + " data, dataset is " +
                                    to_string(data.series->freq));
  }
  RunResult r;
  r.model = std::make_unique<Model<float>>(model_config, train_config.seed);
  if (model_config.use_kge) {
    if (!adjacency) fail(ErrorKind::config, "use_kge requires a knowledge graph");
    r.model->set_adjacency(*adjacency);
  }
  r.history = train(*r.model, *data.train, &*data.val, train_config, on_epoch);
  r.test = evaluate(*r.model, *data.test, train_config.batch_size);
  r.test.seed = train_config.seed;
  return r;
}

}  // namespace kgeformer
