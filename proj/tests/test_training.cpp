#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "kgeformer/error.hpp"
#include "kgeformer/experiment.hpp"
#include "support.hpp"

using namespace kgeformer;
using namespace testing;

namespace {

WindowDataset windows_over(const RawSeries& raw, WindowShape shape, const StandardScaler& scaler) {
  auto series = std::make_shared<const PreparedSeries>(prepare(raw, scaler));
  return WindowDataset(series, Partition{0, raw.rows()}, shape);
}

RawSeries negated(RawSeries s) {
  for (double& v : s.values) v = -v;
  return s;
}

TrainConfig quick(std::size_t epochs, std::size_t patience, std::size_t steps = 6) {
  TrainConfig t;
  t.learning_rate = 3e-3;
  t.batch_size = 8;
  t.max_epochs = epochs;
  t.patience = patience;
  t.lr_decay = false;
  t.steps_per_epoch = steps;
  t.seed = 4;
  return t;
}

}  // namespace

TEST_SUITE("training_eval") {
  TEST_CASE("adam: first step is lr * g / (|g| + eps)") {
    ParameterSet<double> p(1);
    auto w = p.add_uniform("w", {6}, 1);
    const Buffer<double> before(w.data().begin(), w.data().end());
    w.node()->ensure_grad();
    const std::vector<double> g{0.5, -2.0, 1e-3, -7.0, 0.0, 3.0};
    std::copy(g.begin(), g.end(), w.mutable_grad().begin());
    AdamState<double> state;
    adam_step(p, state, 0.01);
    for (std::size_t i = 0; i < 6; ++i) {
      const double want = before[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
      CHECK(w.data()[i] == doctest::Approx(want).epsilon(1e-12));
    }
  }

  TEST_CASE("adam: zero gradient forever leaves parameters unchanged") {
    ParameterSet<double> p(2);
    auto w = p.add_uniform("w", {3, 3}, 3);
    const Buffer<double> before(w.data().begin(), w.data().end());
    AdamState<double> state;
    for (int i = 0; i < 50; ++i) {
      w.node()->ensure_grad();
      adam_step(p, state, 0.1);
    }
    CHECK(bit_equal<double>(w.data(), before));
  }

  TEST_CASE("gradient clipping") {
    ParameterSet<double> p(3);
    auto a = p.add_uniform("a", {2}, 1);
    auto b = p.add_uniform("b", {1}, 1);
    a.node()->ensure_grad();
    b.node()->ensure_grad();
    a.mutable_grad()[0] = 3;
    a.mutable_grad()[1] = 4;
    b.mutable_grad()[0] = 12;
    CHECK(clip_grad_norm(p, 5.0) == doctest::Approx(13.0));
    const double n = std::hypot(a.grad()[0], a.grad()[1], b.grad()[0]);
    CHECK(n == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(clip_grad_norm(p, 10.0) == doctest::Approx(5.0).epsilon(1e-6));
  }

  TEST_CASE("patience = 1 with worsening validation stops after two epochs") {
    // Validating on the negated series: learning the training data can only hurt.
    const auto cfg = micro_config(false);
    const auto raw = sine_series(3, 200, 0.0);
    const auto scaler = StandardScaler::fit(raw, raw.rows());
    const auto tr = windows_over(raw, cfg.window_shape(), scaler);
    const auto va = windows_over(negated(raw), cfg.window_shape(), scaler);
    Model<float> m(cfg, 2);
    auto t = quick(6, 1, 30);
    t.learning_rate = 1e-2;
    const auto h = train(m, tr, &va, t);
    REQUIRE(h.epochs.size() >= 2);
    CHECK(h.epochs[1].val_mse > h.epochs[0].val_mse);
    CHECK(h.epochs.size() == 2);
    CHECK(h.early_stopped);
    // stop rule: training ends exactly one epoch after the first non-improvement
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < h.epochs.size(); ++i) {
      if (h.epochs[i].val_mse >= best) {
        CHECK(i + 1 == h.epochs.size());
        break;
      }
      best = h.epochs[i].val_mse;
    }
  }

  TEST_CASE("best-epoch parameters are restored") {
    const auto cfg = micro_config(false);
    const auto raw = sine_series(3, 300, 0.3);
    const auto data = prepare_data(raw, cfg.window_shape(), SplitScheme::ratio);
    Model<float> m(cfg, 3);
    auto t = quick(5, 5, 4);
    t.learning_rate = 2e-2;
    const auto h = train(m, *data.train, &*data.val, t);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    for (const auto& e : h.epochs)
      if (e.val_mse < best) best = e.val_mse, best_epoch = e.epoch;
    CHECK(h.best_epoch == best_epoch);
    CHECK(h.best_val_mse == best);
    CHECK(evaluate(m, *data.val, t.batch_size).mse == best);
  }

  TEST_CASE("training is deterministic for a seed, and the seed matters") {
    auto cfg = micro_config(true);
    cfg.dropout = 0.1;
    const auto raw = sine_series(3, 300, 0.3);
    const auto data = prepare_data(raw, cfg.window_shape(), SplitScheme::ratio);
    auto run = [&](std::uint64_t seed) {
      Model<float> m(cfg, 5);
      m.set_adjacency(adjacency_from(3, {0, 1, 0, 0, 0, 1, 1, 0, 0}));
      auto t = quick(2, 2, 3);
      t.seed = seed;
      const auto h = train(m, *data.train, &*data.val, t);
      return std::make_pair(h.epochs.back().train_mse, m.parameters().snapshot());
    };
    const auto a = run(1), b = run(1), c = run(2);
    CHECK(a.first == b.first);
    CHECK(bit_equal<float>(a.second, b.second));
    CHECK_FALSE(bit_equal<float>(a.second, c.second));
  }

  TEST_CASE("learning rate halves per epoch; step caps are honoured") {
    const auto cfg = micro_config(false);
    const auto raw = sine_series(3, 200, 0.1);
    const auto data = prepare_data(raw, cfg.window_shape(), SplitScheme::ratio);
    Model<float> m(cfg, 6);
    auto t = quick(3, 3, 2);
    t.lr_decay = true;
    t.learning_rate = 1e-3;
    const auto h = train(m, *data.train, &*data.val, t);
    REQUIRE(h.epochs.size() == 3);
    CHECK(h.epochs[0].learning_rate == 1e-3);
    CHECK(h.epochs[1].learning_rate == 5e-4);
    CHECK(h.epochs[2].learning_rate == 2.5e-4);
    CHECK(h.steps == 6);
    Model<float> capped(cfg, 6);
    t.max_steps = 3;
    CHECK(train(capped, *data.train, &*data.val, t).steps == 3);
  }

  TEST_CASE("zero predictor on standardized data scores about the variance") {
    SyntheticSpec spec;
    spec.channels = 3;
    spec.length = 4000;
    spec.coupling.assign(9, 0.0);
    spec.seed = 12;
    const auto raw = generate(spec);
    const auto cfg = micro_config(false);
    Model<float> m(cfg, 7);
    for (const char* name : {"head.w", "head.b"})
      for (float& x : m.parameters().find(name)->mutable_data()) x = 0.0f;
    const auto w = windows_over(raw, cfg.window_shape(), StandardScaler::fit(raw, raw.rows()));
    const auto r = evaluate(m, w, 64);
    CHECK(r.mse == doctest::Approx(1.0).epsilon(0.05));
    CHECK(r.windows == w.size());
    const auto again = evaluate(m, w, 17);
    CHECK(again.mse == doctest::Approx(r.mse).epsilon(1e-6));
    CHECK(evaluate(m, w, 64).mse == r.mse);
  }

  TEST_CASE("evaluate streams every window's prediction in order") {
    const auto cfg = micro_config(false);
    const auto raw = sine_series(3, 60, 0.1);
    const auto w = windows_over(raw, cfg.window_shape(), StandardScaler::fit(raw, raw.rows()));
    Model<float> m(cfg, 8);
    std::size_t next = 0;
    double sq = 0;
    std::size_t n = 0;
    const auto r = evaluate<float>(m, w, 5, [&](std::size_t i, std::span<const float> p, std::span<const float> t) {
      CHECK(i == next++);
      CHECK(p.size() == cfg.pred_len * cfg.channels);
      for (std::size_t k = 0; k < p.size(); ++k, ++n) sq += (double(p[k]) - t[k]) * (double(p[k]) - t[k]);
    });
    CHECK(next == w.size());
    CHECK(r.mse == doctest::Approx(sq / n).epsilon(1e-6));
  }

  TEST_CASE("metric contracts") {
    const std::vector<double> x{1, 2, 3};
    CHECK(mse(x, x) == 0.0);
    CHECK(mae(x, x) == 0.0);
    CHECK_THROWS_AS(mse(std::vector<double>{}, std::vector<double>{}), Error);
    CHECK_THROWS_AS(mae(x, std::vector<double>{1.0}), Error);
    TrainConfig t;
    t.patience = 20;
    CHECK_THROWS_AS(t.validate(), Error);
    t = TrainConfig{};
    t.learning_rate = 0;
    CHECK_THROWS_AS(t.validate(), Error);
  }

  TEST_CASE("run_experiment refuses a graph-less KGE model and a channel mismatch") {
    const auto raw = sine_series(3, 200, 0.1);
    auto cfg = micro_config(true);
    const auto data = prepare_data(raw, cfg.window_shape(), SplitScheme::ratio);
    CHECK_THROWS_AS(run_experiment(data, cfg, quick(1, 1, 1), std::nullopt), Error);
    cfg.use_kge = false;
    cfg.channels = 4;
    CHECK_THROWS_AS(run_experiment(data, cfg, quick(1, 1, 1), std::nullopt), Error);
  }

  TEST_CASE("divergence is reported") {
    const auto cfg = micro_config(false);
    auto raw = sine_series(3, 200, 0.1);
    const auto scaler = StandardScaler::fit(raw, raw.rows());
    raw.values[150] = std::numeric_limits<double>::quiet_NaN();
    const auto w = windows_over(raw, cfg.window_shape(), scaler);
    Model<float> m(cfg, 1);
    try {
      train(m, w, nullptr, quick(1, 1, 100));
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::divergence);
    }
  }
}
