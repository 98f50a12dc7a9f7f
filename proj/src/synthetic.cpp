#include "kgeformer/synthetic.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include "kgeformer/rng.hpp"

namespace kgeformer {

Generator parse_generator(std::string_view text) {
  if (text == "var1") return Generator::var1;
  if (text == "coupled_sines") return Generator::coupled_sines;
  fail(ErrorKind::config, "unknown generator '" + std::string(text) + "' (var1, coupled_sines)");
}

std::string to_string(Generator generator) { return generator == Generator::var1 ? "var1" : "coupled_sines"; }

double spectral_radius(const std::vector<double>& matrix, std::size_t n) {
  if (matrix.size() != n * n) fail(ErrorKind::shape, "spectral_radius: matrix is not " + std::to_string(n) + "x" + std::to_string(n));
  if (n == 0) return 0.0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = matrix[i * n + j];
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

std::vector<std::string> synthetic_columns(std::size_t channels) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < channels; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<double> default_frequencies(std::size_t channels) {
  std::vector<double> w;
  for (std::size_t i = 0; i < channels; ++i) w.push_back(2.0 * std::numbers::pi / (12.0 + 6.0 * static_cast<double>(i)));
  return w;
}

namespace {

void check_common(const SyntheticSpec& spec) {
  if (spec.channels == 0 || spec.length == 0) fail(ErrorKind::config, "synthetic series needs M > 0 and T > 0");
  if (spec.noise_std < 0.0) fail(ErrorKind::config, "noise_std must be non-negative");
  if (!spec.coupling.empty() && spec.coupling.size() != spec.channels * spec.channels) {
    fail(ErrorKind::shape, "coupling must be M x M = " + std::to_string(spec.channels * spec.channels) + " values");
  }
}

RawSeries empty_series(const SyntheticSpec& spec) {
  RawSeries s;
  s.name = "synthetic_" + to_string(spec.generator);
  s.freq = Frequency::hourly;
  s.columns = synthetic_columns(spec.channels);
  s.timestamps.reserve(spec.length);
  for (std::size_t t = 0; t < spec.length; ++t) {
    s.timestamps.push_back(spec.start + static_cast<std::int64_t>(t) * frequency_seconds(Frequency::hourly));
  }
  s.values.reserve(spec.length * spec.channels);
  return s;
}

}  // namespace

RawSeries generate_var1(const SyntheticSpec& spec) {
  check_common(spec);
  const std::size_t m = spec.channels;
  const std::vector<double> c = spec.coupling.empty() ? std::vector<double>(m * m, 0.0) : spec.coupling;
  const double radius = spectral_radius(c, m);
  if (radius >= 1.0) {
    fail(ErrorKind::config, "VAR(1) coupling has spectral radius " + std::to_string(radius) + " >= 1 (non-stationary)");
  }
  RawSeries s = empty_series(spec);
  Rng rng(derive_seed(spec.seed, "var1"));
  std::vector<double> x(m, 0.0), next(m);
  for (std::size_t t = 0; t < spec.burn_in + spec.length; ++t) {
    for (std::size_t i = 0; i < m; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < m; ++j) v += c[i * m + j] * x[j];
      next[i] = v + spec.noise_std * rng.normal();
    }
    x.swap(next);
    if (t >= spec.burn_in) s.values.insert(s.values.end(), x.begin(), x.end());
  }
  return s;
}

RawSeries generate_coupled_sines(const SyntheticSpec& spec) {
  check_common(spec);
  const std::size_t m = spec.channels;
  const std::vector<double> w = spec.frequencies.empty() ? default_frequencies(m) : spec.frequencies;
  std::vector<double> phi = spec.phases;
  if (phi.empty()) {
    Rng prng(derive_seed(spec.seed, "phase"));
    for (std::size_t i = 0; i < m; ++i) phi.push_back(prng.uniform(0.0, 2.0 * std::numbers::pi));
  }
  if (w.size() != m || phi.size() != m) fail(ErrorKind::shape, "frequencies and phases need one entry per channel");
  RawSeries s = empty_series(spec);
  Rng rng(derive_seed(spec.seed, "noise"));
  for (std::size_t t = 0; t < spec.length; ++t) {
    const double tt = static_cast<double>(t);
    for (std::size_t i = 0; i < m; ++i) {
      double v = std::sin(w[i] * tt + phi[i]);
      if (!spec.coupling.empty()) {
        for (std::size_t j = 0; j < m; ++j) v += spec.coupling[i * m + j] * std::sin(w[j] * tt);
      }
      if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
      s.values.push_back(v);
    }
  }
  return s;
}

RawSeries generate(const SyntheticSpec& spec) {
  return spec.generator == Generator::var1 ? generate_var1(spec) : generate_coupled_sines(spec);
}

std::vector<double> coupling_on_graph(const AdjacencyMatrix& graph, double self_weight, double edge_weight,
                                      double max_radius, std::uint64_t seed) {
  const std::size_t m = graph.size;
  std::vector<double> c(m * m, 0.0);
  Rng rng(derive_seed(seed, "coupling"));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j || !graph.at(i, j)) continue;
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      c[j * m + i] = sign * edge_weight * rng.uniform(0.5, 1.0);
    }
    c[i * m + i] = self_weight;
  }
  const double radius = spectral_radius(c, m);
  if (radius > max_radius && radius > 0.0) {
    for (double& v : c) v *= max_radius / radius;
  }
  return c;
}

KnowledgeGraphSpec default_synthetic_graph(std::size_t channels) {
  KnowledgeGraphSpec g;
  g.nodes = synthetic_columns(channels);
  for (std::size_t i = 0; i + 1 < channels; ++i) g.edges.emplace_back(g.nodes[i], g.nodes[i + 1]);
  for (std::size_t i = 0; i + 3 < channels; i += 2) g.edges.emplace_back(g.nodes[i], g.nodes[i + 3]);
  return g;
}

const AbArmSummary& AbReport::arm(std::string_view name) const {
  for (const auto& a : arms)
    if (a.arm == name) return a;
  fail(ErrorKind::contract, "report has no arm '" + std::string(name) + "'");
}

namespace {

struct ArmSpec {
  std::string name;
  bool use_kge = false;
  bool placebo = false;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

AbReport run_ab(const PreparedData& data, const AdjacencyMatrix& true_graph, const ModelConfig& model_config,
                const TrainConfig& train_config, const std::vector<std::uint64_t>& seeds, const AbOptions& options) {
  if (seeds.empty()) fail(ErrorKind::config, "A/B comparison needs at least one seed");
  std::vector<ArmSpec> arms{{std::string(kArmNoKge), false, false}, {std::string(kArmKge), true, false}};
  if (options.include_placebo) arms.push_back({std::string(kArmPlacebo), true, true});

  struct Job {
    std::size_t arm = 0;
    std::size_t seed_index = 0;
  };
  std::vector<Job> jobs;
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({a, s});

  AbReport report;
  report.config_hash = options.config_hash;
  report.rows.resize(jobs.size());

  std::mutex row_mutex;
  auto run_job = [&](std::size_t index) {
    const Job& job = jobs[index];
    const ArmSpec& arm = arms[job.arm];
    ModelConfig mc = model_config;
    mc.use_kge = arm.use_kge;
    mc.graph_nodes = true_graph.size;
    TrainConfig tc = train_config;
    tc.seed = seeds[job.seed_index];
    std::optional<AdjacencyMatrix> adjacency;
    if (arm.use_kge) {
      adjacency = arm.placebo ? scrambled_adjacency(true_graph, derive_seed(tc.seed, "placebo")) : true_graph;
    }
    RunResult r = run_experiment(data, mc, tc, adjacency);
    AbRow& row = report.rows[index];
    row.arm = arm.name;
    row.seed = tc.seed;
    row.metrics = r.test;
    row.parameter_count = r.model->parameter_count();
    row.best_epoch = r.history.best_epoch;
    row.steps = r.history.steps;
    if (options.on_row) {
      std::lock_guard lock(row_mutex);
      options.on_row(row);
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.jobs, jobs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            run_job(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<double> baseline_mse;
  for (const AbRow& row : report.rows)
    if (row.arm == kArmNoKge) baseline_mse.push_back(row.metrics.mse);
  for (const ArmSpec& arm : arms) {
    AbArmSummary summary;
    summary.arm = arm.name;
    std::vector<double> mses, maes, diffs;
    for (const AbRow& row : report.rows) {
      if (row.arm != arm.name) continue;
      mses.push_back(row.metrics.mse);
      maes.push_back(row.metrics.mae);
      summary.parameter_count = row.parameter_count;
    }
    for (std::size_t s = 0; s < mses.size(); ++s) diffs.push_back(mses[s] - baseline_mse[s]);
    summary.runs = mses.size();
    summary.mean_mse = mean_of(mses);
    summary.std_mse = sample_std(mses);
    summary.mean_mae = mean_of(maes);
    summary.std_mae = sample_std(maes);
    summary.paired_diff_mean = mean_of(diffs);
    summary.paired_diff_se = sample_std(diffs) / std::sqrt(static_cast<double>(diffs.size()));
    report.arms.push_back(summary);
  }

  ModelConfig kge_config = model_config;
  kge_config.graph_nodes = true_graph.size;
  report.expected_kge_parameter_delta = kge_parameter_count(kge_config);
  report.kge_parameter_delta = report.arm(kArmKge).parameter_count - report.arm(kArmNoKge).parameter_count;
  if (report.kge_parameter_delta != report.expected_kge_parameter_delta) {
    fail(ErrorKind::contract, "KGE arm adds " + std::to_string(report.kge_parameter_delta) +
                                  " parameters, expected V*D + (L + label_len + H)*D = " +
                                  std::to_string(report.expected_kge_parameter_delta));
  }
  return report;
}

}  // namespace kgeformer
