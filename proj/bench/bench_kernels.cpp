// Serial-vs-OpenMP comparison for the two hot kernels: forest fitting and
// the Monte Carlo replication loop.  Both paths produce identical results;
// the benchmark measures the speedup only.

#include <benchmark/benchmark.h>

#include "cashbench/forest.hpp"
#include "cashbench/rng.hpp"
#include "cashbench/simlab.hpp"

namespace {

using namespace cashbench;

ResidualizedData make_forest_data(long n, int m) {
  Philox rng(7, 1);
  ResidualizedData d;
  d.outcome_res.resize(n);
  d.treatment_res.resize(n);
  d.treatment_binary.resize(n);
  d.weights = Eigen::VectorXd::Ones(n);
  d.moderators.resize(n, m);
  d.moderator_names.resize(m, "x");
  for (long i = 0; i < n; ++i) {
    double t = i % 2 ? 1.0 : 0.0;
    d.treatment_binary[i] = t;
    d.treatment_res[i] = t - 0.5;
    for (int j = 0; j < m; ++j) d.moderators(i, j) = rng.normal();
    double tau = d.moderators(i, 0) > 0 ? 0.8 : 0.2;
    d.outcome_res[i] = d.treatment_res[i] * tau + rng.normal(0.0, 0.5);
  }
  return d;
}

void bm_forest(benchmark::State& state, ExecMode mode) {
  ResidualizedData data = make_forest_data(1000, 8);
  ForestConfig config;
  config.n_trees = 100;
  config.seed = 99;
  config.mode = mode;
  for (auto _ : state) {
    CateModel model = fit_forest(data, config);
    benchmark::DoNotOptimize(model.trees.size());
  }
}

DgpSpec mc_spec() {
  DgpSpec spec = DgpSpec::small(6, 8, 4);
  OutcomeDgp outcome;
  outcome.name = "y";
  outcome.effect.kind = EffectSpec::Kind::Constant;
  outcome.effect.arm_effect = {0, 0.2, 0.2, 0.2, 0.2, 0.4};
  spec.outcomes.push_back(outcome);
  spec.attrition_enabled = false;
  return spec;
}

void bm_monte_carlo(benchmark::State& state, ExecMode mode) {
  DgpSpec spec = mc_spec();
  EstimatorDescriptor est;
  est.kind = EstimatorDescriptor::Kind::Itt;
  est.outcome.name = "y";
  est.target_coefficient = kGdLarge;
  est.true_value = 0.4;
  McOptions options;
  options.mode = mode;
  for (auto _ : state) {
    McReport report = monte_carlo(spec, est, 40, 11, options);
    benchmark::DoNotOptimize(report.mean_estimate);
  }
}

}  // namespace

BENCHMARK_CAPTURE(bm_forest, serial, cashbench::ExecMode::Serial)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_forest, openmp, cashbench::ExecMode::Parallel)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_monte_carlo, serial, cashbench::ExecMode::Serial)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_monte_carlo, openmp, cashbench::ExecMode::Parallel)
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
