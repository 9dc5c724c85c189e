// Microbenchmarks for the hot paths: trajectory sampling, TD iteration,
// noise-covariance assembly, finite-horizon covariance accumulation, and the
// half-space discrepancy estimator.

#include <benchmark/benchmark.h>

#include "mcuq/chain.hpp"
#include "mcuq/covariance.hpp"
#include "mcuq/harness.hpp"
#include "mcuq/metrics.hpp"
#include "mcuq/mrp.hpp"
#include "mcuq/rng.hpp"

namespace {

mcuq::MrpModel two_state_model() {
    mcuq::Matrix kernel(2, 2);
    kernel << 0.9, 0.1, 0.2, 0.8;
    const mcuq::ChainModel chain = mcuq::build_chain(kernel);
    const mcuq::Matrix features = mcuq::Matrix::Identity(2, 2);
    mcuq::Vector rewards(2);
    rewards << 1.0, 0.0;
    return mcuq::build_mrp(chain, features, rewards, 0.5);
}

mcuq::MrpModel random_model() {
    mcuq::RandomMrpSpec spec;
    spec.seed = 7;
    return mcuq::generate_random_mrp(spec);
}

void BM_trajectory(benchmark::State& state) {
    const mcuq::MrpModel model = random_model();
    const long length = state.range(0);
    uint64_t stream = 0;
    for (auto _ : state) {
        auto traj = mcuq::sample_trajectory(model.chain, length, 1, stream++);
        benchmark::DoNotOptimize(traj.states.data());
    }
    state.SetItemsProcessed(state.iterations() * length);
}
BENCHMARK(BM_trajectory)->Arg(100000);

void BM_td_run(benchmark::State& state) {
    const mcuq::MrpModel model = two_state_model();
    mcuq::TdConfig cfg;
    cfg.horizon = state.range(0);
    uint64_t stream = 0;
    for (auto _ : state) {
        auto res = mcuq::td_run(model, cfg, 1, stream++);
        benchmark::DoNotOptimize(res.theta_bar.data());
    }
    state.SetItemsProcessed(state.iterations() * cfg.horizon);
}
BENCHMARK(BM_td_run)->Arg(100000);

void BM_td_run_random50(benchmark::State& state) {
    const mcuq::MrpModel model = random_model();
    mcuq::TdConfig cfg;
    cfg.horizon = state.range(0);
    uint64_t stream = 0;
    for (auto _ : state) {
        auto res = mcuq::td_run(model, cfg, 1, stream++);
        benchmark::DoNotOptimize(res.theta_bar.data());
    }
    state.SetItemsProcessed(state.iterations() * cfg.horizon);
}
BENCHMARK(BM_td_run_random50)->Arg(100000);

void BM_gamma_tilde(benchmark::State& state) {
    const mcuq::MrpModel model = random_model();
    for (auto _ : state) {
        auto res = mcuq::gamma_tilde(model);
        benchmark::DoNotOptimize(res.gamma.data());
    }
}
BENCHMARK(BM_gamma_tilde);

void BM_lambda_T_accumulate(benchmark::State& state) {
    const mcuq::MrpModel model = two_state_model();
    const auto gamma = mcuq::gamma_tilde(model);
    for (auto _ : state) {
        auto lam = mcuq::lambda_T_accumulate(model.steady_a, gamma.gamma, 0.5,
                                             0.75, state.range(0));
        benchmark::DoNotOptimize(lam.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_lambda_T_accumulate)->Arg(100000);

void BM_halfspace(benchmark::State& state) {
    mcuq::Rng rng(3, 0);
    mcuq::Matrix samples(2000, 2);
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
        for (Eigen::Index j = 0; j < samples.cols(); ++j)
            samples(i, j) = rng.normal();
    mcuq::GaussianLaw law;
    law.mean = mcuq::Vector::Zero(2);
    law.cov = mcuq::Matrix::Identity(2, 2);
    for (auto _ : state) {
        auto est = mcuq::halfspace_discrepancy(samples, law, 64, 1);
        benchmark::DoNotOptimize(est.value);
    }
}
BENCHMARK(BM_halfspace);

} // namespace

BENCHMARK_MAIN();
