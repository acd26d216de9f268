#include <benchmark/benchmark.h>

#include "dovis/guarantees.hpp"
#include "dovis/kernel.hpp"
#include "dovis/rank.hpp"
#include "dovis/sim.hpp"

using namespace dovis;

namespace {

struct Instance {
    kernel::StochasticKernel kernel;
    SimplexVector prior;
};

Instance random_instance(std::size_t n) {
    Rng rng(n);
    auto prior = guarantees::random_prior(n, rng);
    auto k = guarantees::random_kernel(n, std::min(1.0, 10.0 / static_cast<double>(n)), rng, prior);
    return {std::move(k), std::move(prior)};
}

sim::WorldConfig bench_world(int epochs) {
    auto cfg = sim::WorldConfig::for_regime(sim::Regime::kRealistic);
    cfg.epochs = epochs;
    cfg.burn_in = 1;
    return cfg;
}

void BM_FixedPoint(benchmark::State &state) {
    const auto inst = random_instance(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(rank::fixed_point(inst.kernel, 0.85, inst.prior, {1e-10, 500, false}));
    }
}
BENCHMARK(BM_FixedPoint)->Arg(100)->Arg(1000)->Arg(10000);

void BM_ClosedForm(benchmark::State &state) {
    const auto inst = random_instance(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(rank::closed_form_rank(inst.kernel, 0.85, inst.prior));
    }
}
BENCHMARK(BM_ClosedForm)->Arg(100)->Arg(300);

void BM_BuildKernels(benchmark::State &state) {
    const auto tl = sim::run_simulation(bench_world(10), rank::RankHyperparams{}, kernel::UtilityWeights{});
    const IdIndex agents(tl.agent_ids);
    const auto &snap = tl.epochs.back().snapshot;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            kernel::build_kernels(snap, agents, kernel::UtilityWeights{}, tl.priors.usage, tl.priors.competence));
    }
    state.counters["edges"] = static_cast<double>(snap.size());
}
BENCHMARK(BM_BuildKernels);

void BM_SimulationEpochs(benchmark::State &state) {
    const auto cfg = bench_world(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(sim::run_simulation(cfg, rank::RankHyperparams{}, kernel::UtilityWeights{}));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulationEpochs)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
