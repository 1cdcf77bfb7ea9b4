// SPDX-License-Identifier: MIT
#include <benchmark/benchmark.h>

#include "segplan/planner.hpp"
#include "segplan/preprocess.hpp"
#include "segplan/rng.hpp"
#include "segplan/tiling.hpp"

using namespace segplan;

static void BM_ConfigureTopology(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(configure_topology({128, 128, 128}, {1.0, 0.77, 0.77}));
}
BENCHMARK(BM_ConfigureTopology);

static void BM_PlanUNetLiver(benchmark::State& state) {
    const auto model = reference_memory_model_3d();
    for (auto _ : state)
        benchmark::DoNotOptimize(plan_unet({482, 512, 512}, {1.0, 0.77, 0.77}, 131.0 * 432 * 512 * 512, model,
                                           PlanKind::U3D_FULLRES));
}
BENCHMARK(BM_PlanUNetLiver);

static void BM_ResampleVolume(benchmark::State& state) {
    const auto n = state.range(0);
    Volume v({n, n, n}, {1.0, 1.0, 1.0});
    RngStream rng(1);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform01());
    for (auto _ : state) benchmark::DoNotOptimize(resample_volume(v, {0.7, 0.7, 0.7}));
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_ResampleVolume)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_AggregateTiles(benchmark::State& state) {
    const std::vector<std::int64_t> patch{32, 48, 48};
    const auto plan = compute_tile_origins({80, 160, 160}, patch);
    const std::vector<Tensor> blocks(plan.origins.size(), Tensor(patch, 3, 0.5f));
    const auto weights = gaussian_importance_map(patch);
    for (auto _ : state) benchmark::DoNotOptimize(aggregate_tiles(plan, blocks, weights));
}
BENCHMARK(BM_AggregateTiles)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
