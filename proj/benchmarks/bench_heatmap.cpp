#include <benchmark/benchmark.h>

#include "attnscope/heatmap.hpp"
#include "attnscope/rng.hpp"
#include "attnscope/telemetry.hpp"

using namespace attnscope;

namespace {

telemetry::Session session_of(int n_samples, std::uint64_t seed) {
    rng::Rng rng(seed);
    telemetry::Session s;
    s.session_id = "bench";
    s.pathologist_id = "bench";
    s.wsi_id = "bench";
    std::int64_t t = 0;
    for (int i = 0; i < n_samples; ++i) {
        telemetry::ViewportSample v;
        v.mag = rng.uniform(1.0 + 1e-6, 30.0);
        double side = std::min(0.25 / v.mag, 0.9);
        double cx = rng.uniform(side / 2, 1.0 - side / 2);
        double cy = rng.uniform(side / 2, 1.0 - side / 2);
        v.x0 = cx - side / 2;
        v.x1 = cx + side / 2;
        v.y0 = cy - side / 2;
        v.y1 = cy + side / 2;
        v.t_ms = t;
        t += 1 + static_cast<std::int64_t>(rng.bounded(200));
        s.samples.push_back(v);
    }
    return s;
}

heatmap::Heatmap map_of(int rows, int cols, std::uint64_t seed) {
    rng::Rng rng(seed);
    auto m = heatmap::Heatmap::zeros({rows, cols, ""});
    for (auto& v : m.values) v = rng.uniform(0.0, 1.0);
    return m;
}

}  // namespace

static void BM_accumulate(benchmark::State& state) {
    auto s = session_of(static_cast<int>(state.range(0)), 42);
    heatmap::GridSpec g{50, 50, "10x"};
    for (auto _ : state) benchmark::DoNotOptimize(heatmap::accumulate(s, g));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_accumulate)->Arg(100)->Arg(1000);

static void BM_footprint_weights(benchmark::State& state) {
    auto s = session_of(1, 43);
    heatmap::GridSpec g{50, 50, "10x"};
    for (auto _ : state)
        benchmark::DoNotOptimize(heatmap::footprint_weights(s.samples.front(), g));
}
BENCHMARK(BM_footprint_weights);

static void BM_temporal_stack(benchmark::State& state) {
    auto s = session_of(500, 44);
    heatmap::GridSpec g{50, 50, "10x"};
    for (auto _ : state) benchmark::DoNotOptimize(heatmap::temporal_stack(s, g));
}
BENCHMARK(BM_temporal_stack);

static void BM_resample(benchmark::State& state) {
    auto m = map_of(60, 60, 45);
    heatmap::GridSpec g{50, 50, "10x"};
    for (auto _ : state) benchmark::DoNotOptimize(heatmap::resample(m, g));
}
BENCHMARK(BM_resample);

static void BM_gaussian_blur(benchmark::State& state) {
    auto m = map_of(60, 60, 46);
    for (auto _ : state) benchmark::DoNotOptimize(heatmap::gaussian_blur(m, 1.5));
}
BENCHMARK(BM_gaussian_blur);
