#include <benchmark/benchmark.h>

#include "attnscope/analysis.hpp"
#include "attnscope/metrics.hpp"
#include "attnscope/rng.hpp"

using namespace attnscope;

namespace {

heatmap::Heatmap map_of(int rows, int cols, std::uint64_t seed, bool nonneg) {
    rng::Rng rng(seed);
    auto m = heatmap::Heatmap::zeros({rows, cols, ""});
    for (auto& v : m.values) v = nonneg ? rng.uniform(0.0, 1.0) + 1e-6 : rng.normal();
    return m;
}

}  // namespace

static void BM_cc(benchmark::State& state) {
    auto a = map_of(50, 50, 1, false);
    auto b = map_of(50, 50, 2, false);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::cc(a, b));
    state.SetItemsProcessed(state.iterations() * a.values.size());
}
BENCHMARK(BM_cc);

static void BM_nss(benchmark::State& state) {
    auto m = map_of(50, 50, 3, false);
    rng::Rng rng(4);
    metrics::Fixations fix;
    for (int i = 0; i < 100; ++i)
        fix.push_back({static_cast<int>(rng.bounded(50)), static_cast<int>(rng.bounded(50))});
    for (auto _ : state) benchmark::DoNotOptimize(metrics::nss(m, fix));
}
BENCHMARK(BM_nss);

static void BM_kld(benchmark::State& state) {
    auto p = map_of(50, 50, 5, true);
    auto q = map_of(50, 50, 6, true);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::kld(p, q));
}
BENCHMARK(BM_kld);

static void BM_pairwise_agreement(benchmark::State& state) {
    std::vector<heatmap::Heatmap> maps;
    for (int i = 0; i < 8; ++i) maps.push_back(map_of(50, 50, 10 + i, true));
    for (auto _ : state)
        benchmark::DoNotOptimize(analysis::pairwise_attention_agreement(maps));
}
BENCHMARK(BM_pairwise_agreement);

static void BM_pearson_with_p(benchmark::State& state) {
    rng::Rng rng(7);
    std::vector<double> xs, ys;
    for (int i = 0; i < 200; ++i) {
        xs.push_back(rng.normal());
        ys.push_back(0.5 * xs.back() + rng.normal());
    }
    for (auto _ : state) benchmark::DoNotOptimize(analysis::pearson_with_p(xs, ys));
}
BENCHMARK(BM_pearson_with_p);
