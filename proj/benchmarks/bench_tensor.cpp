#include <benchmark/benchmark.h>

#include "attnscope/models.hpp"
#include "attnscope/rng.hpp"
#include "attnscope/tensor.hpp"

using namespace attnscope;
using tensor::Graph;
using tensor::Tensor;

namespace {

Tensor randn(std::vector<int> dims, std::uint64_t seed) {
    Tensor t(std::move(dims));
    rng::Rng rng(seed);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

}  // namespace

static void BM_matmul(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Tensor a = randn({n, n}, 1), b = randn({n, n}, 2);
    for (auto _ : state) {
        Graph g;
        benchmark::DoNotOptimize(g.matmul(g.value(a), g.value(b)));
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(128);

static void BM_mhsa_forward(benchmark::State& state) {
    const int n = 400, d = 32;
    Tensor x = randn({n, d}, 3);
    Tensor w[4] = {randn({d, d}, 4), randn({d, d}, 5), randn({d, d}, 6), randn({d, d}, 7)};
    Tensor b[4] = {randn({d}, 8), randn({d}, 9), randn({d}, 10), randn({d}, 11)};
    for (auto _ : state) {
        Graph g;
        Graph::MhsaParams p{g.param(w[0]), g.param(b[0]), g.param(w[1]), g.param(b[1]),
                            g.param(w[2]), g.param(b[2]), g.param(w[3]), g.param(b[3])};
        benchmark::DoNotOptimize(g.mhsa(g.value(x), p, 4));
    }
}
BENCHMARK(BM_mhsa_forward);

// one optimizer-facing unit of work: build, forward, backward
static void BM_attention_step(benchmark::State& state) {
    models::ProstAttFormerConfig cfg;
    cfg.grid = {20, 20, "4x"};
    cfg.embed_dim = 32;
    cfg.layers = 2;
    cfg.n_heads = 4;
    auto params = models::init_params(cfg, 12);
    Tensor tokens = randn({cfg.grid.cells(), cfg.embed_dim}, 13);
    Tensor target = randn({cfg.grid.cells(), 1}, 14);
    for (auto _ : state) {
        Graph g;
        auto nodes = models::register_params(g, params, true);
        auto scores = models::prostattformer_graph(g, cfg, nodes, g.value(tokens));
        auto loss = g.cc_loss(scores, g.value(target));
        g.backward(loss);
        benchmark::DoNotOptimize(g.grad(nodes.begin()->second));
    }
}
BENCHMARK(BM_attention_step);

static void BM_expertise_step(benchmark::State& state) {
    models::ExpertiseNetConfig cfg;
    cfg.grid = {20, 20, "4x"};
    cfg.feature_dim = 16;
    cfg.encoder_channels = 8;
    auto params = models::init_params(cfg, 15);
    Tensor feat = randn({cfg.feature_dim, 20, 20}, 16);
    Tensor temporal = randn({4, 20, 20}, 17);
    Tensor mag = randn({4, 20, 20}, 18);
    for (auto _ : state) {
        Graph g;
        auto nodes = models::register_params(g, params, true);
        auto logits =
            models::expertisenet_graph(g, cfg, nodes, g.value(feat), g.value(temporal),
                                       g.value(mag));
        auto loss = g.weighted_ce_loss(logits, {1}, {1.0, 1.0, 1.0});
        g.backward(loss);
        benchmark::DoNotOptimize(g.grad(nodes.begin()->second));
    }
}
BENCHMARK(BM_expertise_step);

BENCHMARK_MAIN();
