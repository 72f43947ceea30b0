// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include "stylealign/evalsuite.hpp"
#include "stylealign/kernels.hpp"
#include "stylealign/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace stylealign;

namespace {

auto random_values(std::size_t n, std::uint64_t seed) -> std::vector<double> {
    CounterRng rng(seed);
    std::vector<double> v(n);
    for (auto &x : v) {
        x = rng.normal(0.0, 1.0);
    }
    return v;
}

template <auto Kernel>
void bm_gemm(benchmark::State &state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 1);
    const auto b = random_values(n * n, 2);
    std::vector<double> out(n * n);
    for (auto _ : state) {
        Kernel(kernels::Transpose::none, {n, n, n}, a, b, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void bm_gemm_reference(benchmark::State &state) {
    bm_gemm<kernels::gemm_reference>(state);
}
void bm_gemm_parallel(benchmark::State &state) {
    bm_gemm<kernels::gemm_parallel>(state);
}

void bm_wr_logp(benchmark::State &state, Execution exec) {
    WorldConfig w;
    w.n_examples = 131;
    const auto test = synthesize_dataset(w, 0);
    InitOptions init;
    init.zero_output_head = false;
    const TinyCaptioner model(CaptionerConfig{}, init);
    for (auto _ : state) {
        benchmark::DoNotOptimize(wr_logp(model, test, Style::humor, exec));
    }
}

}    // namespace

BENCHMARK(bm_gemm_reference)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_gemm_parallel)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK_CAPTURE(bm_wr_logp, serial, Execution::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_wr_logp, parallel, Execution::parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
