// Serial reference kernels against their OpenMP counterparts.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "alo/kernels.hpp"

namespace k = alo::kernels;

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

template <auto Fn>
void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = filled(n * n, 1), b = filled(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        Fn(a, b, c, n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Fn>
void bm_matmul_grad_rhs(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = filled(n * n, 1), g = filled(n * n, 2);
    std::vector<double> db(n * n);
    for (auto _ : state) {
        Fn(a, g, db, n, n, n);
        benchmark::DoNotOptimize(db.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Fn>
void bm_log_softmax(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
    const auto z = filled(rows * cols, 3);
    std::vector<double> out(rows * cols);
    for (auto _ : state) {
        Fn(z, out, rows, cols);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

}  // namespace

BENCHMARK(bm_matmul<k::serial::matmul>)->Name("matmul/serial")->Arg(32)->Arg(128)->Arg(384);
BENCHMARK(bm_matmul<k::parallel::matmul>)->Name("matmul/parallel")->Arg(32)->Arg(128)->Arg(384);
BENCHMARK(bm_matmul_grad_rhs<k::serial::matmul_grad_rhs>)->Name("matmul_grad_rhs/serial")->Arg(128)->Arg(384);
BENCHMARK(bm_matmul_grad_rhs<k::parallel::matmul_grad_rhs>)->Name("matmul_grad_rhs/parallel")->Arg(128)->Arg(384);
BENCHMARK(bm_log_softmax<k::serial::log_softmax_rows>)->Name("log_softmax/serial")->Args({1024, 16})->Args({4096, 256});
BENCHMARK(bm_log_softmax<k::parallel::log_softmax_rows>)->Name("log_softmax/parallel")->Args({1024, 16})->Args({4096, 256});

BENCHMARK_MAIN();
