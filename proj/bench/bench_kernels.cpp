// OpenMP kernels against their serial counterparts.
//   hcd_bench --benchmark_filter=assemble

#include "hcd/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace hcd;

namespace {

struct Assembly {
    Mesh mesh;
    DofMap dofs;
    ElementFields fields;
};

Assembly make_assembly(double h)
{
    Mesh m = build_mesh(Box::centered(2.0), h, Boundary::Dirichlet);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(0.5, 2.0);
    ElementFields f = ElementFields::uniform(m.num_elements(), Mat2::Identity());
    for (int e = 0; e < m.num_elements(); ++e)
        f.set(e, U(rng) * Mat2::Identity(), U(rng));
    DofMap d = DofMap::dirichlet(m);
    return {std::move(m), std::move(d), std::move(f)};
}

std::vector<double> random_cells(int n)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> N;
    std::vector<double> c(static_cast<std::size_t>(n) * n);
    for (auto& x : c)
        x = N(rng);
    return c;
}

void BM_assemble_omp(benchmark::State& st)
{
    const auto a = make_assembly(1.0 / st.range(0));
    SpMat K, M;
    for (auto _ : st) {
        kernels::assemble_pair(a.mesh, a.dofs, a.fields, K, M);
        benchmark::DoNotOptimize(K.nonZeros());
    }
}

void BM_assemble_serial(benchmark::State& st)
{
    const auto a = make_assembly(1.0 / st.range(0));
    SpMat K, M;
    for (auto _ : st) {
        kernels::serial::assemble_pair(a.mesh, a.dofs, a.fields, K, M);
        benchmark::DoNotOptimize(K.nonZeros());
    }
}

void BM_prefix_omp(benchmark::State& st)
{
    const int n = static_cast<int>(st.range(0));
    const auto c = random_cells(n);
    for (auto _ : st)
        benchmark::DoNotOptimize(kernels::prefix_sums(c, n, n));
}

void BM_prefix_serial(benchmark::State& st)
{
    const int n = static_cast<int>(st.range(0));
    const auto c = random_cells(n);
    for (auto _ : st)
        benchmark::DoNotOptimize(kernels::serial::prefix_sums(c, n, n));
}

void BM_window_omp(benchmark::State& st)
{
    const int n = static_cast<int>(st.range(0));
    const auto c = random_cells(n);
    const auto P = kernels::prefix_sums(c, n, n);
    for (auto _ : st)
        benchmark::DoNotOptimize(kernels::max_window_sum(P, n, n, n / 8, 1));
}

void BM_window_serial(benchmark::State& st)
{
    const int n = static_cast<int>(st.range(0));
    const auto c = random_cells(n);
    for (auto _ : st)
        benchmark::DoNotOptimize(kernels::serial::max_window_sum(c, n, n, n / 8, 1));
}

} // namespace

BENCHMARK(BM_assemble_omp)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_assemble_serial)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_prefix_omp)->Arg(256)->Arg(1024);
BENCHMARK(BM_prefix_serial)->Arg(256)->Arg(1024);
BENCHMARK(BM_window_omp)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_window_serial)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
