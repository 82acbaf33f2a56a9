#include "hcd/kernels.hpp"

#include <doctest.h>

#include <omp.h>

#include <random>

using namespace hcd;

TEST_SUITE("kernels") {

TEST_CASE("OpenMP assembly equals the serial scatter assembly")
{
    const Mesh m = build_mesh(Box{0, 0, 3, 2}, 1.0 / 32.0, Boundary::Dirichlet);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.5, 2.0);
    ElementFields f = ElementFields::uniform(m.num_elements(), Mat2::Identity());
    for (int e = 0; e < m.num_elements(); ++e) {
        Mat2 a;
        const double off = 0.2 * (U(rng) - 1.25);
        a << U(rng), off, off, U(rng);
        f.set(e, a, U(rng));
    }
    const DofMap dofs = DofMap::dirichlet(m);
    SpMat K, M, Ks, Ms;
    kernels::assemble_pair(m, dofs, f, K, M);
    kernels::serial::assemble_pair(m, dofs, f, Ks, Ms);
    CHECK((K - Ks).norm() <= 1e-14 * Ks.norm());
    CHECK((M - Ms).norm() <= 1e-14 * Ms.norm());
    CHECK((SpMat(K.transpose()) - K).norm() == 0.0);

    // independent of the thread count, bit for bit
    const int saved = omp_get_max_threads();
    omp_set_num_threads(3);
    SpMat K3, M3;
    kernels::assemble_pair(m, dofs, f, K3, M3);
    omp_set_num_threads(saved);
    CHECK((K3 - K).norm() == 0.0);
    CHECK((M3 - M).norm() == 0.0);
}

TEST_CASE("summed-area tables and window maxima agree with the serial versions")
{
    const int nx = 37, ny = 29;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N;
    std::vector<double> cells(nx * ny);
    for (auto& c : cells)
        c = N(rng);
    const auto P = kernels::prefix_sums(cells, nx, ny);
    const auto Ps = kernels::serial::prefix_sums(cells, nx, ny);
    REQUIRE(P.size() == Ps.size());
    for (std::size_t i = 0; i < P.size(); ++i)
        CHECK(P[i] == doctest::Approx(Ps[i]).epsilon(1e-12));
    for (int w : {1, 4, 9}) {
        for (int stride : {1, 2}) {
            const double a = kernels::max_window_sum(P, nx, ny, w, stride);
            const double b = kernels::serial::max_window_sum(cells, nx, ny, w, stride);
            CHECK(a == doctest::Approx(b).epsilon(1e-12));
        }
    }
}

TEST_CASE("map_grid preserves order")
{
    std::vector<double> xs(100);
    for (int i = 0; i < 100; ++i)
        xs[i] = i;
    const auto ys = kernels::map_grid(std::span<const double>(xs), [](double x) { return x * x; });
    for (int i = 0; i < 100; ++i)
        CHECK(ys[i] == double(i) * i);
}

} // TEST_SUITE
