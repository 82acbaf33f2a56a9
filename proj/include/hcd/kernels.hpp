#pragma once

// Data-parallel kernels. Each OpenMP kernel has a plain serial counterpart in
// hcd::kernels::serial that the tests compare against and the benchmarks time.

#include "hcd/fem.hpp"

#include <span>
#include <vector>

namespace hcd::kernels {

/// Row-gather assembly of K and M. Every entry is summed over its neighbouring
/// elements in ascending element order, so K and M are bitwise symmetric and
/// independent of the thread count.
void assemble_pair(const Mesh& mesh, const DofMap& dofs, const ElementFields& fields, SpMat& K,
                   SpMat& M);

/// Summed-area table of a row-major (ny x nx) cell array, sized (ny+1) x (nx+1).
std::vector<double> prefix_sums(std::span<const double> cells, int nx, int ny);

/// Maximum over windows of side `w` cells whose lower-left corner runs over
/// multiples of `stride` cells, of the window total. Returns the window sum.
double max_window_sum(std::span<const double> table, int nx, int ny, int w, int stride);

/// out[i] = f(xs[i]) evaluated concurrently.
template <class F>
std::vector<double> map_grid(std::span<const double> xs, F&& f)
{
    std::vector<double> out(xs.size());
    const auto n = static_cast<long>(xs.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = f(xs[static_cast<std::size_t>(i)]);
    return out;
}

namespace serial {

/// Triplet scatter assembly, the textbook loop over elements.
void assemble_pair(const Mesh& mesh, const DofMap& dofs, const ElementFields& fields, SpMat& K,
                   SpMat& M);

std::vector<double> prefix_sums(std::span<const double> cells, int nx, int ny);

/// Direct summation over each window.
double max_window_sum(std::span<const double> cells, int nx, int ny, int w, int stride);

} // namespace serial

} // namespace hcd::kernels
