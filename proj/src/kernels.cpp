#include "hcd/kernels.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace hcd::kernels {

namespace {

struct Adjacent {
    int element;
    int local;
};

/// Elements around node (i,j) with the node's local index, sorted by element id.
int adjacent_elements(const Mesh& mesh, int i, int j, std::array<Adjacent, 4>& out)
{
    const bool periodic = mesh.bc == Boundary::Periodic;
    int count = 0;
    for (int dj = -1; dj <= 0; ++dj) {
        for (int di = -1; di <= 0; ++di) {
            int ei = i + di;
            int ej = j + dj;
            if (periodic) {
                ei = (ei + mesh.nx) % mesh.nx;
                ej = (ej + mesh.ny) % mesh.ny;
            } else if (ei < 0 || ej < 0 || ei >= mesh.nx || ej >= mesh.ny) {
                continue;
            }
            static constexpr int local_of[2][2] = {{2, 1}, {3, 0}}; // [di+1][dj+1]
            out[count++] = {mesh.element_id(ei, ej), local_of[di + 1][dj + 1]};
        }
    }
    std::sort(out.begin(), out.begin() + count,
              [](const Adjacent& a, const Adjacent& b) { return a.element < b.element; });
    return count;
}

struct RowEntry {
    int col;
    double k;
    double m;
};

/// Gathers column `c`; returns the number of distinct entries written to `row`.
int gather_column(const Mesh& mesh, const DofMap& dofs, const ElementFields& fields, int c,
                  std::array<RowEntry, 16>& row)
{
    const auto& em = ElementMatrices::get();
    const double h2 = mesh.h * mesh.h;
    const int node = dofs.dof_to_node[static_cast<std::size_t>(c)];
    const int i = node % (mesh.nx + 1);
    const int j = node / (mesh.nx + 1);
    std::array<Adjacent, 4> adj{};
    const int na = adjacent_elements(mesh, i, j, adj);
    int count = 0;
    for (int t = 0; t < na; ++t) {
        const int e = adj[static_cast<std::size_t>(t)].element;
        const int a = adj[static_cast<std::size_t>(t)].local;
        const auto ue = static_cast<std::size_t>(e);
        const auto nodes = mesh.element_nodes(e % mesh.nx, e / mesh.nx);
        for (int b = 0; b < 4; ++b) {
            const int d = dofs.node_to_dof[static_cast<std::size_t>(nodes[static_cast<std::size_t>(b)])];
            if (d < 0)
                continue;
            const auto ua = static_cast<std::size_t>(a);
            const auto ub = static_cast<std::size_t>(b);
            const double kv = fields.axx[ue] * em.kxx[ua][ub]
                              + fields.axy[ue] * (em.kxy[ua][ub] + em.kxy[ub][ua])
                              + fields.ayy[ue] * em.kyy[ua][ub];
            const double mv = fields.mass[ue] * h2 * em.mass_unit[ua][ub];
            int slot = 0;
            while (slot < count && row[static_cast<std::size_t>(slot)].col != d)
                ++slot;
            if (slot == count)
                row[static_cast<std::size_t>(count++)] = {d, 0.0, 0.0};
            row[static_cast<std::size_t>(slot)].k += kv;
            row[static_cast<std::size_t>(slot)].m += mv;
        }
    }
    std::sort(row.begin(), row.begin() + count,
              [](const RowEntry& x, const RowEntry& y) { return x.col < y.col; });
    return count;
}

} // namespace

void assemble_pair(const Mesh& mesh, const DofMap& dofs, const ElementFields& fields, SpMat& K,
                   SpMat& M)
{
    const int n = dofs.size();
    std::vector<int> counts(static_cast<std::size_t>(n) + 1, 0);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < n; ++c) {
        std::array<RowEntry, 16> row{};
        counts[static_cast<std::size_t>(c) + 1] = gather_column(mesh, dofs, fields, c, row);
    }
    for (int c = 0; c < n; ++c)
        counts[static_cast<std::size_t>(c) + 1] += counts[static_cast<std::size_t>(c)];
    const int nnz = counts[static_cast<std::size_t>(n)];

    K = SpMat(n, n);
    M = SpMat(n, n);
    K.resizeNonZeros(nnz);
    M.resizeNonZeros(nnz);
    std::copy(counts.begin(), counts.end(), K.outerIndexPtr());
    std::copy(counts.begin(), counts.end(), M.outerIndexPtr());

#pragma omp parallel for schedule(static)
    for (int c = 0; c < n; ++c) {
        std::array<RowEntry, 16> row{};
        const int len = gather_column(mesh, dofs, fields, c, row);
        const int off = counts[static_cast<std::size_t>(c)];
        for (int t = 0; t < len; ++t) {
            const auto& r = row[static_cast<std::size_t>(t)];
            K.innerIndexPtr()[off + t] = r.col;
            M.innerIndexPtr()[off + t] = r.col;
            K.valuePtr()[off + t] = r.k;
            M.valuePtr()[off + t] = r.m;
        }
    }
}

std::vector<double> prefix_sums(std::span<const double> cells, int nx, int ny)
{
    const auto W = static_cast<std::size_t>(nx) + 1;
    std::vector<double> s(W * (static_cast<std::size_t>(ny) + 1), 0.0);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < ny; ++j) {
        double run = 0.0;
        for (int i = 0; i < nx; ++i) {
            run += cells[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i)];
            s[(static_cast<std::size_t>(j) + 1) * W + static_cast<std::size_t>(i) + 1] = run;
        }
    }
#pragma omp parallel for schedule(static)
    for (int i = 1; i <= nx; ++i) {
        for (int j = 1; j <= ny; ++j)
            s[static_cast<std::size_t>(j) * W + static_cast<std::size_t>(i)]
                += s[(static_cast<std::size_t>(j) - 1) * W + static_cast<std::size_t>(i)];
    }
    return s;
}

double max_window_sum(std::span<const double> table, int nx, int ny, int w, int stride)
{
    const auto W = static_cast<std::size_t>(nx) + 1;
    const int px = (nx - w) / stride + 1;
    const int py = (ny - w) / stride + 1;
    double best = -std::numeric_limits<double>::infinity();
#pragma omp parallel for reduction(max : best) schedule(static)
    for (int q = 0; q < px * py; ++q) {
        const auto x0 = static_cast<std::size_t>((q % px) * stride);
        const auto y0 = static_cast<std::size_t>((q / px) * stride);
        const auto x1 = x0 + static_cast<std::size_t>(w);
        const auto y1 = y0 + static_cast<std::size_t>(w);
        const double v = table[y1 * W + x1] - table[y0 * W + x1] - table[y1 * W + x0] + table[y0 * W + x0];
        best = std::max(best, v);
    }
    return best;
}

namespace serial {

void assemble_pair(const Mesh& mesh, const DofMap& dofs, const ElementFields& fields, SpMat& K,
                   SpMat& M)
{
    const auto& em = ElementMatrices::get();
    const double h2 = mesh.h * mesh.h;
    std::vector<Eigen::Triplet<double>> tk, tm;
    tk.reserve(static_cast<std::size_t>(mesh.num_elements()) * 16);
    tm.reserve(static_cast<std::size_t>(mesh.num_elements()) * 16);
    for (int ej = 0; ej < mesh.ny; ++ej) {
        for (int ei = 0; ei < mesh.nx; ++ei) {
            const auto e = static_cast<std::size_t>(mesh.element_id(ei, ej));
            const auto ke = em.stiffness(fields.axx[e], fields.axy[e], fields.ayy[e]);
            const auto nodes = mesh.element_nodes(ei, ej);
            for (std::size_t a = 0; a < 4; ++a) {
                const int da = dofs.node_to_dof[static_cast<std::size_t>(nodes[a])];
                if (da < 0)
                    continue;
                for (std::size_t b = 0; b < 4; ++b) {
                    const int db = dofs.node_to_dof[static_cast<std::size_t>(nodes[b])];
                    if (db < 0)
                        continue;
                    tk.emplace_back(da, db, ke[a][b]);
                    tm.emplace_back(da, db, fields.mass[e] * h2 * em.mass_unit[a][b]);
                }
            }
        }
    }
    const int n = dofs.size();
    K = SpMat(n, n);
    M = SpMat(n, n);
    K.setFromTriplets(tk.begin(), tk.end());
    M.setFromTriplets(tm.begin(), tm.end());
}

std::vector<double> prefix_sums(std::span<const double> cells, int nx, int ny)
{
    const auto W = static_cast<std::size_t>(nx) + 1;
    std::vector<double> s(W * (static_cast<std::size_t>(ny) + 1), 0.0);
    for (std::size_t j = 1; j <= static_cast<std::size_t>(ny); ++j)
        for (std::size_t i = 1; i <= static_cast<std::size_t>(nx); ++i)
            s[j * W + i] = cells[(j - 1) * static_cast<std::size_t>(nx) + (i - 1)] + s[(j - 1) * W + i]
                           + s[j * W + i - 1] - s[(j - 1) * W + i - 1];
    return s;
}

double max_window_sum(std::span<const double> cells, int nx, int ny, int w, int stride)
{
    double best = -std::numeric_limits<double>::infinity();
    for (int y0 = 0; y0 + w <= ny; y0 += stride) {
        for (int x0 = 0; x0 + w <= nx; x0 += stride) {
            double v = 0.0;
            for (int y = y0; y < y0 + w; ++y)
                for (int x = x0; x < x0 + w; ++x)
                    v += cells[static_cast<std::size_t>(y) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(x)];
            best = std::max(best, v);
        }
    }
    return best;
}

} // namespace serial

} // namespace hcd::kernels
