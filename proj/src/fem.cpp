#include "hcd/fem.hpp"

#include "hcd/kernels.hpp"
#include "hcd/sparse_ldlt.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace hcd {

std::array<int, 4> Mesh::element_nodes(int i, int j) const
{
    return {node_id(i, j), node_id(i + 1, j), node_id(i + 1, j + 1), node_id(i, j + 1)};
}

std::vector<std::uint8_t> Mesh::dirichlet_mask() const
{
    std::vector<std::uint8_t> mask(num_nodes(), 0);
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            mask[node_id(i, j)] = on_boundary(i, j) ? 1 : 0;
    return mask;
}

namespace {

int divide_exactly(double side, double h, const char* what)
{
    const double q = side / h;
    const double n = std::round(q);
    if (n < 1.0 || std::abs(q - n) > 1e-9 * std::max(1.0, q)) {
        std::ostringstream msg;
        msg << "mesh spacing h = " << h << " does not divide the box " << what << " " << side;
        throw ConfigError(msg.str());
    }
    return static_cast<int>(n);
}

} // namespace

Mesh build_mesh(const Box& box, double h, Boundary bc)
{
    if (!(h > 0.0))
        throw ConfigError("mesh spacing must be positive");
    Mesh m;
    m.box = box;
    m.h = h;
    m.nx = divide_exactly(box.width(), h, "width");
    m.ny = divide_exactly(box.height(), h, "height");
    m.bc = bc;
    if (bc == Boundary::Periodic && (m.nx < 2 || m.ny < 2))
        throw ConfigError("periodic mesh needs at least two elements per side");
    return m;
}

DofMap DofMap::dirichlet(const Mesh& mesh)
{
    const auto mask = mesh.dirichlet_mask();
    std::vector<std::uint8_t> keep(mask.size());
    for (std::size_t k = 0; k < mask.size(); ++k)
        keep[k] = mask[k] ? 0 : 1;
    return from_mask(mesh, keep);
}

DofMap DofMap::periodic(const Mesh& mesh)
{
    DofMap d;
    d.node_to_dof.assign(mesh.num_nodes(), -1);
    for (int j = 0; j < mesh.ny; ++j)
        for (int i = 0; i < mesh.nx; ++i) {
            d.node_to_dof[mesh.node_id(i, j)] = d.size();
            d.dof_to_node.push_back(mesh.node_id(i, j));
        }
    for (int j = 0; j <= mesh.ny; ++j)
        for (int i = 0; i <= mesh.nx; ++i)
            if (i == mesh.nx || j == mesh.ny)
                d.node_to_dof[mesh.node_id(i, j)] = d.node_to_dof[mesh.node_id(i % mesh.nx, j % mesh.ny)];
    return d;
}

DofMap DofMap::from_mask(const Mesh& mesh, std::span<const std::uint8_t> keep)
{
    DofMap d;
    d.node_to_dof.assign(mesh.num_nodes(), -1);
    for (int n = 0; n < mesh.num_nodes(); ++n)
        if (keep[n]) {
            d.node_to_dof[n] = d.size();
            d.dof_to_node.push_back(n);
        }
    return d;
}

Mat2 CoefficientField::at(int e) const
{
    switch (phase[e]) {
    case Phase::Matrix:
        return A1;
    case Phase::Inclusion:
        return epsilon * epsilon * Mat2::Identity();
    case Phase::Defect:
        return A2;
    }
    return A1;
}

CoefficientField tag_elements(const Mesh& mesh, const ScaledGeometry& geom, const Mat2& A1,
                              const Mat2& A2)
{
    CoefficientField f;
    f.A1 = A1;
    f.A2 = A2;
    f.epsilon = geom.epsilon;
    f.phase.resize(mesh.num_elements());
    const int ne = mesh.num_elements();
#pragma omp parallel for schedule(static)
    for (int e = 0; e < ne; ++e)
        f.phase[e] = geom.phase_unchecked(mesh.element_center(e));
    return f;
}

ElementFields ElementFields::uniform(int n, const Mat2& a, double mass_weight)
{
    ElementFields f;
    f.axx.assign(n, a(0, 0));
    f.axy.assign(n, a(0, 1));
    f.ayy.assign(n, a(1, 1));
    f.mass.assign(n, mass_weight);
    return f;
}

void ElementFields::set(int e, const Mat2& a, double mass_weight)
{
    axx[e] = a(0, 0);
    axy[e] = a(0, 1);
    ayy[e] = a(1, 1);
    mass[e] = mass_weight;
}

Vec OperatorPair::to_nodes(const Vec& u) const
{
    Vec out = Vec::Zero(mesh.num_nodes());
    for (int n = 0; n < mesh.num_nodes(); ++n) {
        const int d = dofs.node_to_dof[n];
        if (d >= 0)
            out[n] = u[d];
    }
    return out;
}

Vec OperatorPair::from_nodes(const Vec& nodal) const
{
    Vec out(dofs.size());
    for (int d = 0; d < dofs.size(); ++d)
        out[d] = nodal[dofs.dof_to_node[d]];
    return out;
}

const ElementMatrices& ElementMatrices::get()
{
    static const ElementMatrices em = [] {
        ElementMatrices m{};
        // reference square [0,1]^2, nodes (0,0),(1,0),(1,1),(0,1); 2x2 Gauss is exact here
        const double g = 0.5 / std::sqrt(3.0);
        const double pts[2] = {0.5 - g, 0.5 + g};
        const double sx[4] = {-1, 1, 1, -1}, sy[4] = {-1, -1, 1, 1};
        for (double x : pts)
            for (double y : pts) {
                double N[4], dx[4], dy[4];
                for (int a = 0; a < 4; ++a) {
                    const double fx = sx[a] > 0 ? x : 1 - x;
                    const double fy = sy[a] > 0 ? y : 1 - y;
                    N[a] = fx * fy;
                    dx[a] = sx[a] * fy;
                    dy[a] = sy[a] * fx;
                }
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b < 4; ++b) {
                        m.kxx[a][b] += 0.25 * dx[a] * dx[b];
                        m.kxy[a][b] += 0.25 * dx[a] * dy[b];
                        m.kyy[a][b] += 0.25 * dy[a] * dy[b];
                        m.mass_unit[a][b] += 0.25 * N[a] * N[b];
                    }
            }
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) {
                m.kxx[b][a] = m.kxx[a][b];
                m.kyy[b][a] = m.kyy[a][b];
                m.mass_unit[b][a] = m.mass_unit[a][b];
            }
        return m;
    }();
    return em;
}

std::array<std::array<double, 4>, 4> ElementMatrices::stiffness(double axx, double axy, double ayy) const
{
    std::array<std::array<double, 4>, 4> k{};
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            k[a][b] = axx * kxx[a][b] + axy * (kxy[a][b] + kxy[b][a]) + ayy * kyy[a][b];
    return k;
}

OperatorPair assemble_fields(const Mesh& mesh, const DofMap& dofs, const ElementFields& fields)
{
    OperatorPair op;
    op.mesh = mesh;
    op.dofs = dofs;
    kernels::assemble_pair(mesh, dofs, fields, op.K, op.M);
    return op;
}

OperatorPair assemble_operator(const Mesh& mesh, const ScaledGeometry& geom, const Mat2& A1,
                               const Mat2& A2)
{
    if (!is_spd(A1) || !is_spd(A2))
        throw ConfigError("A1 and A2 must be symmetric positive definite");
    const double tol = 1e-12 * std::max(1.0, geom.region.width());
    if (mesh.box.x0 < geom.region.x0 - tol || mesh.box.y0 < geom.region.y0 - tol
        || mesh.box.x1 > geom.region.x1 + tol || mesh.box.y1 > geom.region.y1 + tol)
        throw ConfigError("mesh box must lie inside the geometry region");
    if (!geom.kept.empty()) {
        const double r_min = geom.min_radius() / geom.epsilon;
        const double h_req = geom.epsilon * r_min / 4.0;
        if (mesh.h > h_req * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "mesh too coarse for the inclusions: h = " << mesh.h << ", need h <= " << h_req;
            throw ConfigError(msg.str());
        }
    }
    const CoefficientField coef = tag_elements(mesh, geom, A1, A2);
    ElementFields fields = ElementFields::uniform(mesh.num_elements(), A1);
    for (int e = 0; e < mesh.num_elements(); ++e)
        fields.set(e, coef.at(e), 1.0);
    const DofMap dofs = mesh.bc == Boundary::Periodic ? DofMap::periodic(mesh) : DofMap::dirichlet(mesh);
    return assemble_fields(mesh, dofs, fields);
}

ReferenceShapeProblem assemble_reference_shape(const Shape& shape, double h, double cell_side,
                                               double min_elements_across)
{
    const Box cell{0.0, 0.0, cell_side, cell_side};
    if (!cell.contains(shape.bounding_box()))
        throw ConfigError("reference shape must fit inside its cell");
    const Mesh mesh = build_mesh(cell, h, Boundary::Dirichlet);
    if (2.0 * shape.radius / h < min_elements_across - 1e-9) {
        std::ostringstream msg;
        msg << "h = " << h << " resolves the shape with fewer than " << min_elements_across
            << " elements across";
        throw ConfigError(msg.str());
    }
    ReferenceShapeProblem p;
    p.shape = shape;
    p.cell_side = cell_side;
    p.inside.assign(mesh.num_elements(), 0);
    ElementFields fields = ElementFields::uniform(mesh.num_elements(), Mat2::Zero(), 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (shape.contains(mesh.element_center(e))) {
            p.inside[e] = 1;
            fields.set(e, Mat2::Identity(), 1.0);
            p.discrete_area += h * h;
        }
    std::vector<std::uint8_t> keep(mesh.num_nodes(), 0);
    for (int j = 1; j < mesh.ny; ++j)
        for (int i = 1; i < mesh.nx; ++i)
            keep[mesh.node_id(i, j)] = p.inside[mesh.element_id(i - 1, j - 1)] && p.inside[mesh.element_id(i, j - 1)]
                                       && p.inside[mesh.element_id(i - 1, j)] && p.inside[mesh.element_id(i, j)];
    p.op = assemble_fields(mesh, DofMap::from_mask(mesh, keep), fields);
    p.load = Vec::Zero(p.op.size());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (!p.inside[e])
            continue;
        for (int n : mesh.element_nodes(e % mesh.nx, e / mesh.nx)) {
            const int d = p.op.dofs.node_to_dof[n];
            if (d >= 0)
                p.load[d] += 0.25 * h * h;
        }
    }
    return p;
}

double integrate_nodal(const Mesh& mesh, std::span<const double> nodal, std::span<const std::uint8_t> element_mask)
{
    // exact for bilinear fields: element integral = h^2 * mean of the four nodal values
    double s = 0.0;
    for (int j = 0; j < mesh.ny; ++j)
        for (int i = 0; i < mesh.nx; ++i) {
            if (!element_mask.empty() && !element_mask[mesh.element_id(i, j)])
                continue;
            double v = 0.0;
            for (int n : mesh.element_nodes(i, j))
                v += nodal[n];
            s += 0.25 * v;
        }
    return s * mesh.h * mesh.h;
}

double l2_norm_sq_nodal(const Mesh& mesh, std::span<const double> nodal, std::span<const std::uint8_t> element_mask)
{
    const auto& em = ElementMatrices::get();
    double s = 0.0;
    for (int j = 0; j < mesh.ny; ++j)
        for (int i = 0; i < mesh.nx; ++i) {
            if (!element_mask.empty() && !element_mask[mesh.element_id(i, j)])
                continue;
            const auto nodes = mesh.element_nodes(i, j);
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    s += em.mass_unit[a][b] * nodal[nodes[a]] * nodal[nodes[b]];
        }
    return s * mesh.h * mesh.h;
}

namespace {

/// Element (i,j) containing p and local coordinates in [0,1]^2; false outside.
bool locate(const Mesh& mesh, Point p, int& i, int& j, double& xi, double& eta)
{
    const double fx = (p.x - mesh.box.x0) / mesh.h;
    const double fy = (p.y - mesh.box.y0) / mesh.h;
    if (fx < 0.0 || fy < 0.0 || fx > mesh.nx || fy > mesh.ny)
        return false;
    i = std::min(static_cast<int>(fx), mesh.nx - 1);
    j = std::min(static_cast<int>(fy), mesh.ny - 1);
    xi = fx - i;
    eta = fy - j;
    return true;
}

} // namespace

double interpolate(const Mesh& mesh, std::span<const double> nodal, Point p)
{
    int i = 0, j = 0;
    double xi = 0.0, eta = 0.0;
    if (!locate(mesh, p, i, j, xi, eta))
        return 0.0;
    const auto n = mesh.element_nodes(i, j);
    return (1 - xi) * (1 - eta) * nodal[n[0]] + xi * (1 - eta) * nodal[n[1]] + xi * eta * nodal[n[2]]
           + (1 - xi) * eta * nodal[n[3]];
}

Eigen::Vector2d gradient_at(const Mesh& mesh, std::span<const double> nodal, Point p)
{
    int i = 0, j = 0;
    double xi = 0.0, eta = 0.0;
    if (!locate(mesh, p, i, j, xi, eta))
        return Eigen::Vector2d::Zero();
    const auto n = mesh.element_nodes(i, j);
    const double u0 = nodal[n[0]], u1 = nodal[n[1]], u2 = nodal[n[2]], u3 = nodal[n[3]];
    return {((u1 - u0) * (1 - eta) + (u2 - u3) * eta) / mesh.h, ((u3 - u0) * (1 - xi) + (u2 - u1) * xi) / mesh.h};
}

std::vector<std::uint8_t> interior_nodes(const Mesh& mesh, std::span<const int> element_label)
{
    std::vector<std::uint8_t> out(mesh.num_nodes(), 0);
    const bool periodic = mesh.bc == Boundary::Periodic;
    for (int j = 0; j <= mesh.ny; ++j)
        for (int i = 0; i <= mesh.nx; ++i) {
            if (!periodic && mesh.on_boundary(i, j))
                continue;
            if (periodic && (i == mesh.nx || j == mesh.ny))
                continue;
            int label = -2;
            bool same = true;
            for (int dj = -1; dj <= 0 && same; ++dj)
                for (int di = -1; di <= 0 && same; ++di) {
                    const int ei = (i + di + mesh.nx) % mesh.nx;
                    const int ej = (j + dj + mesh.ny) % mesh.ny;
                    const int l = element_label[mesh.element_id(ei, ej)];
                    if (label == -2)
                        label = l;
                    same = l == label;
                }
            out[mesh.node_id(i, j)] = same && label >= 0 ? 1 : 0;
        }
    return out;
}

Vec harmonic_fill(const Mesh& mesh, std::span<const std::uint8_t> element_mask,
                  std::span<const std::uint8_t> free_nodes, const Vec& nodal)
{
    Vec out = nodal;
    const DofMap dofs = DofMap::from_mask(mesh, free_nodes);
    if (dofs.size() == 0)
        return out;
    const auto& em = ElementMatrices::get();
    std::vector<Eigen::Triplet<double>> trip;
    Vec rhs = Vec::Zero(dofs.size());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (!element_mask[e])
            continue;
        const auto nodes = mesh.element_nodes(e % mesh.nx, e / mesh.nx);
        for (int a = 0; a < 4; ++a) {
            const int da = dofs.node_to_dof[nodes[a]];
            if (da < 0)
                continue;
            for (int b = 0; b < 4; ++b) {
                const double k = em.kxx[a][b] + em.kyy[a][b];
                const int db = dofs.node_to_dof[nodes[b]];
                if (db >= 0)
                    trip.emplace_back(da, db, k);
                else
                    rhs[da] -= k * nodal[nodes[b]];
            }
        }
    }
    SpMat K(dofs.size(), dofs.size());
    K.setFromTriplets(trip.begin(), trip.end());
    Ldlt f(K);
    if (!f.factorize(K))
        throw NumericalError("harmonic_fill: free nodes not enclosed by the masked elements");
    const Vec x = f.solve(rhs);
    for (int d = 0; d < dofs.size(); ++d)
        out[dofs.dof_to_node[d]] = x[d];
    return out;
}

void write_matrix_market(std::ostream& os, const SpMat& a)
{
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << a.rows() << " " << a.cols() << " " << a.nonZeros() << "\n";
    os << std::setprecision(17);
    for (int c = 0; c < a.outerSize(); ++c)
        for (SpMat::InnerIterator it(a, c); it; ++it)
            os << it.row() + 1 << " " << it.col() + 1 << " " << it.value() << "\n";
}

} // namespace hcd
