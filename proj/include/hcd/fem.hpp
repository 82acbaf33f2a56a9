#pragma once

#include "hcd/core.hpp"
#include "hcd/geometry.hpp"

#include <Eigen/SparseCore>

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

namespace hcd {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

enum class Boundary : std::uint8_t { Dirichlet, Periodic };

/// Structured grid of square bilinear elements. Nodes and elements are numbered
/// lexicographically with x fastest.
struct Mesh {
    Box box;
    double h = 0.0;
    int nx = 0;
    int ny = 0;
    Boundary bc = Boundary::Dirichlet;

    int num_nodes() const { return (nx + 1) * (ny + 1); }
    int num_elements() const { return nx * ny; }
    int node_id(int i, int j) const { return j * (nx + 1) + i; }
    int element_id(int i, int j) const { return j * nx + i; }
    Point node(int i, int j) const { return {box.x0 + i * h, box.y0 + j * h}; }
    Point node(int id) const { return node(id % (nx + 1), id / (nx + 1)); }
    Point element_center(int i, int j) const { return {box.x0 + (i + 0.5) * h, box.y0 + (j + 0.5) * h}; }
    Point element_center(int id) const { return element_center(id % nx, id / nx); }
    /// Node ids of element (i,j): (i,j), (i+1,j), (i+1,j+1), (i,j+1).
    std::array<int, 4> element_nodes(int i, int j) const;
    bool on_boundary(int i, int j) const { return i == 0 || j == 0 || i == nx || j == ny; }
    std::vector<std::uint8_t> dirichlet_mask() const;
};

Mesh build_mesh(const Box& box, double h, Boundary bc);

/// Node -> dof numbering. Eliminated nodes map to -1; periodic images share a dof.
struct DofMap {
    std::vector<int> node_to_dof;
    std::vector<int> dof_to_node;

    int size() const { return static_cast<int>(dof_to_node.size()); }

    static DofMap dirichlet(const Mesh& mesh);
    static DofMap periodic(const Mesh& mesh);
    /// Keep nodes flagged nonzero in `keep`, in ascending node order.
    static DofMap from_mask(const Mesh& mesh, std::span<const std::uint8_t> keep);
};

/// Per-element phase tags and the three coefficient matrices.
struct CoefficientField {
    std::vector<Phase> phase;
    Mat2 A1 = Mat2::Identity();
    Mat2 A2 = Mat2::Identity();
    double epsilon = 1.0;

    /// chi_1 A1 + chi_0 eps^2 Id + chi_2 A2 at element e.
    Mat2 at(int e) const;
};

CoefficientField tag_elements(const Mesh& mesh, const ScaledGeometry& geom, const Mat2& A1,
                              const Mat2& A2);

/// Element-wise data consumed by the assembly kernels.
struct ElementFields {
    std::vector<double> axx, axy, ayy;
    std::vector<double> mass;

    static ElementFields uniform(int n, const Mat2& a, double mass_weight = 1.0);
    void set(int e, const Mat2& a, double mass_weight);
};

struct OperatorPair {
    SpMat K;
    SpMat M;
    Mesh mesh;
    DofMap dofs;

    int size() const { return static_cast<int>(K.rows()); }
    /// Nodal field (num_nodes) from a dof vector; eliminated nodes get 0.
    Vec to_nodes(const Vec& u) const;
    Vec from_nodes(const Vec& nodal) const;
};

/// Reference element matrices for a square element of side h.
struct ElementMatrices {
    std::array<std::array<double, 4>, 4> kxx, kxy, kyy, mass_unit;

    static const ElementMatrices& get();
    std::array<std::array<double, 4>, 4> stiffness(double axx, double axy, double ayy) const;
};

OperatorPair assemble_fields(const Mesh& mesh, const DofMap& dofs, const ElementFields& fields);

/// Stiffness/mass pair of the eps-problem. Refuses meshes coarser than eps*r_min/4.
OperatorPair assemble_operator(const Mesh& mesh, const ScaledGeometry& geom, const Mat2& A1,
                               const Mat2& A2);

/// Dirichlet problem on a single shape placed in a square cell [0,side]^2 meshed with
/// spacing h. Elements whose midpoint lies in the shape carry the unit coefficient; a
/// node is a dof when all four neighbouring elements are inside.
struct ReferenceShapeProblem {
    OperatorPair op;
    Shape shape;
    double cell_side = 1.0;
    std::vector<std::uint8_t> inside;  // per element
    Vec load;                          // int N_i over the discrete shape, per dof
    double discrete_area = 0.0;
};

/// Refuses h when fewer than `min_elements_across` elements span the shape.
ReferenceShapeProblem assemble_reference_shape(const Shape& shape, double h, double cell_side = 1.0,
                                               double min_elements_across = 16.0);

/// Element-midpoint L2 quadrature helpers on nodal fields.
double integrate_nodal(const Mesh& mesh, std::span<const double> nodal,
                       std::span<const std::uint8_t> element_mask = {});
double l2_norm_sq_nodal(const Mesh& mesh, std::span<const double> nodal,
                        std::span<const std::uint8_t> element_mask = {});

/// Bilinear interpolation of a nodal field; 0 outside the mesh box.
double interpolate(const Mesh& mesh, std::span<const double> nodal, Point p);
/// Gradient of the bilinear interpolant at p (element containing p, lower-left on ties).
Eigen::Vector2d gradient_at(const Mesh& mesh, std::span<const double> nodal, Point p);

/// Per-node flag: all four neighbouring elements carry the same label >= 0.
/// Boundary nodes of a Dirichlet mesh are never flagged.
std::vector<std::uint8_t> interior_nodes(const Mesh& mesh, std::span<const int> element_label);

/// Replaces the values at `free_nodes` by the discrete harmonic (unit-coefficient)
/// extension over the elements flagged in `element_mask`, keeping all other nodes.
Vec harmonic_fill(const Mesh& mesh, std::span<const std::uint8_t> element_mask,
                  std::span<const std::uint8_t> free_nodes, const Vec& nodal);

/// Matrix Market coordinate export.
void write_matrix_market(std::ostream& os, const SpMat& a);

} // namespace hcd
