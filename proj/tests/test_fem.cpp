#include "hcd/fem.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace hcd;

namespace {

ScaledGeometry empty_geometry(const Box& region, double eps = 1.0)
{
    ScaledGeometry g;
    g.epsilon = eps;
    g.region = region;
    g.build_index();
    return g;
}

OperatorPair all_nodes(const Mesh& mesh, const ElementFields& f)
{
    std::vector<std::uint8_t> keep(mesh.num_nodes(), 1);
    return assemble_fields(mesh, DofMap::from_mask(mesh, keep), f);
}

} // namespace

TEST_SUITE("fem") {

TEST_CASE("mesh counting")
{
    const Mesh m = build_mesh(Box{0, 0, 1, 1}, 0.5, Boundary::Dirichlet);
    CHECK(m.num_nodes() == 9);
    CHECK(m.num_elements() == 4);
    int boundary = 0;
    for (auto b : m.dirichlet_mask())
        boundary += b;
    CHECK(boundary == 8);
    CHECK(DofMap::dirichlet(m).size() == 1);

    const Mesh p = build_mesh(Box{0, 0, 1, 1}, 0.5, Boundary::Periodic);
    CHECK(DofMap::periodic(p).size() == 4);

    CHECK(build_mesh(Box{0, 0, 2, 2}, 0.25, Boundary::Dirichlet).num_nodes() == 81);
}

TEST_CASE("constant coefficient Laplacian: interior rows sum to zero, mass total is the area")
{
    const Mesh m = build_mesh(Box{0, 0, 2, 2}, 0.125, Boundary::Dirichlet);
    const auto f = ElementFields::uniform(m.num_elements(), Mat2::Identity());
    const auto op = all_nodes(m, f);
    const Vec one = Vec::Ones(op.size());
    const Vec k1 = op.K * one;
    CHECK(k1.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(one.dot(op.M * one) == doctest::Approx(4.0).epsilon(1e-13));
    CHECK((SpMat(op.K.transpose()) - op.K).norm() == 0.0);
}

TEST_CASE("all-inclusion mesh scales K by eps^2")
{
    const double eps = 0.25;
    const Box box{0, 0, 1, 1};
    const Mesh m = build_mesh(box, eps / 16.0, Boundary::Dirichlet);
    auto g = empty_geometry(box, eps);
    const auto ref = assemble_operator(m, g, Mat2::Identity(), Mat2::Identity());

    CoefficientField c;
    c.phase.assign(m.num_elements(), Phase::Inclusion);
    c.epsilon = eps;
    ElementFields f = ElementFields::uniform(m.num_elements(), Mat2::Identity());
    for (int e = 0; e < m.num_elements(); ++e)
        f.set(e, c.at(e), 1.0);
    const auto incl = assemble_fields(m, DofMap::dirichlet(m), f);
    CHECK((incl.K - eps * eps * ref.K).norm() <= 1e-14 * ref.K.norm());
    CHECK((incl.M - ref.M).norm() == 0.0);
}

TEST_CASE("Galerkin consistency on affine fields")
{
    const Mesh m = build_mesh(Box{-1, 0, 1, 3}, 0.1, Boundary::Dirichlet);
    Mat2 a;
    a << 2.0, 0.3, 0.3, 1.5;
    const auto op = all_nodes(m, ElementFields::uniform(m.num_elements(), a));
    Vec u(op.size()), v(op.size());
    for (int d = 0; d < op.size(); ++d) {
        const Point p = m.node(op.dofs.dof_to_node[d]);
        u[d] = 1.0 + 2.0 * p.x - 0.5 * p.y;
        v[d] = -3.0 * p.x + p.y;
    }
    const Eigen::Vector2d gu(2.0, -0.5), gv(-3.0, 1.0);
    const double area = m.box.area();
    CHECK(u.dot(op.K * v) == doctest::Approx(area * gu.dot(a * gv)).epsilon(1e-12));
}

TEST_CASE("reference shapes")
{
    const auto sq = assemble_reference_shape(Shape{ShapeKind::Square, {0.5, 0.5}, 0.25}, 1.0 / 64.0);
    CHECK(sq.op.size() == 31 * 31);

    const auto disk = assemble_reference_shape(Shape{ShapeKind::Disk, {0.5, 0.5}, 0.3}, 1.0 / 64.0);
    CHECK((SpMat(disk.op.K.transpose()) - disk.op.K).norm() == 0.0);
    CHECK((SpMat(disk.op.M.transpose()) - disk.op.M).norm() == 0.0);
    const Eigen::MatrixXd Md(disk.op.M);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Md, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() > 0.0);

    CHECK_THROWS_AS(assemble_reference_shape(Shape{ShapeKind::Disk, {0.5, 0.5}, 0.3}, 1.0 / 16.0), ConfigError);
}

TEST_CASE("interpolation reproduces bilinear fields")
{
    const Mesh m = build_mesh(Box{0, 0, 1, 1}, 0.125, Boundary::Dirichlet);
    Vec f(m.num_nodes());
    for (int n = 0; n < m.num_nodes(); ++n) {
        const Point p = m.node(n);
        f[n] = 1.0 + p.x + 2.0 * p.y + 3.0 * p.x * p.y;
    }
    for (Point p : {Point{0.31, 0.77}, Point{0.5, 0.5}, Point{0.01, 0.99}}) {
        CHECK(interpolate(m, {f.data(), std::size_t(f.size())}, p) == doctest::Approx(1.0 + p.x + 2.0 * p.y + 3.0 * p.x * p.y));
        const auto g = gradient_at(m, {f.data(), std::size_t(f.size())}, p);
        CHECK(g[0] == doctest::Approx(1.0 + 3.0 * p.y));
        CHECK(g[1] == doctest::Approx(2.0 + 3.0 * p.x));
    }
    CHECK(interpolate(m, {f.data(), std::size_t(f.size())}, {2.0, 2.0}) == 0.0);
    const Vec one = Vec::Ones(m.num_nodes());
    CHECK(integrate_nodal(m, {one.data(), std::size_t(one.size())}) == doctest::Approx(1.0));
}

TEST_CASE("resolution floor is enforced")
{
    RandomMediumSpec s;
    s.r_min = s.r_max = 0.3;
    const auto real = sample_realization(s, Box::centered(4), 1);
    const auto g = scale_and_filter(real, 0.5, DefectSpec{});
    const Mesh coarse = build_mesh(Box::centered(2), 0.5 / 4.0, Boundary::Dirichlet);
    CHECK_THROWS(assemble_operator(coarse, g, Mat2::Identity(), Mat2::Identity()));
}

} // TEST_SUITE
