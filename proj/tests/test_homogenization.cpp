#include "hcd/homogenization.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace hcd;

namespace {

RandomMediumSpec fixed_disk()
{
    RandomMediumSpec s;
    s.r_min = s.r_max = 0.3;
    return s;
}

InclusionRealization empty_realization(double side)
{
    InclusionRealization r;
    r.region = Box{0, 0, side, side};
    r.spec = fixed_disk();
    return r;
}

std::shared_ptr<const DirichletModeTable> cell_table()
{
    static auto t = std::make_shared<const DirichletModeTable>(
        dirichlet_modes(Shape{ShapeKind::Disk, {0.5, 0.5}, 0.3}, 1.0 / 32.0, 12, 1.0, 16.0, false));
    return t;
}

} // namespace

TEST_SUITE("homogenization") {

TEST_CASE("no inclusions: correctors vanish and A1hom = A1 exactly")
{
    Mat2 A1;
    A1 << 3.0, 0.5, 0.5, 2.0;
    const auto n = corrector_cells(empty_realization(2.0), A1, 1.0 / 16.0);
    CHECK(n[0].nodal.cwiseAbs().maxCoeff() < 1e-13);
    CHECK(n[1].nodal.cwiseAbs().maxCoeff() < 1e-13);
    const Mat2 A = effective_tensor(n, A1);
    CHECK((A - A1).norm() <= 1e-14 * A1.norm());
}

TEST_CASE("single disk: mean zero, odd/even symmetry")
{
    const auto real = sample_realization(fixed_disk(), Box{0, 0, 1, 1}, 1);
    REQUIRE(real.inclusions.size() == 1);
    const auto n = corrector_cells(real, Mat2::Identity(), 1.0 / 32.0);
    for (const auto& c : n) {
        CHECK(c.mean_zero);
        CHECK(std::abs(c.cell_mean) < 1e-10);
        CHECK(c.residual < 1e-10);
    }
    const Mesh& m = n[0].mesh;
    double odd = 0.0, even = 0.0, scale = n[0].nodal.cwiseAbs().maxCoeff();
    for (int j = 0; j <= m.ny; ++j)
        for (int i = 0; i <= m.nx; ++i) {
            const double a = n[0].nodal[m.node_id(i, j)];
            odd = std::max(odd, std::abs(a + n[0].nodal[m.node_id(m.nx - i, j)]));
            even = std::max(even, std::abs(a - n[0].nodal[m.node_id(i, m.ny - j)]));
        }
    CHECK(scale > 1e-3);
    CHECK(odd <= 1e-8 * scale);
    CHECK(even <= 1e-8 * scale);
}

TEST_CASE("periodic disks: isotropic tensor inside the Voigt-Reuss sandwich")
{
    const auto T = homogenized_tensor(fixed_disk(), Mat2::Identity(), 1, 1.0 / 32.0, 2, 1);
    CHECK(T.within_bounds(1e-12));
    CHECK(T.A(0, 0) == doctest::Approx(T.A(1, 1)).epsilon(1e-10));
    CHECK(std::abs(T.A(0, 1)) < 1e-10);
    CHECK(T.A(0, 0) <= 1.0 - T.volume_fraction);
    CHECK(T.A(0, 0) <= T.hashin_shtrikman + 0.02);
    CHECK(T.volume_fraction == doctest::Approx(std::numbers::pi * 0.09).epsilon(0.05));
}

TEST_CASE("jittered ensemble: off-diagonal within 3 standard errors")
{
    RandomMediumSpec s = fixed_disk();
    s.jitter = 0.125;
    s.jitter_quantum = 1.0 / 16.0;
    const auto T = homogenized_tensor(s, 10.0 * Mat2::Identity(), 4, 1.0 / 16.0, 8, 7);
    CHECK(T.samples.size() == 8);
    CHECK(std::abs(T.A(0, 1)) <= 3.0 * T.stderr_(0, 1));
    CHECK(T.within_bounds());
}

TEST_CASE("defect eigenproblem against the radial oracle")
{
    const auto ens = make_ensemble(cell_table(), fixed_disk(), 1, 1);
    const auto gap = gap_intervals(ens, Interval{0.0, 150.0}, 0.05).gaps.front();
    const Mat2 Ahom = 5.0 * Mat2::Identity();
    const DefectSpec d{0.5, 10.0 * Mat2::Identity()};
    auto macro = std::make_shared<const MacroProblem>(assemble_macro(Ahom, d, Box::centered(2.0), 1.0 / 32.0));
    const auto sol = defect_eigenproblem(macro, ens, gap);
    auto bf = [&](double l) { return beta(ens, l).value; };
    const auto oracle = radial_oracle(5.0, 10.0, 0.5, bf, gap);
    REQUIRE(!sol.pairs.empty());
    REQUIRE(!oracle.empty());
    CHECK(oracle.front().angular == 0);
    CHECK(sol.pairs.front().lambda0 == doctest::Approx(oracle.front().lambda).epsilon(2e-3));
    for (const auto& p : sol.pairs) {
        CHECK(gap.contains(p.lambda0));
        CHECK(p.u0.dot(macro->op.M * p.u0) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(p.energy_defect <= 1e-6);
        CHECK(p.beta < 0.0);
        // energy identity evaluated here as well
        const double lhs = p.u0.dot(macro->op.K * p.u0);
        const double rhs = p.beta * p.u0.dot(macro->M_out * p.u0) + p.lambda0 * p.u0.dot(macro->M_in * p.u0);
        CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(lhs));
    }
}

TEST_CASE("a vanishing defect has no mode in the gap")
{
    const auto ens = make_ensemble(cell_table(), fixed_disk(), 1, 1);
    const auto gap = gap_intervals(ens, Interval{0.0, 150.0}, 0.05).gaps.front();
    const Mat2 Ahom = 5.0 * Mat2::Identity();
    const DefectSpec d{1e-3, Ahom};
    auto macro = std::make_shared<const MacroProblem>(assemble_macro(Ahom, d, Box::centered(2.0), 1.0 / 32.0));
    CHECK(defect_eigenproblem(macro, ens, gap).pairs.empty());
    auto bf = [&](double l) { return beta(ens, l).value; };
    CHECK(radial_oracle(5.0, 5.0, 1e-3, bf, gap).empty());
}

TEST_CASE("microscopic component identities")
{
    const auto ens = make_ensemble(cell_table(), fixed_disk(), 1, 1);
    const auto zero = microscopic_component(0.0, 1.0, ens);
    CHECK(zero.mean_factor() == 0.0);
    CHECK(zero.norm_sq() == 0.0);

    const double l0 = 75.0;
    const auto mc = microscopic_component(l0, 2.0, ens);
    CHECK(l0 + l0 * mc.mean_factor() == doctest::Approx(beta(ens, l0).value).epsilon(1e-12));
    const Vec b = b_field(*cell_table(), l0);
    const double direct = b.dot(cell_table()->problem->op.M * b);
    CHECK(mc.mean_b2 == doctest::Approx(direct).epsilon(1e-8));
    CHECK(mc.norm_sq() == doctest::Approx(l0 * l0 * 2.0 * mc.mean_b2).epsilon(1e-14));
}

TEST_CASE("theta bound")
{
    CHECK(theta_bound(-1.0, Mat2::Identity()) == doctest::Approx(0.95));
    CHECK(theta_bound(-1e-12, Mat2::Identity()) < 1e-5);
    CHECK_THROWS_AS(theta_bound(0.0, Mat2::Identity()), DomainError);
}

} // TEST_SUITE
