#include "hcd/quasimode.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hcd;

namespace {

RandomMediumSpec fixed_disk()
{
    RandomMediumSpec s;
    s.r_min = s.r_max = 0.3;
    return s;
}

struct Small {
    double eps = 0.25;
    InclusionRealization real;
    EpsProblem prob;
};

Small small_problem(double eps, double half, int per_cell, double R = 0.5, const Mat2& A2 = Mat2::Identity())
{
    Small s;
    s.eps = eps;
    s.real = sample_realization(fixed_disk(), Box::centered(half / eps), 1);
    s.prob = assemble_eps_problem(s.real, eps, DefectSpec{R, A2}, Box::centered(half), eps / per_cell,
                                  Mat2::Identity());
    return s;
}

} // namespace

TEST_SUITE("quasimode") {

TEST_CASE("harmonic extension: affine fields are kept, zero traces give zero")
{
    const auto s = small_problem(0.25, 1.0, 16);
    const Mesh& m = s.prob.mesh();
    std::vector<int> label(static_cast<std::size_t>(m.num_elements()));
    for (int e = 0; e < m.num_elements(); ++e)
        label[static_cast<std::size_t>(e)] = s.prob.geom.inclusion_at(m.element_center(e));
    const auto interior = interior_nodes(m, label);
    Vec aff(m.num_nodes()), inner = Vec::Zero(m.num_nodes());
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N;
    for (int n = 0; n < m.num_nodes(); ++n) {
        const Point p = m.node(n);
        aff[n] = 0.3 + 2.0 * p.x - p.y;
        if (interior[static_cast<std::size_t>(n)])
            inner[n] = N(rng);
    }
    const auto e1 = harmonic_extension(m, aff, s.prob.geom, 0.25 * 0.05);
    CHECK(e1.inclusions > 0);
    CHECK((e1.field - aff).cwiseAbs().maxCoeff() < 1e-10);
    const auto e2 = harmonic_extension(m, inner, s.prob.geom, 0.25 * 0.05);
    CHECK(e2.field.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("harmonic extension obeys the discrete maximum principle")
{
    const auto s = small_problem(0.25, 1.0, 16);
    const Mesh& m = s.prob.mesh();
    std::mt19937_64 rng(2);
    std::normal_distribution<double> N;
    Vec u(m.num_nodes());
    for (auto& v : u)
        v = N(rng);
    const auto ext = harmonic_extension(m, u, s.prob.geom, 0.25 * 0.05);
    const auto& kept = s.prob.geom.kept;
    std::vector<double> lo(kept.size(), 1e300), hi(kept.size(), -1e300);
    std::vector<int> changed(m.num_nodes(), -1);
    for (int n = 0; n < m.num_nodes(); ++n)
        if (ext.field[n] != u[n])
            changed[n] = s.prob.geom.inclusion_at(m.node(n));
    for (int n = 0; n < m.num_nodes(); ++n) {
        if (changed[n] >= 0)
            continue;
        const Point p = m.node(n);
        for (std::size_t k = 0; k < kept.size(); ++k)
            if (std::hypot(p.x - kept[k].center.x, p.y - kept[k].center.y) <= kept[k].radius + 2.0 * m.h) {
                lo[k] = std::min(lo[k], u[n]);
                hi[k] = std::max(hi[k], u[n]);
            }
    }
    int interior = 0;
    for (int n = 0; n < m.num_nodes(); ++n) {
        if (changed[n] < 0)
            continue;
        ++interior;
        CHECK(ext.field[n] >= lo[changed[n]] - 1e-12);
        CHECK(ext.field[n] <= hi[changed[n]] + 1e-12);
    }
    CHECK(interior > 0);
}

TEST_CASE("b^eps at lambda0 = 0 is the scaled torsion function")
{
    const double eps = 0.25;
    // worst relative error at the inclusion centres against r^2 / (4 eps^2)
    auto centre_error = [&](int per_cell) {
        const auto s = small_problem(eps, 1.0, per_cell);
        const Mesh& m = s.prob.mesh();
        const Vec b = realize_b_eps(m, s.prob.geom, 0.0);
        double worst = 0.0;
        for (const auto& k : s.prob.geom.kept) {
            const int i = static_cast<int>(std::lround((k.center.x - m.box.x0) / m.h));
            const int j = static_cast<int>(std::lround((k.center.y - m.box.y0) / m.h));
            const double expect = k.radius * k.radius / (4.0 * eps * eps);
            worst = std::max(worst, std::abs(b[m.node_id(i, j)] - expect) / expect);
        }
        for (int n = 0; n < m.num_nodes(); ++n)
            if (s.prob.geom.phase_unchecked(m.node(n)) != Phase::Inclusion)
                CHECK(b[n] == 0.0);
        CHECK(!s.prob.geom.kept.empty());
        return worst;
    };
    const double coarse = centre_error(32);
    const double fine = centre_error(64);
    CHECK(fine < coarse);
    CHECK(fine <= 0.03);
}

TEST_CASE("quasimode pieces and the resolvent certificate")
{
    const double eps = 0.25;
    const auto s = small_problem(eps, 2.0, 16);
    const Mesh& m = s.prob.mesh();
    const auto macro = assemble_macro(5.0 * Mat2::Identity(), DefectSpec{0.5, Mat2::Identity()}, Box::centered(2.0),
                                      1.0 / 16.0);
    const auto low = eigs_nearest(macro.op.K, macro.op.M, 0.0, 1);
    const Vec u0 = low.vectors.col(0);
    auto corr = corrector_cells(s.real, Mat2::Identity(), 1.0 / 16.0);
    corr[0].nodal.setZero();
    corr[1].nodal.setZero();

    const auto mode = transfer_mode(macro, u0, 0.0, m);
    const Vec b = realize_b_eps(m, s.prob.geom, 0.0);
    const auto qm = build_quasimode(m, mode, b, corr, eps, 0.5, CutoffSchedule{});
    CHECK((qm.nodal - mode.u0).cwiseAbs().maxCoeff() < 1e-14);

    // nonzero lambda0: defect nodes still carry u0 exactly
    const auto mode2 = transfer_mode(macro, u0, 20.0, m);
    const Vec b2 = realize_b_eps(m, s.prob.geom, 20.0);
    const auto corr2 = corrector_cells(s.real, Mat2::Identity(), 1.0 / 16.0);
    const auto qm2 = build_quasimode(m, mode2, b2, corr2, eps, 0.5, CutoffSchedule{});
    for (int n = 0; n < m.num_nodes(); ++n)
        if (norm(m.node(n)) < 0.5)
            CHECK(qm2.nodal[n] == mode2.u0[n]);

    // exact eigenvector: fixed point, certificate ~ 0
    const auto w = eigs_nearest(s.prob.op.K, s.prob.op.M, 10.0, 1);
    const Vec v = w.vectors.col(0);
    const Vec vh = resolvent_image(s.prob.op, v, w.eigenvalues[0]);
    CHECK((vh - v).norm() <= 1e-7 * v.norm());
    CHECK(quasimode_report(s.prob.op, v, vh, w.eigenvalues[0]).certificate <= 1e-8);

    const Vec z = Vec::Zero(s.prob.op.size());
    CHECK(resolvent_image(s.prob.op, z, 3.0).norm() == 0.0);
    CHECK_THROWS(quasimode_report(s.prob.op, z, z, 3.0));

    // resolvent bound ||u_hat||_M <= (lambda0 + 1) ||u||_M
    const Vec u = s.prob.op.from_nodes(qm2.nodal);
    const Vec uh = resolvent_image(s.prob.op, u, 20.0);
    auto mnorm = [&](const Vec& x) { return std::sqrt(x.dot(s.prob.op.M * x)); };
    CHECK(mnorm(uh) <= 21.0 * mnorm(u) * (1.0 + 1e-12));

    // certificate soundness: an eigenvalue lies within the certificate
    const auto rep = quasimode_report(s.prob.op, u, uh, 20.0);
    CHECK(count_in_window(s.prob.op, Interval{20.0 - rep.certificate, 20.0 + rep.certificate}) >= 1);

    CHECK_THROWS_AS(build_quasimode(m, mode, b, corr, eps, 1.9, CutoffSchedule{}), ConfigError);
}

TEST_CASE("decay fits on synthetic fields")
{
    const Mesh m = build_mesh(Box::centered(2.0), 1.0 / 64.0, Boundary::Dirichlet);
    Vec e(m.num_nodes()), c(m.num_nodes());
    for (int n = 0; n < m.num_nodes(); ++n) {
        e[n] = std::exp(-norm(m.node(n)));
        c[n] = 1.0;
    }
    const auto fe = decay_fit(m, e, 0.75, 1.75, 0.25, -10.0, 10.0 * Mat2::Identity());
    CHECK(fe.alpha == doctest::Approx(1.0).epsilon(0.02));
    CHECK(fe.bound == doctest::Approx(1.0));
    CHECK(fe.radii.size() == 4);
    const auto fc = decay_fit(m, c, 0.75, 1.75, 0.25, -10.0, Mat2::Identity());
    CHECK(std::abs(fc.alpha) < 1e-3);
    CHECK_THROWS_AS(decay_fit(m, e, 0.75, 1.75, 0.5, -1.0, Mat2::Identity()), ConfigError);
}

TEST_CASE("projection mass: exact values and certified bounds")
{
    const auto s = small_problem(0.25, 1.0, 16);
    const auto& op = s.prob.op;
    const Interval win{20.0, 130.0};
    const auto w = eigs_in_window(op, win, EigenOptions{1e-10, 400});
    REQUIRE(w.complete);
    const Vec v = w.vectors.col(0);
    CHECK(projection_mass(op, v, w) == doctest::Approx(1.0).epsilon(1e-8));

    std::mt19937_64 rng(4);
    std::normal_distribution<double> N;
    Vec u(op.size());
    for (auto& x : u)
        x = N(rng);
    Vec orth = u - w.vectors * (w.vectors.transpose() * (op.M * u));
    CHECK(projection_mass(op, orth, w) < 1e-8);

    const double exact = projection_mass(op, u, w);
    const auto bnd = projection_mass_bounds(op, u, win, 80);
    CHECK(bnd.lower <= exact + 1e-8);
    CHECK(bnd.upper >= exact - 1e-8);
    CHECK(bnd.upper - bnd.lower < 0.5);

    const auto ev = projection_mass_bounds(op, v, win, 40);
    CHECK(ev.lower >= 1.0 - 1e-6);
}

TEST_CASE("two-scale diagnostics without inclusions reduce to discretization error")
{
    const double eps = 0.25;
    InclusionRealization empty;
    empty.region = Box::centered(2.0 / eps);
    empty.spec = fixed_disk();
    const DefectSpec d{0.5, 3.0 * Mat2::Identity()};
    const auto prob = assemble_eps_problem(empty, eps, d, Box::centered(2.0), eps / 16.0, Mat2::Identity());
    const auto macro = assemble_macro(Mat2::Identity(), d, Box::centered(2.0), eps / 16.0);
    const auto hom = eigs_nearest(macro.op.K, macro.op.M, 0.0, 1);
    const auto epsw = eigs_nearest(prob.op.K, prob.op.M, 0.0, 1);
    const auto mode = transfer_mode(macro, hom.vectors.col(0), hom.eigenvalues[0], prob.mesh());
    const Vec b = Vec::Zero(prob.mesh().num_nodes());
    const auto ts = two_scale_diagnostics(prob, epsw.vectors.col(0), epsw.eigenvalues[0], mode, b, eps * 0.05);
    CHECK(ts.l2_error < 1e-6);
    CHECK(ts.eigen_error < 1e-6);
    CHECK(std::abs(ts.sign) == 1.0);
}

} // TEST_SUITE
