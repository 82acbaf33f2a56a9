#include "hcd/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace hcd;

namespace {

constexpr double j01sq = 5.783185962946784;

std::shared_ptr<const DirichletModeTable> disk03(double h = 1.0 / 64.0, int N = 12)
{
    static std::map<std::pair<double, int>, std::shared_ptr<const DirichletModeTable>> cache;
    auto& t = cache[{h, N}];
    if (!t)
        t = std::make_shared<const DirichletModeTable>(
            dirichlet_modes(Shape{ShapeKind::Disk, {0.5, 0.5}, 0.3}, h, N, 1.0, 16.0, false));
    return t;
}

RandomMediumSpec fixed_disk()
{
    RandomMediumSpec s;
    s.r_min = s.r_max = 0.3;
    return s;
}

} // namespace

TEST_SUITE("spectral") {

TEST_CASE("Dirichlet tables against closed forms")
{
    const auto disk = dirichlet_modes(Shape{ShapeKind::Disk, {1.25, 1.25}, 1.0}, 2.5 / 256.0, 3, 2.5, 16.0, true);
    CHECK(std::abs(disk.lambda1() - j01sq) / j01sq < 0.01);
    CHECK(std::abs(disk.lambda1_half_h - j01sq) < std::abs(disk.lambda1() - j01sq));

    const double pi2 = std::numbers::pi * std::numbers::pi;
    const auto sq = dirichlet_modes(Shape{ShapeKind::Square, {0.5, 0.5}, 0.25}, 1.0 / 128.0, 6, 1.0, 16.0, false);
    CHECK(sq.lambda1() == doctest::Approx(8.0 * pi2).epsilon(0.01));
    // (p,q) = (1,2),(2,1) have zero mean; (2,2) as well; (1,3),(3,1) do not
    CHECK(sq.eigenvalues[1] == doctest::Approx(20.0 * pi2).epsilon(0.01));
    CHECK(std::abs(sq.means[1]) < 1e-8);
    CHECK(std::abs(sq.means[2]) < 1e-8);
    CHECK(std::abs(sq.means[0]) > 1e-3);
}

TEST_CASE("poles are the eigenvalues with non-zero mean")
{
    const auto t = disk03();
    const auto poles = t->poles();
    int expected = 0;
    for (int n = 0; n < t->count(); ++n)
        expected += std::abs(t->means[n]) > 1e-6;
    CHECK(static_cast<int>(poles.size()) == expected);
    CHECK(poles.front() == t->lambda1());
}

TEST_CASE("torsion integral on the unit disk")
{
    const auto t = dirichlet_modes(Shape{ShapeKind::Disk, {1.25, 1.25}, 1.0}, 2.5 / 256.0, 12, 2.5, 16.0, false);
    const double v = b_integral(t, 0.0).value;
    CHECK(v == doctest::Approx(std::numbers::pi / 8.0).epsilon(0.01));
    CHECK(v == doctest::Approx(b_integral_direct(t, 0.0)).epsilon(1e-8));
}

TEST_CASE("b integral grows towards the first pole and matches the direct solve")
{
    const auto t = disk03();
    const double l1 = t->lambda1();
    double prev = -1e300;
    for (double f : {0.5, 0.9, 0.99, 0.999, 0.9999}) {
        const double v = b_integral(*t, f * l1).value;
        CHECK(v > prev);
        prev = v;
    }
    // residue at the first pole is the squared mean of the first mode
    CHECK(prev * 1e-4 * l1 == doctest::Approx(t->means[0] * t->means[0]).epsilon(1e-3));
    CHECK_THROWS_AS(b_integral(*t, l1 * (1.0 + 1e-8)), PoleProximityError);

    const double a = b_integral(*t, 1.0).value;
    const double d = b_integral_direct(*t, 1.0);
    CHECK(std::abs(a - d) / std::abs(d) <= 1e-6);
}

TEST_CASE("beta identities")
{
    const auto t = disk03();
    const auto ens = make_ensemble(t, fixed_disk(), 16, 1);
    CHECK(beta(ens, 0.0).value == 0.0);
    CHECK(beta(empty_ensemble(), 0.0).value == 0.0);
    CHECK(beta(empty_ensemble(), 7.5).value == 7.5);
    const double b10 = 10.0 + 100.0 * b_integral_direct(*t, 10.0);
    CHECK(std::abs(beta(ens, 10.0).value - b10) / std::abs(b10) <= 1e-4);
    CHECK(ens.exact);
}

TEST_CASE("gaps of the fixed disk ensemble")
{
    const auto t = disk03();
    const auto ens = make_ensemble(t, fixed_disk(), 16, 1);
    const auto g = gap_intervals(ens, Interval{0.0, 150.0}, 0.05);
    REQUIRE(!g.empty());
    const auto& first = g.gaps.front();
    CHECK(first.lo == doctest::Approx(t->lambda1()).epsilon(1e-9));
    CHECK(std::abs(t->lambda1() - j01sq / 0.09) / (j01sq / 0.09) < 0.03);
    CHECK(std::abs(beta(ens, first.hi).value) <= 1e-5);
    CHECK(beta(ens, first.center()).value < 0.0);

    const auto none = gap_intervals(empty_ensemble(), Interval{0.0, 150.0}, 0.05);
    CHECK(none.empty());
}

TEST_CASE("window functional on a periodic lattice equals beta")
{
    const auto t = disk03(1.0 / 32.0, 12);
    const auto ens = make_ensemble(t, fixed_disk(), 1, 1);
    const auto real = sample_realization(fixed_disk(), Box{0, 0, 8, 8}, 3);
    for (double lam : {10.0, 40.0, 70.0}) {
        CHECK(ell_window(real, *t, lam, 4.0, {4.0, 4.0}) == doctest::Approx(beta(ens, lam).value).epsilon(1e-10));
        CHECK(ell_window(real, *t, 0.0, 4.0, {4.0, 4.0}) == 0.0);
    }
    const BetaInfinityEstimator est(t, fixed_disk(), 16.0, 1);
    for (double lam : {30.0, 75.0})
        CHECK(est(lam, {2.0, 4.0}) == doctest::Approx(beta(ens, lam).value).epsilon(1e-9));
    CHECK(est(0.0, {2.0, 4.0}) == 0.0);
}

TEST_CASE("beta_inf dominates beta on a random ensemble; G gaps lie inside beta gaps")
{
    RandomMediumSpec s;
    s.r_min = 0.25;
    s.r_max = 0.3;
    const auto t = disk03(1.0 / 32.0, 12);
    const auto ens = make_ensemble(t, s, 64, 1);
    const auto bg = gap_intervals(ens, Interval{0.0, 150.0}, 0.1);
    REQUIRE(!bg.empty());
    const BetaInfinityEstimator est(t, s, 32.0, 5);
    const std::vector<double> Ls{4.0, 8.0};
    const double mid = bg.gaps.front().center();
    CHECK(beta(ens, mid).value <= est(mid, Ls) + 4.0 * beta(ens, mid).stderr_);

    // where beta_inf < 0, beta < 0 up to its Monte Carlo error
    const auto G = gap_set_G(est, Ls, Interval{0.0, 150.0}, 0.1);
    REQUIRE(!G.empty());
    for (const auto& g : G.gaps)
        for (double lam : {g.lo + 1e-3 * g.width(), g.center(), g.hi - 1e-3 * g.width()}) {
            const auto b = beta(ens, lam);
            INFO("lambda ", lam, " in G gap [", g.lo, ", ", g.hi, "]");
            CHECK(b.value < 4.0 * b.stderr_);
        }
    CHECK(gap_set_G(est, Ls, Interval{5.0, 4.0}, 0.1).empty());
}

TEST_CASE("periodic ensemble: G gaps coincide with beta gaps")
{
    const auto t = disk03(1.0 / 32.0, 12);
    const auto ens = make_ensemble(t, fixed_disk(), 1, 1);
    const BetaInfinityEstimator est(t, fixed_disk(), 16.0, 1);
    const auto G = gap_set_G(est, {2.0, 4.0}, Interval{0.0, 150.0}, 0.05);
    const auto B = gap_intervals(ens, Interval{0.0, 150.0}, 0.05);
    REQUIRE(G.gaps.size() == B.gaps.size());
    for (std::size_t i = 0; i < G.gaps.size(); ++i) {
        CHECK(G.gaps[i].lo == doctest::Approx(B.gaps[i].lo).epsilon(1e-6));
        CHECK(G.gaps[i].hi == doctest::Approx(B.gaps[i].hi).epsilon(1e-6));
    }
}

} // TEST_SUITE
