#include "hcd/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace hcd;

TEST_SUITE("geometry") {

TEST_CASE("degenerate law gives the integer lattice")
{
    RandomMediumSpec s;
    s.r_min = s.r_max = 0.3;
    const auto real = sample_realization(s, Box{0, 0, 4, 4}, 5);
    REQUIRE(real.inclusions.size() == 16);
    for (const auto& inc : real.inclusions) {
        CHECK(inc.shape.radius == 0.3);
        CHECK(inc.shape.center.x == doctest::Approx(inc.cell_i + 0.5));
        CHECK(inc.shape.center.y == doctest::Approx(inc.cell_j + 0.5));
    }
}

TEST_CASE("volume fraction matches pi E[r^2] within 3 standard errors")
{
    RandomMediumSpec s;
    s.r_min = 0.2;
    s.r_max = 0.3;
    const auto real = sample_realization(s, Box{0, 0, 100, 100}, 17);
    REQUIRE(real.inclusions.size() == 10000);
    double sum = 0.0, sum2 = 0.0;
    for (const auto& inc : real.inclusions) {
        const double a = inc.shape.area();
        sum += a;
        sum2 += a * a;
    }
    const double n = static_cast<double>(real.inclusions.size());
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    const double exact = std::numbers::pi * (0.04 + 0.06 + 0.09) / 3.0;
    CHECK(exact == doctest::Approx(0.1990).epsilon(1e-3));
    CHECK(std::abs(mean - exact) <= 3.0 * se);
    CHECK(s.mean_area() == doctest::Approx(exact));
}

TEST_CASE("buffers keep distinct inclusions 2 delta apart")
{
    RandomMediumSpec s;
    s.r_min = 0.2;
    s.r_max = 0.3;
    s.jitter = 0.1;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto real = sample_realization(s, Box{0, 0, 12, 12}, seed);
        double dmin = 1e9;
        for (std::size_t a = 0; a < real.inclusions.size(); ++a)
            for (std::size_t b = a + 1; b < real.inclusions.size(); ++b) {
                const auto& p = real.inclusions[a].shape;
                const auto& q = real.inclusions[b].shape;
                const double d = std::hypot(p.center.x - q.center.x, p.center.y - q.center.y) - p.radius - q.radius;
                dmin = std::min(dmin, d);
            }
        CHECK(dmin >= 2.0 * s.buffer_gap - 1e-12);
        CHECK(audit_assumption(real).ok);
    }
}

TEST_CASE("realizations are deterministic in the seed")
{
    RandomMediumSpec s;
    s.r_min = 0.2;
    s.r_max = 0.3;
    s.jitter = 0.1;
    const auto a = sample_realization(s, Box{-3, -3, 3, 3}, 9);
    const auto b = sample_realization(s, Box{-3, -3, 3, 3}, 9);
    const auto c = sample_realization(s, Box{-3, -3, 3, 3}, 10);
    std::ostringstream sa, sb, sc;
    write_realization(sa, a);
    write_realization(sb, b);
    write_realization(sc, c);
    CHECK(sa.str() == sb.str());
    CHECK(sa.str() != sc.str());

    // the same cell draws the same inclusion whatever the region
    const auto big = sample_realization(s, Box{-6, -6, 6, 6}, 9);
    for (const auto& inc : a.inclusions) {
        bool found = false;
        for (const auto& other : big.inclusions)
            found = found || (other.cell_i == inc.cell_i && other.cell_j == inc.cell_j &&
                              other.shape.center.x == inc.shape.center.x && other.shape.radius == inc.shape.radius);
        CHECK(found);
    }
}

TEST_CASE("realization text round trip")
{
    RandomMediumSpec s;
    s.r_min = 0.2;
    s.r_max = 0.3;
    s.jitter = 0.05;
    const auto a = sample_realization(s, Box{0, 0, 3, 3}, 4);
    std::stringstream ss;
    write_realization(ss, a);
    const auto b = read_realization(ss);
    REQUIRE(b.inclusions.size() == a.inclusions.size());
    for (std::size_t k = 0; k < a.inclusions.size(); ++k) {
        CHECK(b.inclusions[k].shape.center.x == a.inclusions[k].shape.center.x);
        CHECK(b.inclusions[k].shape.radius == a.inclusions[k].shape.radius);
    }
}

TEST_CASE("constraint violations are rejected")
{
    RandomMediumSpec s;
    s.r_min = 0.3;
    s.r_max = 0.3;
    s.jitter = 0.2;
    CHECK_THROWS_AS(s.validate(), ConstraintViolation);
    s.jitter = 0.0;
    s.r_min = 0.35;
    CHECK_THROWS_AS(s.validate(), ConstraintViolation);
    DefectSpec d;
    d.radius = 0.5;
    d.A2 << 1, 2, 2, 1;
    CHECK_THROWS_AS(d.validate(), ConstraintViolation);
}

TEST_CASE("scale_and_filter identity and removal")
{
    RandomMediumSpec s;
    s.r_min = s.r_max = 0.3;
    const auto real = sample_realization(s, Box{-2, -2, 2, 2}, 1);
    const auto g = scale_and_filter(real, 1.0, DefectSpec{});
    CHECK(g.kept.size() == real.inclusions.size());
    CHECK(g.removed == 0);

    InclusionRealization one;
    one.region = Box{-1, -1, 1, 1};
    one.spec = s;
    Inclusion inc;
    inc.shape = {ShapeKind::Disk, {0, 0}, 0.3};
    inc.buffer = {ShapeKind::Disk, {0, 0}, 0.35};
    one.inclusions.push_back(inc);
    const auto g1 = scale_and_filter(one, 0.5, DefectSpec{0.2, Mat2::Identity()});
    CHECK(g1.kept.empty());
    CHECK(g1.removed == 1);
}

TEST_CASE("lattice at eps 0.25 with R 0.6: kept count by brute force")
{
    RandomMediumSpec s;
    s.r_min = s.r_max = 0.3;
    const double eps = 0.25;
    const auto real = sample_realization(s, Box{-8, -8, 8, 8}, 1);
    const DefectSpec d{0.6, Mat2::Identity()};
    const auto g = scale_and_filter(real, eps, d);
    int brute = 0;
    for (const auto& inc : real.inclusions) {
        const double dist = std::hypot(eps * inc.shape.center.x, eps * inc.shape.center.y);
        if (dist - eps * inc.shape.radius > 0.6)
            ++brute;
    }
    CHECK(static_cast<int>(g.kept.size()) == brute);
    CHECK(g.removed + brute == static_cast<int>(real.inclusions.size()));
}

TEST_CASE("phase_at")
{
    RandomMediumSpec s;
    s.r_min = s.r_max = 0.3;
    const auto real = sample_realization(s, Box{-4, -4, 4, 4}, 1);
    const auto g = scale_and_filter(real, 0.25, DefectSpec{0.5, Mat2::Identity()});
    CHECK(g.phase_at({0, 0}) == Phase::Defect);
    for (const auto& k : g.kept) {
        CHECK(g.phase_at(k.center) == Phase::Inclusion);
        CHECK(g.inclusion_at(k.center) >= 0);
    }
    CHECK(g.phase_at({0.75, 0.75}) == Phase::Matrix);
    CHECK(g.phase_at({-0.75, 0.5}) == Phase::Matrix);
}

} // TEST_SUITE
