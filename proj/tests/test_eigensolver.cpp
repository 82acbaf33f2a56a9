#include "hcd/eigensolver.hpp"
#include "hcd/sparse_ldlt.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace hcd;

namespace {

OperatorPair square_pi(int n)
{
    const double pi = std::numbers::pi;
    const Mesh m = build_mesh(Box{0, 0, pi, pi}, pi / n, Boundary::Dirichlet);
    return assemble_fields(m, DofMap::dirichlet(m), ElementFields::uniform(m.num_elements(), Mat2::Identity()));
}

// Random sparse SPD pair with a banded pattern.
std::pair<SpMat, SpMat> random_pair(std::mt19937_64& rng, int n)
{
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<Eigen::Triplet<double>> tk, tm;
    Eigen::VectorXd rowk = Eigen::VectorXd::Zero(n), rowm = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
        for (int off : {1, 3, 7}) {
            const int j = i + off;
            if (j >= n)
                continue;
            const double a = U(rng), b = 0.2 * U(rng);
            tk.emplace_back(i, j, a);
            tk.emplace_back(j, i, a);
            tm.emplace_back(i, j, b);
            tm.emplace_back(j, i, b);
            rowk[i] += std::abs(a);
            rowk[j] += std::abs(a);
            rowm[i] += std::abs(b);
            rowm[j] += std::abs(b);
        }
    for (int i = 0; i < n; ++i) {
        tk.emplace_back(i, i, rowk[i] + 0.01 + std::abs(U(rng)));
        tm.emplace_back(i, i, rowm[i] + 0.1 + std::abs(U(rng)));
    }
    SpMat K(n, n), M(n, n);
    K.setFromTriplets(tk.begin(), tk.end());
    M.setFromTriplets(tm.begin(), tm.end());
    return {K, M};
}

} // namespace

TEST_SUITE("eigensolver") {

TEST_CASE("square of side pi: window [1.5, 5.5] holds {2, 5, 5}")
{
    const auto op = square_pi(128);
    const auto w = eigs_in_window(op, Interval{1.5, 5.5});
    REQUIRE(w.complete);
    REQUIRE(w.eigenvalues.size() == 3);
    CHECK(w.eigenvalues[0] == doctest::Approx(2.0).epsilon(0.01));
    CHECK(w.eigenvalues[1] == doctest::Approx(5.0).epsilon(0.01));
    CHECK(w.eigenvalues[2] == doctest::Approx(5.0).epsilon(0.01));
    for (double r : w.residuals)
        CHECK(r <= 1e-8);
    CHECK(count_in_window(op, Interval{1.5, 5.5}) == static_cast<int>(w.eigenvalues.size()));

    // M-orthonormality
    const Eigen::MatrixXd G = w.vectors.transpose() * (op.M * w.vectors);
    CHECK((G - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-8);
}

TEST_CASE("counts on the square")
{
    const auto op = square_pi(64);
    CHECK(count_in_window(op, Interval{0.0, 3.0}) == 1);
    CHECK(count_in_window(op, Interval{0.0, -1.0}) == 0);
    const auto gap = eigs_in_window(op, Interval{2.2, 4.8});
    CHECK(gap.eigenvalues.empty());
    CHECK(gap.complete);
}

TEST_CASE("inertia agrees with a dense oracle on 50 random operators")
{
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size(20, 400);
    int checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = size(rng);
        const auto [K, M] = random_pair(rng, n);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(K), Eigen::MatrixXd(M),
                                                                      Eigen::EigenvaluesOnly);
        const Eigen::VectorXd ev = es.eigenvalues();
        std::uniform_real_distribution<double> U(ev.minCoeff() - 1.0, ev.maxCoeff() + 1.0);
        double lo = U(rng), hi = U(rng);
        if (lo > hi)
            std::swap(lo, hi);
        // keep the endpoints clear of the spectrum
        const double scale = ev.cwiseAbs().maxCoeff();
        bool clear = true;
        for (int i = 0; i < ev.size(); ++i)
            clear = clear && std::abs(ev[i] - lo) > 1e-8 * scale && std::abs(ev[i] - hi) > 1e-8 * scale;
        if (!clear)
            continue;
        int dense = 0;
        for (int i = 0; i < ev.size(); ++i)
            dense += ev[i] >= lo && ev[i] <= hi;
        CHECK(count_in_window(K, M, Interval{lo, hi}) == dense);
        CHECK(count_below(K, M, hi) == static_cast<int>((ev.array() < hi).count()));
        ++checked;
    }
    CHECK(checked >= 45);
}

TEST_CASE("iterative window solve agrees with the dense oracle")
{
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        const auto [K, M] = random_pair(rng, 300);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(K), Eigen::MatrixXd(M),
                                                                      Eigen::EigenvaluesOnly);
        const Eigen::VectorXd ev = es.eigenvalues();
        const double lo = 0.5 * (ev[100] + ev[101]);
        const double hi = 0.5 * (ev[110] + ev[111]);
        const auto w = eigs_in_window(K, M, Interval{lo, hi});
        REQUIRE(w.complete);
        REQUIRE(w.eigenvalues.size() == 10);
        for (int k = 0; k < 10; ++k)
            CHECK(w.eigenvalues[k] == doctest::Approx(ev[101 + k]).epsilon(1e-9));
    }
}

TEST_CASE("window slicing visits every eigenpair once")
{
    const auto op = square_pi(48);
    EigenOptions opt;
    opt.k_max = 4;
    const Interval win{1.0, 60.0};
    std::vector<double> seen;
    const int n = for_each_window_slice(op.K, op.M, win, opt, [&](const SpectralWindowResult& r) {
        CHECK(r.complete);
        seen.insert(seen.end(), r.eigenvalues.begin(), r.eigenvalues.end());
    });
    CHECK(n == count_in_window(op, win));
    CHECK(static_cast<int>(seen.size()) == n);
    std::sort(seen.begin(), seen.end());
    const auto full = eigs_in_window(op, win, EigenOptions{1e-8, 64});
    REQUIRE(full.eigenvalues.size() == seen.size());
    for (std::size_t k = 0; k < seen.size(); ++k)
        CHECK(seen[k] == doctest::Approx(full.eigenvalues[k]).epsilon(1e-8));
}

TEST_CASE("nearest eigenpairs")
{
    const auto op = square_pi(64);
    const auto r = eigs_nearest(op.K, op.M, 0.0, 3);
    REQUIRE(r.eigenvalues.size() == 3);
    CHECK(r.eigenvalues[0] == doctest::Approx(2.0).epsilon(0.01));
    CHECK(r.eigenvalues[1] == doctest::Approx(5.0).epsilon(0.01));
    for (int k = 0; k < 3; ++k)
        CHECK(relative_residual(op.K, op.M, r.vectors.col(k), r.eigenvalues[k]) <= 1e-8);
}

} // TEST_SUITE
