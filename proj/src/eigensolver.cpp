#include "hcd/eigensolver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace hcd {

namespace {

Vec random_vector(int n, std::mt19937_64& rng)
{
    Vec v(n);
    for (int i = 0; i < n; ++i)
        v[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    return v;
}

/// Two passes of classical Gram-Schmidt against the first `k` columns of V.
Vec orthogonalize(const Eigen::MatrixXd& V, int k, const SpMat& B, Vec w, Vec* coeffs)
{
    if (coeffs != nullptr)
        coeffs->setZero(k);
    for (int pass = 0; pass < 2 && k > 0; ++pass) {
        const Vec bw = B * w;
        const Vec c = V.leftCols(k).transpose() * bw;
        w.noalias() -= V.leftCols(k) * c;
        if (coeffs != nullptr)
            *coeffs += c;
    }
    return w;
}

double b_norm(const SpMat& B, const Vec& w) { return std::sqrt(std::max(0.0, w.dot(B * w))); }

std::vector<int> order_by(const Vec& theta, Select select)
{
    std::vector<int> idx(static_cast<std::size_t>(theta.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (select == Select::LargestMagnitude)
            return std::abs(theta[a]) > std::abs(theta[b]);
        return theta[a] > theta[b];
    });
    return idx;
}

/// Deterministic sign: the largest-magnitude entry (first on ties) is positive.
void fix_sign(Eigen::Ref<Vec> x)
{
    Eigen::Index imax = 0;
    x.cwiseAbs().maxCoeff(&imax);
    if (x[imax] < 0.0)
        x = -x;
}

} // namespace

LanczosResult lanczos(const std::function<Vec(const Vec&)>& op, const SpMat& B, int nev,
                      Select select, const EigenOptions& opt)
{
    const int n = static_cast<int>(B.rows());
    LanczosResult out;
    nev = std::min(nev, n);
    if (nev <= 0)
        return out;
    const int m = std::min(n, std::max(2 * nev + 16, 32));
    std::mt19937_64 rng(opt.seed);

    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, m);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, m);
    Vec v0 = random_vector(n, rng);
    V.col(0) = v0 / b_norm(B, v0);

    int k = 0;
    double beta = 0.0;
    Vec f;
    Vec theta;
    Eigen::MatrixXd Y;
    std::vector<int> idx;

    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        out.restarts = restart;
        for (int j = k; j < m; ++j) {
            Vec c;
            Vec w = orthogonalize(V, j + 1, B, op(V.col(j)), &c);
            H.col(j).head(j + 1) += c;
            beta = b_norm(B, w);
            if (j + 1 == m) {
                f = std::move(w);
                break;
            }
            const double scale = std::max(1e-300, H.topLeftCorner(j + 1, j + 1).cwiseAbs().maxCoeff());
            if (beta <= 1e-13 * scale) {
                // Invariant subspace: continue from a fresh direction.
                Vec r = orthogonalize(V, j + 1, B, random_vector(n, rng), nullptr);
                V.col(j + 1) = r / b_norm(B, r);
                H(j + 1, j) = 0.0;
            } else {
                V.col(j + 1) = w / beta;
                H(j + 1, j) = beta;
            }
        }

        const Eigen::MatrixXd Hs = 0.5 * (H + H.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs);
        theta = es.eigenvalues();
        Y = es.eigenvectors();
        idx = order_by(theta, select);

        if (m == n)
            beta = 0.0;
        int converged = 0;
        for (int i = 0; i < nev; ++i) {
            const double th = theta[idx[static_cast<std::size_t>(i)]];
            const double est = std::abs(beta * Y(m - 1, idx[static_cast<std::size_t>(i)]));
            if (est <= 0.1 * opt.tol * std::max(std::abs(th), 1e-300))
                ++converged;
            else
                break;
        }
        out.converged = converged;
        if (converged == nev || restart == opt.max_restarts)
            break;

        // Thick restart on the p best Ritz vectors plus the residual direction.
        const int p = std::min(m - 1, nev + std::max((m - nev) / 2, 1));
        Eigen::MatrixXd Yp(m, p);
        for (int i = 0; i < p; ++i)
            Yp.col(i) = Y.col(idx[static_cast<std::size_t>(i)]);
        Eigen::MatrixXd Vp = V * Yp;
        V.leftCols(p) = Vp;
        H.setZero();
        for (int i = 0; i < p; ++i) {
            H(i, i) = theta[idx[static_cast<std::size_t>(i)]];
            H(p, i) = beta * Yp(m - 1, i);
        }
        if (beta <= 1e-300) {
            Vec r = orthogonalize(V, p, B, random_vector(n, rng), nullptr);
            V.col(p) = r / b_norm(B, r);
            H.row(p).setZero();
        } else {
            Vec r = orthogonalize(V, p, B, f / beta, nullptr);
            V.col(p) = r / b_norm(B, r);
        }
        k = p;
    }

    out.theta.resize(nev);
    Eigen::MatrixXd Ysel(m, nev);
    for (int i = 0; i < nev; ++i) {
        out.theta[i] = theta[idx[static_cast<std::size_t>(i)]];
        Ysel.col(i) = Y.col(idx[static_cast<std::size_t>(i)]);
    }
    out.ritz = V * Ysel;
    return out;
}

double relative_residual(const SpMat& K, const SpMat& M, const Vec& x, double lam)
{
    const Vec mx = M * x;
    const double denom = std::max(std::abs(lam), 1.0) * mx.norm();
    if (denom == 0.0)
        return std::numeric_limits<double>::infinity();
    return (K * x - lam * mx).norm() / denom;
}

int count_in_window(const SpMat& K, const SpMat& M, const Interval& window)
{
    if (window.empty())
        return 0;
    Ldlt f(shifted(K, M, window.lo));
    factorize_shifted(f, K, M, window.lo);
    const int below_lo = f.inertia().negative;
    // Closed upper end: nudge just past hi so an eigenvalue at hi is counted.
    const double hi = window.hi + 1e-12 * std::max(1.0, std::abs(window.hi));
    factorize_shifted(f, K, M, hi);
    return f.inertia().negative - below_lo;
}

SpectralWindowResult eigs_nearest(const SpMat& K, const SpMat& M, double sigma, int nev,
                                  const EigenOptions& opt)
{
    SpectralWindowResult res;
    const int n = static_cast<int>(K.rows());
    nev = std::min(nev, n);
    Ldlt fac(shifted(K, M, sigma));
    if (fac.factor_bytes() > opt.memory_budget) {
        std::ostringstream msg;
        msg << "shift-invert factor needs " << fac.factor_bytes() / 1e9 << " GB, budget "
            << opt.memory_budget / 1e9 << " GB";
        throw NumericalError(msg.str());
    }
    const double s = factorize_shifted(fac, K, M, sigma);
    res.shift = s;
    if (nev <= 0)
        return res;
    const auto op = [&](const Vec& x) { return fac.solve(M * x); };
    const LanczosResult lz = lanczos(op, M, nev, Select::LargestMagnitude, opt);

    struct Pair {
        double lam;
        Vec x;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < lz.theta.size(); ++i) {
        Vec x = lz.ritz.col(i);
        const double xm = x.dot(M * x);
        if (!(xm > 0.0))
            continue;
        x /= std::sqrt(xm);
        pairs.push_back({x.dot(K * x), std::move(x)});
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.lam < b.lam; });

    // Re-orthonormalize clusters in ascending order.
    const double scale = std::max(1.0, std::abs(s));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (std::abs(pairs[i].lam - pairs[j].lam) < 1e-6 * scale)
                pairs[i].x -= pairs[j].x.dot(M * pairs[i].x) * pairs[j].x;
        }
        pairs[i].x /= std::sqrt(pairs[i].x.dot(M * pairs[i].x));
        fix_sign(pairs[i].x);
    }

    res.vectors.resize(n, static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        res.eigenvalues.push_back(pairs[i].lam);
        res.vectors.col(static_cast<Eigen::Index>(i)) = pairs[i].x;
        const double r = relative_residual(K, M, pairs[i].x, pairs[i].lam);
        res.residuals.push_back(r);
        if (r <= opt.tol)
            ++res.converged_count;
    }
    return res;
}

namespace {

SpectralWindowResult window_direct(const SpMat& K, const SpMat& M, const Interval& window, int expected,
                                   const EigenOptions& opt, double shift, bool use_center);

struct Slice {
    Interval window;
    int count;
};

// Cuts `window` at inertia-count bisection points until each piece holds at most k_max.
void cut(const SpMat& K, const SpMat& M, const Slice& s, int k_max, std::vector<Slice>& out)
{
    const double width_floor = 1e-9 * std::max(1.0, std::abs(s.window.hi));
    if (s.count <= k_max || s.window.width() <= width_floor) {
        out.push_back(s);
        return;
    }
    const double mid = s.window.center();
    const Slice left{{s.window.lo, mid}, count_in_window(K, M, {s.window.lo, mid})};
    const Slice right{{mid, s.window.hi}, s.count - left.count};
    cut(K, M, left, k_max, out);
    cut(K, M, right, k_max, out);
}

} // namespace

int for_each_window_slice(const SpMat& K, const SpMat& M, const Interval& window, const EigenOptions& opt,
                          const std::function<void(const SpectralWindowResult&)>& visit)
{
    if (window.empty())
        return 0;
    const int total = count_in_window(K, M, window);
    std::vector<Slice> slices;
    cut(K, M, {window, total}, std::max(opt.k_max, 1), slices);
    int seen = 0;
    for (const Slice& s : slices) {
        if (s.count == 0)
            continue;
        EigenOptions o = opt;
        o.k_max = std::max(opt.k_max, s.count);
        SpectralWindowResult r = window_direct(K, M, s.window, s.count, o, 0.0, true);
        seen += static_cast<int>(r.eigenvalues.size());
        visit(r);
    }
    return seen;
}

SpectralWindowResult eigs_in_window(const SpMat& K, const SpMat& M, const Interval& window,
                                    const EigenOptions& opt, double shift, bool use_center)
{
    if (window.empty() || !std::isfinite(window.lo) || !std::isfinite(window.hi)) {
        SpectralWindowResult res;
        res.window = window;
        res.complete = window.empty();
        return res;
    }
    const int expected = count_in_window(K, M, window);
    if (expected <= std::max(opt.k_max, 1))
        return window_direct(K, M, window, expected, opt, shift, use_center);

    SpectralWindowResult res;
    res.window = window;
    res.expected_count = expected;
    res.shift = window.center();
    std::vector<Vec> cols;
    bool all_complete = true;
    for_each_window_slice(K, M, window, opt, [&](const SpectralWindowResult& r) {
        all_complete = all_complete && r.complete;
        for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
            res.eigenvalues.push_back(r.eigenvalues[i]);
            res.residuals.push_back(r.residuals[i]);
            cols.push_back(r.vectors.col(static_cast<Eigen::Index>(i)));
            if (r.residuals[i] <= opt.tol)
                ++res.converged_count;
        }
    });
    res.vectors.resize(K.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
        res.vectors.col(static_cast<Eigen::Index>(c)) = cols[c];
    res.complete = all_complete && static_cast<int>(cols.size()) == expected && res.converged_count == expected;
    return res;
}

namespace {

SpectralWindowResult window_direct(const SpMat& K, const SpMat& M, const Interval& window, int expected,
                                   const EigenOptions& opt, double shift, bool use_center)
{
    SpectralWindowResult res;
    res.window = window;
    if (window.empty() || !std::isfinite(window.lo) || !std::isfinite(window.hi)) {
        res.complete = window.empty();
        return res;
    }
    res.expected_count = expected;
    res.shift = use_center ? window.center() : shift;
    if (expected == 0) {
        res.complete = true;
        return res;
    }
    const int n = static_cast<int>(K.rows());
    const int cap = std::min(n, 2 * std::max(std::max(opt.k_max, 1), expected) + 2);
    int nev = std::min(expected, cap);
    SpectralWindowResult near;
    int inside = 0;
    for (;;) {
        near = eigs_nearest(K, M, res.shift, nev, opt);
        inside = 0;
        for (double lam : near.eigenvalues)
            inside += window.contains(lam) ? 1 : 0;
        if (inside >= expected || nev >= cap)
            break;
        nev = std::min(2 * nev, cap);
    }
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < near.eigenvalues.size(); ++i) {
        if (window.contains(near.eigenvalues[i]) && static_cast<int>(keep.size()) < opt.k_max)
            keep.push_back(static_cast<Eigen::Index>(i));
    }
    res.shift = near.shift;
    res.vectors.resize(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        const auto i = static_cast<std::size_t>(keep[c]);
        res.eigenvalues.push_back(near.eigenvalues[i]);
        res.residuals.push_back(near.residuals[i]);
        res.vectors.col(static_cast<Eigen::Index>(c)) = near.vectors.col(keep[c]);
        if (near.residuals[i] <= opt.tol)
            ++res.converged_count;
    }
    res.complete = static_cast<int>(keep.size()) == expected && res.converged_count == expected;
    return res;
}

} // namespace

} // namespace hcd
