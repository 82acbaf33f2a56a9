#pragma once

#include "hcd/fem.hpp"
#include "hcd/sparse_ldlt.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace hcd {

struct EigenOptions {
    double tol = 1e-8;        // relative residual ||Ku - lam Mu|| / (max(|lam|,1) ||Mu||)
    int k_max = 24;
    int max_restarts = 60;
    std::uint64_t seed = 0x5eed;
    /// Refuse shift-invert when the predicted factor exceeds this many bytes.
    double memory_budget = 4.0e9;
};

struct SpectralWindowResult {
    Interval window;
    std::vector<double> eigenvalues;  // ascending
    Eigen::MatrixXd vectors;          // M-orthonormal columns
    std::vector<double> residuals;
    int converged_count = 0;
    int expected_count = 0;           // inertia count for the window
    bool complete = false;            // every eigenvalue in the window returned and converged
    double shift = 0.0;
};

/// Exact number of eigenvalues of K u = lam M u in [lo, hi] via Sylvester inertia.
int count_in_window(const SpMat& K, const SpMat& M, const Interval& window);
inline int count_in_window(const OperatorPair& op, const Interval& window)
{
    return count_in_window(op.K, op.M, window);
}

/// All eigenpairs in `window`, by shift-invert Lanczos about `shift` (default: centre).
SpectralWindowResult eigs_in_window(const SpMat& K, const SpMat& M, const Interval& window,
                                    const EigenOptions& opt = {}, double shift = 0.0,
                                    bool use_center = true);
inline SpectralWindowResult eigs_in_window(const OperatorPair& op, const Interval& window,
                                           const EigenOptions& opt = {})
{
    return eigs_in_window(op.K, op.M, window, opt);
}

/// Visits the eigenpairs of `window` slice by slice; each slice holds at most
/// opt.k_max eigenvalues unless it is a cluster narrower than 1e-9 relative.
/// Returns the number of eigenpairs visited.
int for_each_window_slice(const SpMat& K, const SpMat& M, const Interval& window, const EigenOptions& opt,
                          const std::function<void(const SpectralWindowResult&)>& visit);

/// The `nev` eigenpairs of K u = lam M u nearest to sigma, ascending.
SpectralWindowResult eigs_nearest(const SpMat& K, const SpMat& M, double sigma, int nev,
                                  const EigenOptions& opt = {});

/// Relative residual ||K x - lam M x|| / (max(|lam|,1) ||M x||).
double relative_residual(const SpMat& K, const SpMat& M, const Vec& x, double lam);

enum class Select : std::uint8_t { LargestMagnitude, LargestAlgebraic };

struct LanczosResult {
    Vec theta;             // wanted Ritz values, ordered by the selection rule
    Eigen::MatrixXd ritz;  // B-orthonormal Ritz vectors
    int converged = 0;
    int restarts = 0;
};

/// Thick-restart Lanczos for an operator that is self-adjoint in the inner
/// product <x,y> = x^T B y. Finds the `nev` extreme Ritz pairs under `select`.
LanczosResult lanczos(const std::function<Vec(const Vec&)>& op, const SpMat& B, int nev,
                      Select select, const EigenOptions& opt);

} // namespace hcd
