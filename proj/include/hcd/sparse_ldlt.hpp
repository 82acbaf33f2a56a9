#pragma once

// Sparse symmetric LDL^T factorization with inertia. Backed by CHOLMOD's
// simplicial LDL^T; one symbolic analysis is reused across numeric shifts.

#include "hcd/fem.hpp"

#include <memory>

namespace hcd {

struct Inertia {
    int negative = 0;
    int zero = 0;
    int positive = 0;
};

class Ldlt {
public:
    /// Symbolic analysis of the pattern of `a` (only the upper triangle is read).
    explicit Ldlt(const SpMat& a);
    ~Ldlt();
    Ldlt(Ldlt&&) noexcept;
    Ldlt& operator=(Ldlt&&) noexcept;
    Ldlt(const Ldlt&) = delete;
    Ldlt& operator=(const Ldlt&) = delete;

    /// Numeric factorization. Returns false on a zero or non-finite pivot.
    /// `a` must have the pattern given at construction.
    bool factorize(const SpMat& a);
    Inertia inertia() const;
    Vec solve(const Vec& b) const;
    int size() const;
    /// Predicted factor storage in bytes, available after construction.
    double factor_bytes() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// K - sigma*M. Uses a value-wise combination when the two patterns coincide.
SpMat shifted(const SpMat& K, const SpMat& M, double sigma);

/// Factorizes K - sigma*M (f must have been analyzed on that pattern), nudging sigma by 1e-12*scale (scale = max(1,|sigma|))
/// up to three times when the factorization is singular. Returns the shift used.
/// Throws NumericalError after the retries are exhausted.
double factorize_shifted(Ldlt& f, const SpMat& K, const SpMat& M, double sigma);

/// Number of eigenvalues of K u = lambda M u strictly below sigma.
int count_below(const SpMat& K, const SpMat& M, double sigma);

} // namespace hcd
