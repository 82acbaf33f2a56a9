#include "hcd/sparse_ldlt.hpp"

#include <cholmod.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hcd {

struct Ldlt::Impl {
    cholmod_common common{};
    cholmod_factor* factor = nullptr;
    SpMat upper;
    int n = 0;

    Impl() { cholmod_start(&common); }
    ~Impl()
    {
        if (factor != nullptr)
            cholmod_free_factor(&factor, &common);
        cholmod_finish(&common);
    }

    cholmod_sparse view()
    {
        cholmod_sparse s{};
        s.nrow = static_cast<std::size_t>(n);
        s.ncol = static_cast<std::size_t>(n);
        s.nzmax = static_cast<std::size_t>(upper.nonZeros());
        s.p = upper.outerIndexPtr();
        s.i = upper.innerIndexPtr();
        s.x = upper.valuePtr();
        s.stype = 1;
        s.itype = CHOLMOD_INT;
        s.xtype = CHOLMOD_REAL;
        s.dtype = CHOLMOD_DOUBLE;
        s.sorted = 1;
        s.packed = 1;
        return s;
    }

    void load(const SpMat& a)
    {
        upper = a.triangularView<Eigen::Upper>();
        upper.makeCompressed();
    }
};

Ldlt::Ldlt(const SpMat& a)
    : impl_(std::make_unique<Impl>())
{
    if (a.rows() != a.cols())
        throw std::invalid_argument("Ldlt: matrix must be square");
    impl_->n = static_cast<int>(a.rows());
    auto& c = impl_->common;
    c.supernodal = CHOLMOD_SIMPLICIAL;
    c.final_ll = 0;
    c.final_asis = 1;
    c.print = 0;
    c.error_handler = nullptr;
    impl_->load(a);
    auto s = impl_->view();
    impl_->factor = cholmod_analyze(&s, &c);
    if (impl_->factor == nullptr)
        throw NumericalError("Ldlt: symbolic analysis failed");
}

Ldlt::~Ldlt() = default;
Ldlt::Ldlt(Ldlt&&) noexcept = default;
Ldlt& Ldlt::operator=(Ldlt&&) noexcept = default;

int Ldlt::size() const { return impl_->n; }

double Ldlt::factor_bytes() const { return impl_->common.lnz * (sizeof(double) + sizeof(int)); }

bool Ldlt::factorize(const SpMat& a)
{
    impl_->load(a);
    auto s = impl_->view();
    auto& c = impl_->common;
    cholmod_factorize(&s, impl_->factor, &c);
    if (c.status != CHOLMOD_OK || impl_->factor->minor < impl_->factor->n)
        return false;
    const auto* lp = static_cast<const int*>(impl_->factor->p);
    const auto* lx = static_cast<const double*>(impl_->factor->x);
    double dmax = 0.0;
    for (int j = 0; j < impl_->n; ++j) {
        const double d = lx[lp[j]];
        if (!std::isfinite(d))
            return false;
        dmax = std::max(dmax, std::abs(d));
    }
    for (int j = 0; j < impl_->n; ++j) {
        if (std::abs(lx[lp[j]]) <= 1e-14 * dmax)
            return false;
    }
    return true;
}

Inertia Ldlt::inertia() const
{
    Inertia in;
    const auto* lp = static_cast<const int*>(impl_->factor->p);
    const auto* lx = static_cast<const double*>(impl_->factor->x);
    for (int j = 0; j < impl_->n; ++j) {
        const double d = lx[lp[j]];
        if (d < 0.0)
            ++in.negative;
        else if (d > 0.0)
            ++in.positive;
        else
            ++in.zero;
    }
    return in;
}

Vec Ldlt::solve(const Vec& b) const
{
    auto& c = impl_->common;
    cholmod_dense rhs{};
    rhs.nrow = static_cast<std::size_t>(impl_->n);
    rhs.ncol = 1;
    rhs.nzmax = rhs.nrow;
    rhs.d = rhs.nrow;
    rhs.x = const_cast<double*>(b.data());
    rhs.xtype = CHOLMOD_REAL;
    rhs.dtype = CHOLMOD_DOUBLE;
    cholmod_dense* x = cholmod_solve(CHOLMOD_A, impl_->factor, &rhs, &c);
    if (x == nullptr)
        throw NumericalError("Ldlt: solve failed");
    Vec out = Eigen::Map<const Vec>(static_cast<const double*>(x->x), impl_->n);
    cholmod_free_dense(&x, &c);
    return out;
}

SpMat shifted(const SpMat& K, const SpMat& M, double sigma)
{
    const bool same = K.isCompressed() && M.isCompressed() && K.nonZeros() == M.nonZeros()
                      && std::equal(K.outerIndexPtr(), K.outerIndexPtr() + K.outerSize() + 1, M.outerIndexPtr())
                      && std::equal(K.innerIndexPtr(), K.innerIndexPtr() + K.nonZeros(), M.innerIndexPtr());
    if (!same)
        return K - sigma * M;
    SpMat a = K;
    double* v = a.valuePtr();
    const double* m = M.valuePtr();
    for (Eigen::Index t = 0; t < a.nonZeros(); ++t)
        v[t] -= sigma * m[t];
    return a;
}

double factorize_shifted(Ldlt& f, const SpMat& K, const SpMat& M, double sigma)
{
    const double scale = std::max(1.0, std::abs(sigma));
    double s = sigma;
    for (int attempt = 0; attempt <= 3; ++attempt) {
        if (f.factorize(shifted(K, M, s)))
            return s;
        s = sigma + (attempt + 1) * 1e-12 * scale;
    }
    std::ostringstream msg;
    msg << "factorization of K - sigma M singular at sigma = " << sigma << " after 3 perturbations";
    throw NumericalError(msg.str());
}

int count_below(const SpMat& K, const SpMat& M, double sigma)
{
    Ldlt f(shifted(K, M, sigma));
    factorize_shifted(f, K, M, sigma);
    return f.inertia().negative;
}

} // namespace hcd
