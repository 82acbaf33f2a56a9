#include "hcd/homogenization.hpp"

#include "hcd/sparse_ldlt.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <sstream>

namespace hcd {

namespace {

// Gradient signs of the local shape functions, (i,j),(i+1,j),(i+1,j+1),(i,j+1).
constexpr double kSx[4] = {-1.0, 1.0, 1.0, -1.0};
constexpr double kSy[4] = {-1.0, -1.0, 1.0, 1.0};

struct CellSystem {
    Mesh mesh;
    DofMap dofs;
    std::vector<int> label;                  // inclusion index per element, -1 in the matrix
    std::vector<std::uint8_t> matrix_elements;
    SpMat K;                                 // perforated stiffness on periodic dofs
    std::vector<int> sub;                    // periodic dof -> reduced index, -1 if dropped
    int n_sub = 0;
};

CellSystem build_cell(const InclusionRealization& real, const Mat2& A1, double h)
{
    CellSystem c;
    c.mesh = build_mesh(real.region, h, Boundary::Periodic);
    c.dofs = DofMap::periodic(c.mesh);
    const ScaledGeometry geom = scale_and_filter(real, 1.0, DefectSpec{});
    const int ne = c.mesh.num_elements();
    c.label.assign(static_cast<std::size_t>(ne), -1);
    c.matrix_elements.assign(static_cast<std::size_t>(ne), 1);
    ElementFields fields = ElementFields::uniform(ne, A1, 0.0);
    for (int e = 0; e < ne; ++e) {
        const int inc = geom.inclusion_at(c.mesh.element_center(e));
        if (inc >= 0) {
            c.label[static_cast<std::size_t>(e)] = inc;
            c.matrix_elements[static_cast<std::size_t>(e)] = 0;
            fields.set(e, Mat2::Zero(), 0.0);
        }
    }
    c.K = assemble_fields(c.mesh, c.dofs, fields).K;

    // Keep dofs touching the matrix; pin the first of them to remove the constants.
    std::vector<std::uint8_t> touches(static_cast<std::size_t>(c.dofs.size()), 0);
    for (int e = 0; e < ne; ++e) {
        if (!c.matrix_elements[static_cast<std::size_t>(e)])
            continue;
        for (int n : c.mesh.element_nodes(e % c.mesh.nx, e / c.mesh.nx))
            touches[static_cast<std::size_t>(c.dofs.node_to_dof[static_cast<std::size_t>(n)])] = 1;
    }
    c.sub.assign(static_cast<std::size_t>(c.dofs.size()), -1);
    bool pinned = false;
    for (int d = 0; d < c.dofs.size(); ++d) {
        if (!touches[static_cast<std::size_t>(d)])
            continue;
        if (!pinned) {
            pinned = true;
            continue;
        }
        c.sub[static_cast<std::size_t>(d)] = c.n_sub++;
    }
    return c;
}

Vec cell_load(const CellSystem& c, const Mat2& A1, int direction)
{
    Vec f = Vec::Zero(c.dofs.size());
    const Eigen::Vector2d flux = A1.col(direction);
    const double half_h = 0.5 * c.mesh.h;
    for (int e = 0; e < c.mesh.num_elements(); ++e) {
        if (!c.matrix_elements[static_cast<std::size_t>(e)])
            continue;
        const auto nodes = c.mesh.element_nodes(e % c.mesh.nx, e / c.mesh.nx);
        for (int a = 0; a < 4; ++a)
            f[c.dofs.node_to_dof[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])]]
                -= half_h * (flux[0] * kSx[a] + flux[1] * kSy[a]);
    }
    return f;
}

SpMat restrict_to(const SpMat& K, const std::vector<int>& sub, int n)
{
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(K.nonZeros()));
    for (int c = 0; c < K.outerSize(); ++c) {
        const int sc = sub[static_cast<std::size_t>(c)];
        if (sc < 0)
            continue;
        for (SpMat::InnerIterator it(K, c); it; ++it) {
            const int sr = sub[static_cast<std::size_t>(it.row())];
            if (sr >= 0)
                t.emplace_back(sr, sc, it.value());
        }
    }
    SpMat out(n, n);
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

double uniform_mean(const Mesh& mesh, const Vec& nodal)
{
    return integrate_nodal(mesh, std::span<const double>(nodal.data(), static_cast<std::size_t>(nodal.size())))
           / mesh.box.area();
}

} // namespace

std::array<CorrectorField, 2> corrector_cells(const InclusionRealization& real, const Mat2& A1, double h)
{
    if (!is_spd(A1))
        throw ConfigError("corrector: A1 must be symmetric positive definite");
    const CellSystem c = build_cell(real, A1, h);
    const SpMat Ks = restrict_to(c.K, c.sub, c.n_sub);
    Ldlt fac(Ks);
    if (c.n_sub > 0 && !fac.factorize(Ks))
        throw NumericalError("corrector: perforated cell system is singular (matrix phase disconnected?)");

    std::vector<int> inc_label = c.label;
    const auto free = interior_nodes(c.mesh, inc_label);
    std::vector<std::uint8_t> inc_mask(c.matrix_elements.size());
    for (std::size_t e = 0; e < inc_mask.size(); ++e)
        inc_mask[e] = c.matrix_elements[e] ? 0 : 1;

    std::array<CorrectorField, 2> out;
    for (int j = 0; j < 2; ++j) {
        const Vec f = cell_load(c, A1, j);
        Vec fs(c.n_sub);
        for (int d = 0; d < c.dofs.size(); ++d)
            if (c.sub[static_cast<std::size_t>(d)] >= 0)
                fs[c.sub[static_cast<std::size_t>(d)]] = f[d];
        const Vec xs = c.n_sub > 0 ? fac.solve(fs) : Vec();
        Vec x = Vec::Zero(c.dofs.size());
        for (int d = 0; d < c.dofs.size(); ++d)
            if (c.sub[static_cast<std::size_t>(d)] >= 0)
                x[d] = xs[c.sub[static_cast<std::size_t>(d)]];

        CorrectorField& cf = out[static_cast<std::size_t>(j)];
        cf.direction = j;
        cf.mesh = c.mesh;
        cf.matrix_elements = c.matrix_elements;
        const double fnorm = f.norm();
        cf.residual = fnorm > 0.0 ? (c.K * x - f).norm() / fnorm : (c.K * x).norm();

        Vec nodal(c.mesh.num_nodes());
        for (int n = 0; n < c.mesh.num_nodes(); ++n)
            nodal[n] = x[c.dofs.node_to_dof[static_cast<std::size_t>(n)]];
        nodal = harmonic_fill(c.mesh, inc_mask, free, nodal);
        nodal.array() -= uniform_mean(c.mesh, nodal);
        cf.nodal = std::move(nodal);
        cf.cell_mean = uniform_mean(c.mesh, cf.nodal);
        cf.mean_zero = std::abs(cf.cell_mean) <= 1e-10 * std::max(1.0, cf.nodal.cwiseAbs().maxCoeff());
    }
    return out;
}

CorrectorField corrector_cell(const InclusionRealization& real, const Mat2& A1, double h, int direction)
{
    if (direction < 0 || direction > 1)
        throw std::invalid_argument("corrector_cell: direction must be 0 or 1");
    return corrector_cells(real, A1, h)[static_cast<std::size_t>(direction)];
}

Mat2 effective_tensor(const std::array<CorrectorField, 2>& n, const Mat2& A1)
{
    const Mesh& mesh = n[0].mesh;
    const double g = 0.5 / std::sqrt(3.0);
    const double gp[2] = {0.5 - g, 0.5 + g};
    const double w = 0.25 * mesh.h * mesh.h;
    Mat2 A = Mat2::Zero();
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (!n[0].matrix_elements[static_cast<std::size_t>(e)])
            continue;
        const auto nodes = mesh.element_nodes(e % mesh.nx, e / mesh.nx);
        for (double xi : gp)
            for (double eta : gp) {
                Mat2 G;  // column i: e_i + grad N_i
                for (int i = 0; i < 2; ++i) {
                    const Vec& u = n[static_cast<std::size_t>(i)].nodal;
                    const double u0 = u[nodes[0]], u1 = u[nodes[1]], u2 = u[nodes[2]], u3 = u[nodes[3]];
                    G(0, i) = ((u1 - u0) * (1 - eta) + (u2 - u3) * eta) / mesh.h;
                    G(1, i) = ((u3 - u0) * (1 - xi) + (u2 - u1) * xi) / mesh.h;
                    G(i, i) += 1.0;
                }
                A.noalias() += w * G.transpose() * A1 * G;
            }
    }
    A /= mesh.box.area();
    return 0.5 * (A + A.transpose());
}

bool HomogenizedTensor::within_bounds(double tol) const
{
    Eigen::SelfAdjointEigenSolver<Mat2> upper(voigt - A);
    Eigen::SelfAdjointEigenSolver<Mat2> lower(A - reuss);
    const double scale = std::max(1.0, voigt.norm());
    return upper.eigenvalues().minCoeff() >= -tol * scale && lower.eigenvalues().minCoeff() >= -tol * scale;
}

HomogenizedTensor homogenized_tensor(const std::vector<Mat2>& samples, const std::vector<double>& fractions,
                                     const Mat2& A1)
{
    if (samples.empty())
        throw std::invalid_argument("homogenized_tensor: at least one sample required");
    HomogenizedTensor t;
    t.samples = samples;
    t.volume_fractions = fractions;
    const double n = static_cast<double>(samples.size());
    Mat2 mean = Mat2::Zero();
    for (const auto& s : samples)
        mean += s;
    mean /= n;
    Mat2 var = Mat2::Zero();
    for (const auto& s : samples)
        var += (s - mean).cwiseAbs2();
    t.A = mean;
    t.stderr_ = samples.size() > 1 ? Mat2((var / (n - 1.0) / n).cwiseSqrt()) : Mat2::Zero();
    double f = 0.0;
    for (double v : fractions)
        f += v;
    t.volume_fraction = fractions.empty() ? 0.0 : f / static_cast<double>(fractions.size());
    t.voigt = (1.0 - t.volume_fraction) * A1;
    t.reuss = Mat2::Zero();
    const bool iso = A1(0, 1) == 0.0 && A1(0, 0) == A1(1, 1);
    t.hashin_shtrikman = iso ? A1(0, 0) * (1.0 - t.volume_fraction) / (1.0 + t.volume_fraction)
                             : std::numeric_limits<double>::quiet_NaN();
    Eigen::SelfAdjointEigenSolver<Mat2> es(t.A);
    t.lambda_max = es.eigenvalues().maxCoeff();
    return t;
}

HomogenizedTensor homogenized_tensor(const RandomMediumSpec& spec, const Mat2& A1, int n_cells, double h,
                                     int samples, std::uint64_t seed)
{
    if (samples < 1 || n_cells < 1)
        throw ConfigError("homogenized_tensor: need at least one sample of at least one cell");
    spec.validate();
    std::vector<Mat2> vals(static_cast<std::size_t>(samples));
    std::vector<double> fracs(static_cast<std::size_t>(samples));
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < samples; ++s) {
        try {
            const Box region{0.0, 0.0, static_cast<double>(n_cells), static_cast<double>(n_cells)};
            const auto real = sample_realization(spec, region, seed + static_cast<std::uint64_t>(s));
            const auto n = corrector_cells(real, A1, h);
            vals[static_cast<std::size_t>(s)] = effective_tensor(n, A1);
            double inc = 0.0;
            for (auto m : n[0].matrix_elements)
                inc += m ? 0.0 : 1.0;
            fracs[static_cast<std::size_t>(s)] = inc / static_cast<double>(n[0].matrix_elements.size());
        } catch (...) {
#pragma omp critical
            err = std::current_exception();
        }
    }
    if (err)
        std::rethrow_exception(err);
    return homogenized_tensor(vals, fracs, A1);
}

SpMat MacroProblem::pencil(double beta, double lam) const
{
    SpMat a = op.K;
    double* v = a.valuePtr();
    const double* mo = M_out.valuePtr();
    const double* mi = M_in.valuePtr();
    for (Eigen::Index t = 0; t < a.nonZeros(); ++t)
        v[t] -= beta * mo[t] + lam * mi[t];
    return a;
}

MacroProblem assemble_macro(const Mat2& A1hom, const DefectSpec& defect, const Box& box, double h)
{
    if (!is_spd(A1hom))
        throw ConfigError("assemble_macro: A1hom must be symmetric positive definite");
    defect.validate();
    MacroProblem p;
    p.A1hom = A1hom;
    p.defect = defect;
    const Mesh mesh = build_mesh(box, h, Boundary::Dirichlet);
    const int ne = mesh.num_elements();
    p.defect_elements.assign(static_cast<std::size_t>(ne), 0);
    ElementFields out = ElementFields::uniform(ne, A1hom, 1.0);
    ElementFields in = ElementFields::uniform(ne, A1hom, 0.0);
    for (int e = 0; e < ne; ++e) {
        if (defect.contains(mesh.element_center(e))) {
            p.defect_elements[static_cast<std::size_t>(e)] = 1;
            out.set(e, defect.A2, 0.0);
            in.set(e, defect.A2, 1.0);
        }
    }
    const DofMap dofs = DofMap::dirichlet(mesh);
    p.op = assemble_fields(mesh, dofs, out);
    p.M_out = p.op.M;
    p.M_in = assemble_fields(mesh, dofs, in).M;
    p.op.M = p.M_out + p.M_in;
    return p;
}

std::vector<double> nu_branches(const MacroProblem& macro, double beta, int k, const EigenOptions& eig,
                                Eigen::MatrixXd* vectors)
{
    if (!(beta < 0.0))
        throw DomainError("nu_branches: beta must be negative (inside a gap)");
    const SpMat Kb = macro.pencil(beta, 0.0);
    Ldlt fac(Kb);
    if (!fac.factorize(Kb))
        throw NumericalError("nu_branches: K - beta M_out is singular");
    const auto op = [&](const Vec& x) { return fac.solve(macro.M_in * x); };
    const LanczosResult lz = lanczos(op, Kb, k, Select::LargestAlgebraic, eig);
    std::vector<double> nu;
    for (int i = 0; i < lz.theta.size(); ++i)
        nu.push_back(lz.theta[i] > 0.0 ? 1.0 / lz.theta[i] : std::numeric_limits<double>::infinity());
    if (vectors != nullptr)
        *vectors = lz.ritz;
    return nu;  // theta descending, so nu ascending
}

DefectSolution defect_eigenproblem(std::shared_ptr<const MacroProblem> macro, const BetaEnsemble& ens,
                                   const Interval& gap, const DefectOptions& opt, const EigenOptions& eig)
{
    DefectSolution sol;
    sol.gap = gap;
    sol.macro = macro;
    const MacroProblem& mp = *macro;
    const double lo = gap.lo + opt.end_margin * std::max(1.0, std::abs(gap.lo));
    const double hi = gap.hi - opt.end_margin * std::max(1.0, std::abs(gap.hi));
    if (!(hi > lo))
        return sol;

    Ldlt fac(mp.op.K);
    std::map<double, int> cache;
    const auto count = [&](double lam) {
        const auto it = cache.find(lam);
        if (it != cache.end())
            return it->second;
        const double b = beta(ens, lam).value;
        double l = lam;
        int c = -1;
        for (int attempt = 0; attempt <= 3; ++attempt) {
            if (fac.factorize(mp.pencil(b, l))) {
                c = fac.inertia().negative;
                break;
            }
            l = lam + (attempt + 1) * 1e-12 * std::max(1.0, lam);
        }
        if (c < 0)
            throw NumericalError("defect_eigenproblem: singular pencil after perturbation");
        cache.emplace(lam, c);
        return c;
    };

    sol.count_low = count(lo);
    sol.count_high = count(hi);
    const int k_last = std::min(sol.count_high, sol.count_low + opt.m_max);
    std::vector<double> roots;
    for (int k = sol.count_low + 1; k <= k_last; ++k) {
        double a = lo;
        double b = hi;
        for (const auto& [lam, c] : cache) {
            if (c < k)
                a = std::max(a, lam);
            else
                b = std::min(b, lam);
        }
        while (b - a > opt.root_tol) {
            const double mid = 0.5 * (a + b);
            if (count(mid) >= k)
                b = mid;
            else
                a = mid;
        }
        roots.push_back(0.5 * (a + b));
    }

    for (std::size_t r = 0; r < roots.size(); ++r) {
        DefectEigenpair p;
        p.lambda0 = roots[r];
        p.branch = sol.count_low + static_cast<int>(r);  // zero-based branch index
        p.beta = beta(ens, p.lambda0).value;
        Eigen::MatrixXd vecs;
        const auto nu = nu_branches(mp, p.beta, p.branch + 1, eig, &vecs);
        Vec u = vecs.col(p.branch);
        u /= std::sqrt(u.dot(mp.op.M * u));
        Eigen::Index imax = 0;
        u.cwiseAbs().maxCoeff(&imax);
        if (u[imax] < 0.0)
            u = -u;
        const Vec Ku = mp.op.K * u;
        p.residual = (Ku - p.beta * (mp.M_out * u) - p.lambda0 * (mp.M_in * u)).norm() / Ku.norm();
        const double e = u.dot(Ku);
        p.energy_defect = std::abs(e - p.beta * u.dot(mp.M_out * u) - p.lambda0 * u.dot(mp.M_in * u)) / e;
        p.theta = theta_bound(p.beta, mp.A1hom);
        p.u0 = std::move(u);
        sol.pairs.push_back(std::move(p));
    }
    for (auto& p : sol.pairs) {
        int m = 0;
        for (const auto& q : sol.pairs)
            m += std::abs(q.lambda0 - p.lambda0) <= 1e-6 * std::max(1.0, p.lambda0) ? 1 : 0;
        p.multiplicity = m;
    }

    const int branches = std::max(opt.m_max, k_last);
    for (int t = 0; t < opt.trace_points; ++t) {
        NuSample s;
        s.lambda = lo + (hi - lo) * (t + 0.5) / opt.trace_points;
        s.beta = beta(ens, s.lambda).value;
        s.nu = nu_branches(mp, s.beta, branches, eig);
        sol.trace.push_back(std::move(s));
    }
    return sol;
}

namespace {

double jm(int m, double x) { return m < 0 ? (m % 2 ? -1.0 : 1.0) * std::cyl_bessel_j(-m, x) : std::cyl_bessel_j(m, x); }
double km(int m, double x) { return std::cyl_bessel_k(std::abs(m), x); }

} // namespace

std::vector<RadialRoot> radial_oracle(double a, double a2, double R, const std::function<double(double)>& beta_fn,
                                      const Interval& gap, int m_max, double step)
{
    std::vector<RadialRoot> out;
    const auto F = [&](int m, double lam) {
        const double b = beta_fn(lam);
        const double k = std::sqrt(lam / a2);
        const double kappa = std::sqrt(-b / a);
        const double djm = 0.5 * (jm(m - 1, k * R) - jm(m + 1, k * R));
        const double dkm = -0.5 * (km(m - 1, kappa * R) + km(m + 1, kappa * R));
        // Scaled by exp(kappa R) to keep K_m(kappa R) O(1).
        const double scale = std::exp(kappa * R);
        return scale * (a2 * k * djm * km(m, kappa * R) - a * kappa * dkm * jm(m, k * R));
    };
    const double lo = gap.lo + 1e-6 * std::max(1.0, gap.lo);
    const double hi = gap.hi - 1e-6 * std::max(1.0, gap.hi);
    for (int m = 0; m <= m_max; ++m) {
        double x0 = lo;
        double f0 = F(m, x0);
        for (double x1 = std::min(hi, lo + step);; x1 = std::min(hi, x1 + step)) {
            const double f1 = F(m, x1);
            if ((f0 < 0.0) != (f1 < 0.0)) {
                double a0 = x0, b0 = x1, fa = f0;
                for (int it = 0; it < 200 && b0 - a0 > 1e-12 * std::max(1.0, b0); ++it) {
                    const double mid = 0.5 * (a0 + b0);
                    const double fm = F(m, mid);
                    if ((fm < 0.0) == (fa < 0.0)) {
                        a0 = mid;
                        fa = fm;
                    } else {
                        b0 = mid;
                    }
                }
                out.push_back({0.5 * (a0 + b0), m, m == 0 ? 1 : 2});
            }
            x0 = x1;
            f0 = f1;
            if (x1 >= hi)
                break;
        }
    }
    std::sort(out.begin(), out.end(), [](const RadialRoot& x, const RadialRoot& y) { return x.lambda < y.lambda; });
    return out;
}

MicroscopicComponent microscopic_component(double lambda0, double u0_norm_sq, const BetaEnsemble& ens)
{
    MicroscopicComponent c;
    c.lambda0 = lambda0;
    c.u0_norm_sq = u0_norm_sq;
    if (lambda0 == 0.0 || !ens.table)
        return c;
    double sum = 0.0;
    for (double s : ens.scales)
        sum += b_integral(*ens.table, lambda0, s).value;
    c.mean_b = sum / static_cast<double>(ens.scales.size()) / ens.cell_area;
    c.mean_b2 = b_squared_mean(ens, lambda0);
    return c;
}

double theta_bound(double beta_lambda0, const Mat2& A1hom)
{
    if (!(beta_lambda0 < 0.0)) {
        std::ostringstream msg;
        msg << "theta_bound: beta(lambda0) = " << beta_lambda0 << " is not negative";
        throw DomainError(msg.str());
    }
    Eigen::SelfAdjointEigenSolver<Mat2> es(A1hom);
    return 0.95 * std::sqrt(-beta_lambda0 / es.eigenvalues().maxCoeff());
}

} // namespace hcd
