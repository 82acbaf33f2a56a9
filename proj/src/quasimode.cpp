#include "hcd/quasimode.hpp"

#include "hcd/sparse_ldlt.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hcd {

namespace {

std::span<const double> view(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

std::vector<int> label_elements(const Mesh& mesh, const ScaledGeometry& geom)
{
    std::vector<int> label(static_cast<std::size_t>(mesh.num_elements()), -1);
    const int ne = mesh.num_elements();
#pragma omp parallel for schedule(static)
    for (int e = 0; e < ne; ++e)
        label[static_cast<std::size_t>(e)] = geom.inclusion_at(mesh.element_center(e));
    return label;
}

double element_energy(const Mesh& mesh, const Vec& u, int e)
{
    const auto& em = ElementMatrices::get();
    const auto n = mesh.element_nodes(e % mesh.nx, e / mesh.nx);
    double s = 0.0;
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            s += (em.kxx[a][b] + em.kyy[a][b]) * u[n[a]] * u[n[b]];
    return s;
}

double element_mean(const Mesh& mesh, const Vec& u, int e)
{
    const auto n = mesh.element_nodes(e % mesh.nx, e / mesh.nx);
    return 0.25 * (u[n[0]] + u[n[1]] + u[n[2]] + u[n[3]]);
}

} // namespace

EpsProblem assemble_eps_problem(const InclusionRealization& real, double epsilon, const DefectSpec& defect,
                                const Box& box, double h, const Mat2& A1)
{
    EpsProblem p;
    p.epsilon = epsilon;
    p.geom = scale_and_filter(real, epsilon, defect);
    const Mesh mesh = build_mesh(box, h, Boundary::Dirichlet);
    p.op = assemble_operator(mesh, p.geom, A1, defect.empty() ? A1 : defect.A2);
    p.element_inclusion = label_elements(mesh, p.geom);
    p.defect_elements.assign(static_cast<std::size_t>(mesh.num_elements()), 0);
    for (int e = 0; e < mesh.num_elements(); ++e)
        p.defect_elements[static_cast<std::size_t>(e)] = defect.contains(mesh.element_center(e)) ? 1 : 0;
    return p;
}

HarmonicExtension harmonic_extension(const Mesh& mesh, const Vec& nodal, const ScaledGeometry& geom,
                                     double ring_width)
{
    HarmonicExtension out;
    const std::vector<int> label = label_elements(mesh, geom);
    std::vector<std::uint8_t> mask(label.size());
    for (std::size_t e = 0; e < label.size(); ++e)
        mask[e] = label[e] >= 0 ? 1 : 0;
    const auto free = interior_nodes(mesh, label);
    out.field = harmonic_fill(mesh, mask, free, nodal);

    // energy monitor: inclusion energy of u~ against the ring energy of u
    const std::size_t nk = geom.kept.size();
    std::vector<double> e_in(nk, 0.0), e_ring(nk, 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (label[static_cast<std::size_t>(e)] >= 0)
            e_in[static_cast<std::size_t>(label[static_cast<std::size_t>(e)])] += element_energy(mesh, out.field, e);
    for (std::size_t k = 0; k < nk; ++k) {
        const Shape& s = geom.kept[k];
        const Shape ring{s.kind, s.center, s.radius + ring_width};
        const Box bb = ring.bounding_box();
        const int i0 = std::max(0, static_cast<int>(std::floor((bb.x0 - mesh.box.x0) / mesh.h)));
        const int i1 = std::min(mesh.nx - 1, static_cast<int>(std::floor((bb.x1 - mesh.box.x0) / mesh.h)));
        const int j0 = std::max(0, static_cast<int>(std::floor((bb.y0 - mesh.box.y0) / mesh.h)));
        const int j1 = std::min(mesh.ny - 1, static_cast<int>(std::floor((bb.y1 - mesh.box.y0) / mesh.h)));
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                const int e = mesh.element_id(i, j);
                if (label[static_cast<std::size_t>(e)] < 0 && ring.contains(mesh.element_center(i, j)))
                    e_ring[k] += element_energy(mesh, nodal, e);
            }
    }
    for (std::size_t k = 0; k < nk; ++k) {
        if (e_in[k] <= 0.0)
            continue;
        ++out.inclusions;
        const double r = e_ring[k] > 0.0 ? std::sqrt(e_in[k] / e_ring[k]) : std::numeric_limits<double>::infinity();
        out.max_energy_ratio = std::max(out.max_energy_ratio, r);
    }
    return out;
}

Vec realize_b_eps(const Mesh& mesh, const ScaledGeometry& geom, double lambda0, const DirichletModeTable* table)
{
    const double eps = geom.epsilon;
    if (table != nullptr) {
        const double l1 = table->lambda1();
        for (const Shape& s : geom.kept) {
            const double scale = s.radius / eps / table->shape.radius;
            for (double p : table->poles()) {
                const double pole = p / (scale * scale);
                if (std::abs(lambda0 - pole) <= 1e-6 * l1 / (scale * scale)) {
                    std::ostringstream msg;
                    msg << "realize_b_eps: lambda0 = " << lambda0 << " is at the pole " << pole;
                    throw PoleProximityError(msg.str());
                }
            }
        }
    }
    Vec b = Vec::Zero(mesh.num_nodes());
    if (geom.kept.empty())
        return b;
    const std::vector<int> label = label_elements(mesh, geom);
    const auto free = interior_nodes(mesh, label);
    const DofMap dofs = DofMap::from_mask(mesh, free);
    if (dofs.size() == 0)
        return b;
    const int ne = mesh.num_elements();
    ElementFields fields = ElementFields::uniform(ne, Mat2::Zero(), 0.0);
    Vec load = Vec::Zero(dofs.size());
    const double q = 0.25 * mesh.h * mesh.h;
    for (int e = 0; e < ne; ++e) {
        if (label[static_cast<std::size_t>(e)] < 0)
            continue;
        fields.set(e, eps * eps * Mat2::Identity(), 1.0);
        for (int n : mesh.element_nodes(e % mesh.nx, e / mesh.nx)) {
            const int d = dofs.node_to_dof[static_cast<std::size_t>(n)];
            if (d >= 0)
                load[d] += q;
        }
    }
    const OperatorPair op = assemble_fields(mesh, dofs, fields);
    const SpMat A = shifted(op.K, op.M, lambda0);
    Ldlt f(A);
    if (!f.factorize(A))
        throw PoleProximityError("realize_b_eps: lambda0 is a discrete inclusion eigenvalue");
    const Vec x = f.solve(load);
    for (int d = 0; d < dofs.size(); ++d)
        b[dofs.dof_to_node[static_cast<std::size_t>(d)]] = x[d];
    return b;
}

double eta_cutoff(double r, double L)
{
    if (r <= 0.5 * L)
        return 1.0;
    if (r >= L)
        return 0.0;
    return (L - r) / (0.5 * L);
}

double xi_cutoff(double r, double R, double rho)
{
    return std::clamp((r - R - rho) / rho, 0.0, 1.0);
}

MacroMode transfer_mode(const MacroProblem& macro, const Vec& u0, double lambda0, const Mesh& mesh)
{
    MacroMode m;
    m.lambda0 = lambda0;
    const Vec src = macro.op.to_nodes(u0);
    const Mesh& mm = macro.op.mesh;
    const int nn = mesh.num_nodes();
    m.u0.resize(nn);
    m.grad_x.resize(nn);
    m.grad_y.resize(nn);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < nn; ++n) {
        const Point x = mesh.node(n);
        m.u0[n] = interpolate(mm, view(src), x);
        const Eigen::Vector2d g = gradient_at(mm, view(src), x);
        m.grad_x[n] = g[0];
        m.grad_y[n] = g[1];
    }
    m.grad_sup = std::sqrt((m.grad_x.array().square() + m.grad_y.array().square()).maxCoeff());
    return m;
}

Quasimode build_quasimode(const Mesh& mesh, const MacroMode& mode, const Vec& b_eps,
                          const std::array<CorrectorField, 2>& correctors, double eps, double defect_radius,
                          const CutoffSchedule& schedule)
{
    Quasimode q;
    q.eps = eps;
    q.L = schedule.L(eps);
    q.rho = schedule.rho(eps);
    if (!(q.rho >= 2.0 * mesh.h))
        throw ConfigError("build_quasimode: rho must be at least two mesh steps");
    // supp(1 - eta_L) = {|x| > L/2} must sit where xi_rho = 1
    if (!(0.5 * q.L >= defect_radius + 2.0 * q.rho))
        throw ConfigError("build_quasimode: L/2 must exceed R + 2 rho");
    const int nn = mesh.num_nodes();
    q.nodal.resize(nn);
    Vec micro(nn), corr(nn), corr_abs(nn);
    const Mesh& cm = correctors[0].mesh;
    const auto n0 = view(correctors[0].nodal);
    const auto n1 = view(correctors[1].nodal);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < nn; ++n) {
        const Point x = mesh.node(n);
        const double r = norm(x);
        const Point y{x.x / eps, x.y / eps};
        const double N0 = eps * interpolate(cm, n0, y);
        const double N1 = eps * interpolate(cm, n1, y);
        const double cut = eta_cutoff(r, q.L) * xi_cutoff(r, defect_radius, q.rho);
        micro[n] = mode.lambda0 * b_eps[n] * mode.u0[n];
        corr[n] = cut * (N0 * mode.grad_x[n] + N1 * mode.grad_y[n]);
        corr_abs[n] = r < q.L ? std::abs(N0) + std::abs(N1) : 0.0;
        q.nodal[n] = mode.u0[n] + micro[n] + corr[n];
    }
    q.corrector_l2 = std::sqrt(l2_norm_sq_nodal(mesh, view(corr_abs)));
    q.corrector_term_l2 = std::sqrt(l2_norm_sq_nodal(mesh, view(corr)));
    q.microscopic_l2 = std::sqrt(l2_norm_sq_nodal(mesh, view(micro)));
    return q;
}

Vec resolvent_image(const OperatorPair& op, const Vec& u, double lambda0)
{
    const SpMat A = op.K + op.M;
    const Vec rhs = (lambda0 + 1.0) * (op.M * u);
    if (rhs.norm() == 0.0)
        return Vec::Zero(u.size());
    Ldlt f(A);
    if (!f.factorize(A))
        throw NumericalError("resolvent_image: K + M factorization failed");
    Vec x = f.solve(rhs);
    double rel = (A * x - rhs).norm() / rhs.norm();
    for (int it = 0; it < 3 && rel > 1e-12; ++it) {
        x += f.solve(rhs - A * x);
        rel = (A * x - rhs).norm() / rhs.norm();
    }
    if (rel > 1e-10) {
        std::ostringstream msg;
        msg << "resolvent_image: relative residual " << rel;
        throw NumericalError(msg.str());
    }
    return x;
}

QuasimodeReport quasimode_report(const OperatorPair& op, const Vec& u, const Vec& u_hat, double lambda0,
                                 const Quasimode* qm, double grad_sup, double theta)
{
    QuasimodeReport r;
    r.lambda0 = lambda0;
    r.norm_u = std::sqrt(std::max(0.0, u.dot(op.M * u)));
    if (r.norm_u < 1e-8)
        throw DomainError("quasimode_report: degenerate input, ||u|| < 1e-8");
    const Vec d = u_hat - u;
    r.norm_diff = std::sqrt(std::max(0.0, d.dot(op.M * d)));
    r.certificate = (lambda0 + 1.0) * r.norm_diff / r.norm_u;
    r.grad_sup = grad_sup;
    if (qm != nullptr) {
        r.eps = qm->eps;
        r.rho = qm->rho;
        r.L = qm->L;
        r.corrector_l2 = qm->corrector_l2;
        r.rho_sqrt = std::sqrt(qm->rho);
        r.tail = std::sqrt(qm->L) * std::exp(-theta * qm->L);
        const Mesh& mesh = op.mesh;
        std::vector<std::uint8_t> inside(static_cast<std::size_t>(mesh.num_elements()));
        for (int e = 0; e < mesh.num_elements(); ++e)
            inside[static_cast<std::size_t>(e)] = norm(mesh.element_center(e)) < qm->L ? 1 : 0;
        const Vec un = op.to_nodes(u);
        r.locality = l2_norm_sq_nodal(mesh, view(un), inside) / (r.norm_u * r.norm_u);
    }
    return r;
}

DecayFit decay_fit(const Mesh& mesh, const Vec& nodal, double r_in, double r_out, double width,
                   double beta_inf_lambda0, const Mat2& A1)
{
    if (!(width > 0.0))
        throw ConfigError("decay_fit: annulus width must be positive");
    DecayFit fit;
    fit.width = width;
    const int na = static_cast<int>(std::floor((r_out - r_in) / width + 1e-9));
    if (na < 3)
        throw ConfigError("decay_fit: fewer than 3 annuli fit between the defect and the box");
    fit.radii.resize(static_cast<std::size_t>(na));
    fit.masses.assign(static_cast<std::size_t>(na), 0.0);
    fit.areas.assign(static_cast<std::size_t>(na), 0.0);
    for (int k = 0; k < na; ++k)
        fit.radii[static_cast<std::size_t>(k)] = r_in + k * width;
    const auto& em = ElementMatrices::get();
    const double h2 = mesh.h * mesh.h;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double r = norm(mesh.element_center(e));
        const int k = static_cast<int>(std::floor((r - r_in) / width));
        if (r < r_in || k >= na)
            continue;
        const auto n = mesh.element_nodes(e % mesh.nx, e / mesh.nx);
        double s = 0.0;
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b)
                s += em.mass_unit[a][b] * nodal[n[a]] * nodal[n[b]];
        fit.masses[static_cast<std::size_t>(k)] += s * h2;
        fit.areas[static_cast<std::size_t>(k)] += h2;
    }
    Eigen::MatrixXd X(na, 2);
    Vec y(na);
    for (int k = 0; k < na; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        if (!(fit.masses[uk] > 0.0))
            throw NumericalError("decay_fit: empty annulus mass");
        X(k, 0) = 1.0;
        X(k, 1) = fit.radii[uk] + 0.5 * width;
        y[k] = std::log(fit.masses[uk] / fit.areas[uk]);
    }
    const Eigen::Vector2d c = X.colPivHouseholderQr().solve(y);
    fit.alpha = -0.5 * c[1];
    fit.fit_residual = std::sqrt((X * c - y).squaredNorm() / na);
    Eigen::SelfAdjointEigenSolver<Mat2> es(A1);
    fit.gamma = es.eigenvalues().maxCoeff();
    fit.bound = std::sqrt(std::abs(beta_inf_lambda0) / fit.gamma);
    return fit;
}

TwoScaleReport two_scale_diagnostics(const EpsProblem& problem, const Vec& u, double lambda_eps,
                                     const MacroMode& mode, const Vec& b_eps, double ring_width)
{
    TwoScaleReport rep;
    const OperatorPair& op = problem.op;
    const Mesh& mesh = op.mesh;
    const double nu = std::sqrt(u.dot(op.M * u));
    if (!(nu > 0.0) || !std::isfinite(nu))
        throw NumericalError("two_scale_diagnostics: eigenvector normalization failed");
    Vec un = op.to_nodes(u) / nu;

    // limit profile u0 (1 + lambda0 b), scaled to unit norm; u0 scaled alike
    Vec v0 = mode.u0.array() * (1.0 + mode.lambda0 * b_eps.array());
    const Vec v0d = op.from_nodes(v0);
    const double nv = std::sqrt(v0d.dot(op.M * v0d));
    if (!(nv > 0.0))
        throw NumericalError("two_scale_diagnostics: macroscopic mode vanishes on the eps mesh");
    v0 /= nv;
    const Vec u0 = mode.u0 / nv;

    double overlap = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (problem.defect_elements[static_cast<std::size_t>(e)])
            overlap += element_mean(mesh, un, e) * element_mean(mesh, u0, e);
    rep.sign = overlap < 0.0 ? -1.0 : 1.0;
    un *= rep.sign;

    const HarmonicExtension ext = harmonic_extension(mesh, un, problem.geom, ring_width);
    std::vector<std::uint8_t> outside(problem.element_inclusion.size());
    for (std::size_t e = 0; e < outside.size(); ++e)
        outside[e] = problem.element_inclusion[e] < 0 ? 1 : 0;
    const Vec diff = ext.field - u0;
    rep.l2_error = std::sqrt(l2_norm_sq_nodal(mesh, view(diff), outside));

    const std::size_t nk = problem.geom.kept.size();
    std::vector<double> meas(nk, 0.0), pred(nk, 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const int k = problem.element_inclusion[static_cast<std::size_t>(e)];
        if (k < 0)
            continue;
        meas[static_cast<std::size_t>(k)] += element_mean(mesh, un, e);
        pred[static_cast<std::size_t>(k)] += element_mean(mesh, v0, e);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < nk; ++k) {
        num += std::abs(meas[k] - pred[k]);
        den += std::abs(pred[k]);
    }
    rep.amplification_error = den > 0.0 ? num / den : 0.0;
    rep.eigen_error = std::abs(lambda_eps - mode.lambda0);
    return rep;
}

double projection_mass(const OperatorPair& op, const Vec& u, const SpectralWindowResult& window)
{
    if (!window.complete)
        throw NumericalError("projection_mass: window decomposition is incomplete");
    const Vec mu = op.M * u;
    const double nu = std::sqrt(u.dot(mu));
    if (!(nu > 0.0))
        throw DomainError("projection_mass: zero vector");
    if (window.vectors.cols() == 0)
        return 0.0;
    return (window.vectors.transpose() * mu).norm() / nu;
}

double projection_mass(const OperatorPair& op, const Vec& u, const Interval& window, const EigenOptions& opt)
{
    const Vec mu = op.M * u;
    const double nu = std::sqrt(u.dot(mu));
    if (!(nu > 0.0))
        throw DomainError("projection_mass: zero vector");
    double sq = 0.0;
    for_each_window_slice(op.K, op.M, window, opt, [&](const SpectralWindowResult& r) {
        if (!r.complete)
            throw NumericalError("projection_mass: window slice decomposition is incomplete");
        if (r.vectors.cols() > 0)
            sq += (r.vectors.transpose() * mu).squaredNorm();
    });
    return std::sqrt(sq) / nu;
}

ProjectionBounds projection_mass_bounds(const OperatorPair& op, const Vec& u, const Interval& window, int steps)
{
    ProjectionBounds pb;
    if (window.empty())
        return {0.0, 0.0, 0.0, 0};
    const SpMat& K = op.K;
    const SpMat& M = op.M;
    const double sigma = window.center();
    const double radius = 0.5 * window.width();
    Ldlt fac(shifted(K, M, sigma));
    factorize_shifted(fac, K, M, sigma);
    const int n = static_cast<int>(u.size());
    steps = std::min(steps, n);
    Eigen::MatrixXd Q(n, steps);
    std::vector<double> alpha, beta;
    Vec q = u;
    double nq = std::sqrt(q.dot(M * q));
    if (!(nq > 0.0))
        throw DomainError("projection_mass_bounds: zero vector");
    q /= nq;
    bool exhausted = false;  // Krylov space invariant: the quadrature is the measure itself
    for (int j = 0; j < steps; ++j) {
        Q.col(j) = q;
        Vec w = fac.solve(M * q);
        const double a = w.dot(M * q);
        alpha.push_back(a);
        // full reorthogonalization, twice
        for (int pass = 0; pass < 2; ++pass) {
            const Vec c = Q.leftCols(j + 1).transpose() * (M * w);
            w -= Q.leftCols(j + 1) * c;
        }
        const double b = std::sqrt(std::max(0.0, w.dot(M * w)));
        pb.steps = j + 1;
        if (b <= 1e-12 * std::max(1.0, std::abs(a))) {
            exhausted = true;
            break;
        }
        if (j + 1 == steps)
            break;
        beta.push_back(b);
        q = w / b;
    }
    const int k = pb.steps;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        T(i, i) = alpha[static_cast<std::size_t>(i)];
        if (i + 1 < k) {
            T(i, i + 1) = beta[static_cast<std::size_t>(i)];
            T(i + 1, i) = beta[static_cast<std::size_t>(i)];
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const Vec tau = es.eigenvalues();  // ascending
    const Vec wgt = es.eigenvectors().row(0).transpose().array().square();
    const double t = 1.0 / radius;

    // F(x) = mu((-inf, x]); CMS: sum_{i<j} w_i <= F(tau_j - 0) <= F(tau_j) <= sum_{i<=j} w_i
    const auto lower_F = [&](double x) {  // lower bound on F(x)
        double sum = 0.0, last = 0.0;
        for (int i = 0; i < k; ++i)
            if (tau[i] <= x) {
                sum += wgt[i];
                last = wgt[i];
            }
        return sum - last;
    };
    const auto upper_F_left = [&](double x) {  // upper bound on F(x - 0)
        double sum = 0.0, next = 0.0;
        bool found = false;
        for (int i = 0; i < k; ++i) {
            if (tau[i] < x) {
                sum += wgt[i];
            } else if (!found) {
                next = wgt[i];
                found = true;
            }
        }
        return sum + next;
    };
    const auto upper_F = [&](double x) {  // upper bound on F(x)
        double sum = 0.0, next = 0.0;
        bool found = false;
        for (int i = 0; i < k; ++i) {
            if (tau[i] <= x) {
                sum += wgt[i];
            } else if (!found) {
                next = wgt[i];
                found = true;
            }
        }
        return sum + next;
    };
    const auto lower_F_left = [&](double x) {  // lower bound on F(x - 0)
        double sum = 0.0, last = 0.0;
        for (int i = 0; i < k; ++i)
            if (tau[i] < x) {
                sum += wgt[i];
                last = wgt[i];
            }
        return sum - last;
    };
    // mass of |tau| >= t is F(-t) + 1 - F(t - 0)
    pb.lower = std::clamp(lower_F(-t) + 1.0 - upper_F_left(t), 0.0, 1.0);
    pb.upper = std::clamp(upper_F(-t) + 1.0 - lower_F_left(t), 0.0, 1.0);
    pb.estimate = 0.0;
    for (int i = 0; i < k; ++i)
        pb.estimate += std::abs(tau[i]) >= t ? wgt[i] : 0.0;
    if (exhausted)
        pb.lower = pb.upper = std::clamp(pb.estimate, 0.0, 1.0);
    pb.lower = std::sqrt(pb.lower);
    pb.upper = std::sqrt(pb.upper);
    pb.estimate = std::sqrt(pb.estimate);
    return pb;
}

} // namespace hcd
