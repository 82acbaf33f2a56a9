#include "hcd/spectral.hpp"

#include "hcd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace hcd {

namespace {

constexpr double kMeanThreshold = 1e-6;
constexpr double kPoleExclusion = 1e-6;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// b_lam = (K - lam M)^{-1} load on the reference problem.
Vec solve_b(const ReferenceShapeProblem& p, double lambda)
{
    Ldlt f(shifted(p.op.K, p.op.M, lambda));
    if (!f.factorize(shifted(p.op.K, p.op.M, lambda)))
        throw PoleProximityError("b_lambda: singular shifted operator");
    return f.solve(p.load);
}

} // namespace

double DirichletModeTable::bessel_sum() const
{
    double s = 0.0;
    for (double m : means)
        s += m * m;
    return s;
}

std::vector<double> DirichletModeTable::poles() const
{
    std::vector<double> out;
    for (std::size_t n = 0; n < eigenvalues.size(); ++n)
        if (std::abs(means[n]) > kMeanThreshold)
            out.push_back(eigenvalues[n]);
    return out;
}

DirichletModeTable dirichlet_modes(const Shape& shape, double h, int N, double cell_side,
                                   double min_elements_across, bool richardson)
{
    auto prob = std::make_shared<ReferenceShapeProblem>(
        assemble_reference_shape(shape, h, cell_side, min_elements_across));
    const int n = prob->op.size();
    if (N < 1 || N > n / 4) {
        std::ostringstream msg;
        msg << "dirichlet_modes: N = " << N << " exceeds dof/4 = " << n / 4;
        throw ConfigError(msg.str());
    }
    const SpMat& K = prob->op.K;
    const SpMat& M = prob->op.M;

    EigenOptions opt;
    opt.tol = 1e-10;
    opt.k_max = N;
    const auto res = eigs_nearest(K, M, 0.0, N, opt);
    if (res.converged_count < N || static_cast<int>(res.eigenvalues.size()) < N) {
        std::ostringstream msg;
        msg << "dirichlet_modes: converged " << res.converged_count << " of " << N << " modes";
        throw NumericalError(msg.str());
    }

    DirichletModeTable t;
    t.shape = shape;
    t.h = h;
    t.area = prob->discrete_area;
    t.eigenvalues = res.eigenvalues;
    t.modes = res.vectors;
    t.means.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        Vec phi = t.modes.col(i);
        double m = prob->load.dot(phi);
        // Orient so that means are nonnegative; zero-mean modes keep the solver sign.
        if (m < 0.0) {
            phi = -phi;
            t.modes.col(i) = phi;
            m = -m;
        }
        t.means[static_cast<std::size_t>(i)] = m;
    }

    Ldlt fk(K);
    if (!fk.factorize(K))
        throw NumericalError("dirichlet_modes: stiffness factorization failed");
    const Vec b0 = fk.solve(prob->load);
    const Vec mb0 = M * b0;
    const Vec b1 = fk.solve(mb0);
    t.moments = {prob->load.dot(b0), b0.dot(mb0), b1.dot(mb0)};

    t.lambda1_half_h = std::numeric_limits<double>::quiet_NaN();
    if (richardson) {
        const auto fine = assemble_reference_shape(shape, 0.5 * h, cell_side, min_elements_across);
        EigenOptions o1;
        o1.tol = 1e-10;
        const auto r1 = eigs_nearest(fine.op.K, fine.op.M, 0.0, 1, o1);
        if (!r1.eigenvalues.empty())
            t.lambda1_half_h = r1.eigenvalues.front();
    }
    t.problem = std::move(prob);
    return t;
}

BIntegral b_integral(const DirichletModeTable& table, double lambda, double scale)
{
    if (!(scale > 0.0))
        throw std::invalid_argument("b_integral: scale must be positive");
    const double mu = lambda * scale * scale;
    const double lam1 = table.lambda1();
    for (std::size_t n = 0; n < table.eigenvalues.size(); ++n) {
        if (std::abs(table.means[n]) > kMeanThreshold
            && std::abs(mu - table.eigenvalues[n]) <= kPoleExclusion * lam1) {
            std::ostringstream msg;
            msg << "lambda = " << lambda << " lies within " << kPoleExclusion << "*lambda_1 of the pole "
                << table.eigenvalues[n] / (scale * scale);
            throw PoleProximityError(msg.str());
        }
    }
    const double lamN = table.eigenvalues.back();
    if (mu >= lamN) {
        std::ostringstream msg;
        msg << "lambda = " << lambda << " is beyond the tabulated modes (lambda_N = " << lamN / (scale * scale)
            << ")";
        throw DomainError(msg.str());
    }
    const auto& s = table.moments;
    double head = 0.0;
    double plain = 0.0;
    double mass = 0.0;
    for (std::size_t n = 0; n < table.eigenvalues.size(); ++n) {
        const double l = table.eigenvalues[n];
        const double m2 = table.means[n] * table.means[n];
        head += m2 / (l * l * l * (l - mu));
        plain += m2 / (l - mu);
        mass += m2;
    }
    const double rest = std::max(0.0, table.area - mass);
    const double s4 = std::pow(scale, 4);
    BIntegral out;
    out.value = s4 * (s[0] + mu * s[1] + mu * mu * s[2] + mu * mu * mu * head);
    out.truncated = s4 * plain;
    out.tail_bound = s4 * rest / (lamN - mu);
    out.remainder_bound = s4 * std::abs(mu * mu * mu) * rest / (lamN * lamN * lamN * (lamN - mu));
    return out;
}

namespace {

/// d/dmu of the accelerated expansion: sum over modes of m_n^2 / (lam_n - mu)^2.
double b_integral_derivative(const DirichletModeTable& table, double mu)
{
    const auto& s = table.moments;
    double d = s[1] + 2.0 * mu * s[2];
    for (std::size_t n = 0; n < table.eigenvalues.size(); ++n) {
        const double l = table.eigenvalues[n];
        const double m2 = table.means[n] * table.means[n];
        const double l3 = l * l * l;
        d += m2 * (3.0 * mu * mu / (l3 * (l - mu)) + mu * mu * mu / (l3 * (l - mu) * (l - mu)));
    }
    return d;
}

} // namespace

double b_integral_direct(const DirichletModeTable& table, double lambda)
{
    return table.problem->load.dot(solve_b(*table.problem, lambda));
}

Vec b_field(const DirichletModeTable& table, double lambda) { return solve_b(*table.problem, lambda); }

std::vector<Interval> BetaEnsemble::pole_bands() const
{
    std::vector<Interval> out;
    if (!table || scales.empty())
        return out;
    const auto [smin, smax] = std::minmax_element(scales.begin(), scales.end());
    for (double p : table->poles())
        out.push_back({p / (*smax * *smax), p / (*smin * *smin)});
    std::sort(out.begin(), out.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    return out;
}

BetaEnsemble make_ensemble(std::shared_ptr<const DirichletModeTable> table, const RandomMediumSpec& spec,
                           int mc_samples, std::uint64_t seed)
{
    spec.validate();
    if (table->shape.kind != spec.shape)
        throw ConfigError("make_ensemble: table shape kind differs from the ensemble shape");
    BetaEnsemble e;
    const double rref = table->shape.radius;
    e.cell_area = spec.cell_size * spec.cell_size;
    std::ostringstream d;
    d << to_string(spec.shape) << " r~U[" << spec.r_min << "," << spec.r_max << "]";
    if (spec.r_min == spec.r_max) {
        e.scales = {spec.r_min / rref};
        e.exact = true;
        d << " exact";
    } else {
        if (mc_samples < 2)
            throw ConfigError("make_ensemble: Monte-Carlo needs at least 2 samples");
        std::mt19937_64 rng(seed);
        e.scales.resize(static_cast<std::size_t>(mc_samples));
        for (auto& s : e.scales)
            s = (spec.r_min + (spec.r_max - spec.r_min) * uniform01(rng)) / rref;
        e.exact = false;
        d << " mc=" << mc_samples << " seed=" << seed;
    }
    e.descriptor = d.str();
    e.table = std::move(table);
    return e;
}

BetaEnsemble empty_ensemble()
{
    BetaEnsemble e;
    e.descriptor = "no inclusions";
    return e;
}

BetaValue beta(const BetaEnsemble& ens, double lambda)
{
    BetaValue out{lambda, 0.0};
    if (!ens.table || ens.scales.empty() || lambda == 0.0)
        return out;
    double sum = 0.0;
    double sq = 0.0;
    for (double s : ens.scales) {
        const double v = b_integral(*ens.table, lambda, s).value;
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(ens.scales.size());
    const double mean = sum / n;
    out.value = lambda + lambda * lambda * mean / ens.cell_area;
    if (!ens.exact) {
        const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
        out.stderr_ = lambda * lambda * std::sqrt(var / n) / ens.cell_area;
    }
    return out;
}

double b_squared_mean(const BetaEnsemble& ens, double lambda)
{
    if (!ens.table || ens.scales.empty())
        return 0.0;
    double sum = 0.0;
    for (double s : ens.scales) {
        (void)b_integral(*ens.table, lambda, s);  // pole checks
        sum += std::pow(s, 6) * b_integral_derivative(*ens.table, lambda * s * s);
    }
    return sum / static_cast<double>(ens.scales.size()) / ens.cell_area;
}

BetaTable tabulate_beta(const BetaEnsemble& ens, const std::vector<double>& grid)
{
    BetaTable t;
    t.poles = ens.pole_bands();
    t.descriptor = ens.descriptor;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> se(grid.size(), 0.0);
    auto vals = kernels::map_grid(std::span<const double>(grid), [&](double lam) {
        for (const auto& p : t.poles)
            if (lam >= p.lo && lam <= p.hi)
                return nan;
        try {
            return beta(ens, lam).value;
        } catch (const std::exception&) {
            return nan;
        }
    });
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (std::isnan(vals[i]))
            continue;
        t.lambda.push_back(grid[i]);
        t.beta.push_back(vals[i]);
        t.stderr_.push_back(beta(ens, grid[i]).stderr_);
    }
    return t;
}

Interval GapSet::gap_containing(double lam) const
{
    for (const auto& g : gaps)
        if (lam > g.lo && lam < g.hi)
            return g;
    return {1.0, 0.0};
}

namespace {

double bisect_root(const std::function<double(double)>& f, double lo, double hi, double flo)
{
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (hi - lo <= 1e-6 && std::abs(fm) <= 1e-6)
            break;
        if (fm == 0.0)
            break;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid)))
            break;
    }
    return mid;
}

} // namespace

GapSet find_gaps(const std::function<double(double)>& f, const std::vector<Interval>& poles,
                 const Interval& range, double step, const std::string& provenance)
{
    GapSet out;
    out.range = range;
    out.provenance = provenance;
    if (range.empty() || range.width() == 0.0)
        return out;
    if (!(step > 0.0))
        throw std::invalid_argument("find_gaps: step must be positive");

    struct Segment {
        double a, b;
        bool a_pole, b_pole;
    };
    std::vector<Interval> sorted = poles;
    std::sort(sorted.begin(), sorted.end(), [](const Interval& x, const Interval& y) { return x.lo < y.lo; });
    std::vector<Segment> segs;
    double a = range.lo;
    bool a_pole = false;
    for (const auto& p : sorted) {
        if (p.hi < range.lo)
            continue;
        if (p.lo > range.hi)
            break;
        if (p.lo > a)
            segs.push_back({a, p.lo, a_pole, true});
        a = std::max(a, p.hi);
        a_pole = true;
    }
    if (range.hi > a)
        segs.push_back({a, range.hi, a_pole, false});

    for (const auto& s : segs) {
        const double pad = kPoleExclusion * std::max(1.0, std::abs(s.b));
        const double x0 = s.a_pole ? s.a + 2.0 * pad : s.a;
        const double x1 = s.b_pole ? s.b - 2.0 * pad : s.b;
        if (x1 <= x0)
            continue;
        std::vector<double> xs{x0};
        for (double x = std::floor(x0 / step + 1.0) * step; x < x1; x += step)
            xs.push_back(x);
        xs.push_back(x1);
        std::vector<double> fx;
        std::vector<double> px;
        for (double x : xs) {
            try {
                const double v = f(x);
                if (std::isfinite(v)) {
                    px.push_back(x);
                    fx.push_back(v);
                }
            } catch (const std::exception&) {
            }
        }
        if (px.empty())
            continue;
        bool in_gap = fx.front() < 0.0;
        double start = s.a;
        for (std::size_t i = 0; i + 1 < px.size(); ++i) {
            const bool neg_next = fx[i + 1] < 0.0;
            if (neg_next == in_gap)
                continue;
            const double r = bisect_root(f, px[i], px[i + 1], fx[i]);
            if (in_gap)
                out.gaps.push_back({start, r});
            else
                start = r;
            in_gap = neg_next;
        }
        if (in_gap)
            out.gaps.push_back({start, s.b});
    }
    return out;
}

GapSet gap_intervals(const BetaEnsemble& ens, const Interval& range, double step)
{
    return find_gaps([&](double lam) { return beta(ens, lam).value; }, ens.pole_bands(), range, step, "beta");
}

double ell_window(const InclusionRealization& real, const DirichletModeTable& table, double lambda,
                  double L, Point x)
{
    const Box w{x.x - 0.5 * L, x.y - 0.5 * L, x.x + 0.5 * L, x.y + 0.5 * L};
    if (!real.region.contains(w))
        throw DomainError("ell_window: window exceeds the realization region");
    if (lambda == 0.0)
        return 0.0;
    const double rref = table.shape.radius;
    const auto& prob = *table.problem;
    const Mesh& mesh = prob.op.mesh;
    const double quarter_h2 = 0.25 * mesh.h * mesh.h;
    double mass = 0.0;
    for (const auto& inc : real.inclusions) {
        const Box bb = inc.shape.bounding_box();
        if (bb.x1 <= w.x0 || bb.x0 >= w.x1 || bb.y1 <= w.y0 || bb.y0 >= w.y1)
            continue;
        const double s = inc.shape.radius / rref;
        if (w.contains(bb)) {
            mass += b_integral(table, lambda, s).value;
            continue;
        }
        // Partial overlap: midpoint-clipped quadrature of the discrete b field.
        (void)b_integral(table, lambda, s);
        const Vec nodal = prob.op.to_nodes(solve_b(prob, lambda * s * s));
        double part = 0.0;
        for (int e = 0; e < mesh.num_elements(); ++e) {
            if (!prob.inside[static_cast<std::size_t>(e)])
                continue;
            const Point c = mesh.element_center(e);
            const Point p{inc.shape.center.x + s * (c.x - table.shape.center.x),
                          inc.shape.center.y + s * (c.y - table.shape.center.y)};
            if (!w.contains(p))
                continue;
            const auto nodes = mesh.element_nodes(e % mesh.nx, e / mesh.nx);
            double sum = 0.0;
            for (int v : nodes)
                sum += nodal[v];
            part += quarter_h2 * sum;
        }
        mass += std::pow(s, 4) * part;
    }
    return lambda + lambda * lambda * mass / (L * L);
}

BetaInfinityEstimator::BetaInfinityEstimator(std::shared_ptr<const DirichletModeTable> table,
                                             const RandomMediumSpec& spec, double region_side,
                                             std::uint64_t seed)
    : table_(std::move(table))
{
    cells_ = static_cast<int>(std::lround(region_side / spec.cell_size));
    if (cells_ < 1 || std::abs(cells_ * spec.cell_size - region_side) > 1e-9)
        throw ConfigError("beta_infinity: region side must be a whole number of cells");
    if (spec.cell_size != 1.0)
        throw ConfigError("beta_infinity: unit cells expected");
    real_ = sample_realization(spec, {0.0, 0.0, region_side, region_side}, seed);
    cell_scale_.assign(static_cast<std::size_t>(cells_) * static_cast<std::size_t>(cells_), 0.0);
    for (const auto& inc : real_.inclusions)
        cell_scale_[static_cast<std::size_t>(inc.cell_j) * static_cast<std::size_t>(cells_)
                    + static_cast<std::size_t>(inc.cell_i)]
            = inc.shape.radius / table_->shape.radius;
}

std::vector<Interval> BetaInfinityEstimator::pole_bands() const
{
    double smin = std::numeric_limits<double>::infinity();
    double smax = 0.0;
    for (double s : cell_scale_) {
        if (s > 0.0) {
            smin = std::min(smin, s);
            smax = std::max(smax, s);
        }
    }
    std::vector<Interval> out;
    if (smax == 0.0)
        return out;
    for (double p : table_->poles())
        out.push_back({p / (smax * smax), p / (smin * smin)});
    return out;
}

BetaInfEstimate BetaInfinityEstimator::estimate(double lambda, const std::vector<double>& Ls) const
{
    BetaInfEstimate est;
    est.lambda = lambda;
    est.Ls = Ls;
    est.seed = real_.seed;
    if (Ls.empty())
        throw ConfigError("beta_infinity: no window sizes");
    for (double L : Ls)
        if (!(L > 0.0) || L > 0.5 * cells_)
            throw ConfigError("beta_infinity: window sizes must lie in (0, region side / 2]");

    std::vector<double> mass(cell_scale_.size(), 0.0);
    for (std::size_t c = 0; c < mass.size(); ++c)
        if (cell_scale_[c] > 0.0)
            mass[c] = b_integral(*table_, lambda, cell_scale_[c]).value;
    const auto table = kernels::prefix_sums(mass, cells_, cells_);

    for (double L : Ls) {
        double sup = -std::numeric_limits<double>::infinity();
        const double stride = 0.25 * L;
        const bool aligned = std::abs(stride - std::round(stride)) < 1e-12 && std::round(stride) >= 1.0;
        if (lambda == 0.0) {
            sup = 0.0;
        } else if (aligned) {
            const int w = static_cast<int>(std::lround(L));
            const double best = kernels::max_window_sum(table, cells_, cells_, w, static_cast<int>(std::lround(stride)));
            sup = lambda + lambda * lambda * best / (L * L);
        } else {
            for (double y = 0.5 * L; y <= cells_ - 0.5 * L + 1e-12; y += stride)
                for (double x = 0.5 * L; x <= cells_ - 0.5 * L + 1e-12; x += stride)
                    sup = std::max(sup, ell_window(real_, *table_, lambda, L, {x, y}));
        }
        est.sup_values.push_back(sup);
    }
    for (std::size_t i = 1; i < est.sup_values.size(); ++i)
        if (est.sup_values[i] > est.sup_values[i - 1] + 1e-12 * std::max(1.0, std::abs(est.sup_values[i - 1])))
            est.decreasing_trend = false;
    const auto largest = std::max_element(Ls.begin(), Ls.end()) - Ls.begin();
    est.estimate = est.sup_values[static_cast<std::size_t>(largest)];
    return est;
}

double BetaInfinityEstimator::operator()(double lambda, const std::vector<double>& Ls) const
{
    // only the largest window enters the estimate
    if (Ls.empty())
        throw ConfigError("beta_infinity: no window sizes");
    return estimate(lambda, {*std::max_element(Ls.begin(), Ls.end())}).estimate;
}

BetaInfEstimate beta_infinity(double lambda, const RandomMediumSpec& spec,
                              std::shared_ptr<const DirichletModeTable> table, const std::vector<double>& Ls,
                              double region_side, std::uint64_t seed)
{
    return BetaInfinityEstimator(std::move(table), spec, region_side, seed).estimate(lambda, Ls);
}

GapSet gap_set_G(const BetaInfinityEstimator& est, const std::vector<double>& Ls, const Interval& range,
                 double step)
{
    return find_gaps([&](double lam) { return est(lam, Ls); }, est.pole_bands(), range, step, "beta_inf");
}

} // namespace hcd
