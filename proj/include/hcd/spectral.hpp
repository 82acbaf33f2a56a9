#pragma once

#include "hcd/eigensolver.hpp"
#include "hcd/fem.hpp"
#include "hcd/geometry.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hcd {

/// Dirichlet eigenpairs of one reference inclusion shape, with eigenfunction means.
struct DirichletModeTable {
    Shape shape;
    double h = 0.0;
    std::vector<double> eigenvalues;  // ascending
    std::vector<double> means;        // m_n = int phi_n, phi_n mass-normalized
    Eigen::MatrixXd modes;            // dof vectors of phi_n
    double area = 0.0;                // discrete |O|
    /// Exact sums over all discrete modes of m_n^2 / lam_n^(k+1), k = 0,1,2.
    std::array<double, 3> moments{};
    /// lam_1 recomputed at h/2 (NaN when not requested).
    double lambda1_half_h = 0.0;
    std::shared_ptr<const ReferenceShapeProblem> problem;

    int count() const { return static_cast<int>(eigenvalues.size()); }
    double lambda1() const { return eigenvalues.front(); }
    double bessel_sum() const;
    /// Eigenvalues whose means exceed 1e-6 in magnitude: the poles of int b_lam.
    std::vector<double> poles() const;
};

/// First N Dirichlet eigenpairs of `shape` placed in the cell [0,cell_side]^2.
DirichletModeTable dirichlet_modes(const Shape& shape, double h, int N, double cell_side = 1.0,
                                   double min_elements_across = 16.0, bool richardson = true);

struct BIntegral {
    double value = 0.0;        // accelerated eigen-expansion
    double truncated = 0.0;    // plain sum over the N tabulated modes
    double tail_bound = 0.0;   // |value - truncated| bound, (|O| - sum m_n^2) / (lam_N - lam)
    double remainder_bound = 0.0;  // bound on the error of `value`
};

/// int_O b_lam for the table shape scaled by `scale` (scale 1: the table shape itself).
/// Throws PoleProximityError within 1e-6*lam_1 of a pole.
BIntegral b_integral(const DirichletModeTable& table, double lambda, double scale = 1.0);

/// Direct solve of (K - lam M) b = load on the table's reference problem.
double b_integral_direct(const DirichletModeTable& table, double lambda);

/// Nodal b_lam (dof vector on the table's reference problem) by direct solve.
Vec b_field(const DirichletModeTable& table, double lambda);

/// Radius law sampled against a reference table.
struct BetaEnsemble {
    std::shared_ptr<const DirichletModeTable> table;
    std::vector<double> scales;  // r / r_ref per sample; one entry for a degenerate law
    double cell_area = 1.0;
    bool exact = true;           // degenerate law: no Monte-Carlo error
    std::string descriptor;

    std::vector<Interval> pole_bands() const;
};

BetaEnsemble make_ensemble(std::shared_ptr<const DirichletModeTable> table, const RandomMediumSpec& spec,
                           int mc_samples, std::uint64_t seed);

/// Ensemble with no inclusions: beta(lam) = lam.
BetaEnsemble empty_ensemble();

struct BetaValue {
    double value = 0.0;
    double stderr_ = 0.0;
};

BetaValue beta(const BetaEnsemble& ens, double lambda);

/// E[int b_lam^2] per cell, used for the two-scale norm of u_1.
double b_squared_mean(const BetaEnsemble& ens, double lambda);

struct BetaTable {
    std::vector<double> lambda;
    std::vector<double> beta;
    std::vector<double> stderr_;
    std::vector<Interval> poles;
    std::string descriptor;
};

/// Tabulates beta on `grid`, skipping nodes within the pole exclusion distance.
BetaTable tabulate_beta(const BetaEnsemble& ens, const std::vector<double>& grid);

struct GapSet {
    Interval range;
    std::vector<Interval> gaps;  // open intervals where the function is negative
    std::string provenance;

    bool empty() const { return gaps.empty(); }
    /// Gap containing lam, or an empty interval.
    Interval gap_containing(double lam) const;
};

/// Maximal intervals of `range` (away from the pole bands) where f < 0. Sign changes
/// found on a grid of spacing `step` are refined by bisection until the bracket is below
/// 1e-6 and |f| <= 1e-6 at the returned endpoint.
GapSet find_gaps(const std::function<double(double)>& f, const std::vector<Interval>& poles,
                 const Interval& range, double step, const std::string& provenance);

GapSet gap_intervals(const BetaEnsemble& ens, const Interval& range, double step = 0.05);

/// Window functional l_{lam,L}(x) on an unscaled realization, window centred at x.
double ell_window(const InclusionRealization& real, const DirichletModeTable& table, double lambda,
                  double L, Point x);

struct BetaInfEstimate {
    double lambda = 0.0;
    std::vector<double> Ls;
    std::vector<double> sup_values;
    double estimate = 0.0;
    bool decreasing_trend = true;
    std::uint64_t seed = 0;
};

/// Sliding-window supremum of l_{lam,L} on one realization of side `region_side`.
class BetaInfinityEstimator {
public:
    BetaInfinityEstimator(std::shared_ptr<const DirichletModeTable> table, const RandomMediumSpec& spec,
                          double region_side, std::uint64_t seed);

    BetaInfEstimate estimate(double lambda, const std::vector<double>& Ls) const;
    /// Value at the largest window size; the pointwise estimator of beta_inf.
    double operator()(double lambda, const std::vector<double>& Ls) const;
    const InclusionRealization& realization() const { return real_; }
    std::vector<Interval> pole_bands() const;

private:
    std::shared_ptr<const DirichletModeTable> table_;
    InclusionRealization real_;
    int cells_ = 0;
    std::vector<double> cell_scale_;  // per lattice cell, 0 when empty
};

BetaInfEstimate beta_infinity(double lambda, const RandomMediumSpec& spec,
                              std::shared_ptr<const DirichletModeTable> table, const std::vector<double>& Ls,
                              double region_side, std::uint64_t seed);

GapSet gap_set_G(const BetaInfinityEstimator& est, const std::vector<double>& Ls, const Interval& range,
                 double step = 0.05);

} // namespace hcd
